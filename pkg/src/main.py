import sys

from cli import run
from utils.config import AppConfig


def main():
    AppConfig()
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
