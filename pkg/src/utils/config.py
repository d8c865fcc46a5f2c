import os
from pathlib import Path

VERSION = "0.3.0"


class AppConfig:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(AppConfig, cls).__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return
        self.project_root = self.set_project_root_env_var()
        self.threads = self._read_threads()
        self._initialized = True

    def set_project_root_env_var(self) -> str:
        current_file = Path(__file__).resolve()
        project_root = current_file.parents[2]
        os.environ.setdefault("STOQBELL_ROOT", str(project_root))
        return str(project_root)

    def _read_threads(self) -> int:
        raw = os.getenv("STOQBELL_THREADS", "0")
        try:
            return max(int(raw), 0)
        except ValueError:
            return 0

    def set_threads(self, threads: int) -> None:
        self.threads = max(int(threads), 0)

    def get_config(self) -> dict:
        return {
            "root": self.project_root,
            "version": VERSION,
            # Absolute slack on off-diagonal band entries
            "stoq_tolerance": 1e-10,
            "feasibility_tolerance": 1e-9,
            # Singular values below rank_rtol * sigma_max count as null
            "rank_rtol": 1e-10,
            "redundancy_tolerance": 1e-8,
            "full_space_max_n": 8,
            "dense_eig_max_dim": 2000,
            # 0 = pick from os.cpu_count()
            "threads": self.threads,
            "log_level": os.getenv("STOQBELL_LOG_LEVEL", "INFO"),
        }

    def worker_count(self) -> int:
        if self.threads > 0:
            return self.threads
        return os.cpu_count() or 1


CONFIG = AppConfig().get_config()
