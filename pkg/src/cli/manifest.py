from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

from utils.config import VERSION
from utils.serialization import dump_json

SKIPPED_ARGS = {"handler", "verbose"}


def _jsonable(value: Any) -> Any:
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to rerun a command: its name, parameters, version and seed."""

    command: str
    parameters: dict
    version: str = VERSION
    seed: Optional[int] = None
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    @classmethod
    def from_args(cls, args, seed: Optional[int] = None) -> "RunManifest":
        parameters = {
            key: _jsonable(value) for key, value in sorted(vars(args).items()) if key not in SKIPPED_ARGS
        }
        return cls(args.command, parameters, seed=seed)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "parameters": self.parameters,
            "version": self.version,
            "seed": self.seed,
            "timestamp": self.timestamp,
        }

    def stamp(self, payload: dict) -> dict:
        return {**payload, "manifest": self.to_dict()}

    def write_sidecar(self, out: str | Path) -> Path:
        out = Path(out)
        return dump_json(self.to_dict(), out.with_name(out.name + ".manifest.json"))
