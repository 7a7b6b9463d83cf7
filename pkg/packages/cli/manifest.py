"""Run manifest written before and after every command."""

from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from packages.engine.core.mcmc.posterior import LIBRARY_VERSION
from packages.shared.config import get_env_vars
from packages.shared.utils import atomic_write_json, canonical_hash, get_system_info, get_timestamp


class RunManifest(BaseModel):
    command: str
    config_hash: str
    seed: int
    library_version: str = LIBRARY_VERSION
    started_at: str = Field(default_factory=get_timestamp)
    finished_at: Optional[str] = None
    status: str = "running"
    outputs: List[str] = Field(default_factory=list)
    error: Optional[str] = None
    system: Dict[str, Any] = Field(default_factory=get_system_info)
    environment: Dict[str, Any] = Field(default_factory=get_env_vars)

    @classmethod
    def start(cls, command: str, payload: Dict[str, Any], seed: int) -> "RunManifest":
        return cls(command=command, config_hash=canonical_hash(payload), seed=seed)

    def finish(self, outputs: List[Path], status: str = "completed", error: Optional[str] = None) -> "RunManifest":
        self.outputs = [str(path) for path in outputs]
        self.status = status
        self.error = error
        self.finished_at = get_timestamp()
        return self

    def write(self, path: Path) -> Path:
        return atomic_write_json(path, self.model_dump(mode="json"))
