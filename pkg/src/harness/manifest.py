"""
Run manifests: the resolved configuration, seed, tool version and input
digests written next to every output.
"""

import hashlib
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import BaseModel, Field

from .. import __version__
from ..storage.results import ResultStore
from ..utils.errors import ConfigError

MANIFEST_NAME = "manifest.json"


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest(BaseModel):
    """Everything needed to reproduce one invocation bitwise."""

    subcommand: str
    config: Dict[str, Any] = Field(default_factory=dict, description="Resolved configuration, defaults included")
    seed: int
    version: str = Field(default=__version__)
    inputs: Dict[str, str] = Field(default_factory=dict, description="Input path -> sha256")
    outputs: List[str] = Field(default_factory=list)

    @classmethod
    def build(
        cls,
        subcommand: str,
        seed: int,
        config: Optional[Dict[str, Any]] = None,
        input_files: Sequence[Path] = (),
    ) -> "RunManifest":
        inputs = {}
        for path in input_files:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"input file '{path}' does not exist")
            inputs[path.as_posix()] = sha256_file(path)
        return cls(subcommand=subcommand, config=config or {}, seed=seed, inputs=inputs)

    def write(self, store: ResultStore) -> Path:
        """Record the store's outputs and write the manifest beside them."""
        self.outputs = sorted(Path(p).name for p in store.written)
        return store.write_json(MANIFEST_NAME, self)
