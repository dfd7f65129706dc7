"""
Artifact manager for writing experiment outputs and their manifest.
"""
import hashlib
import json
import logging
import math
import platform
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import pandas as pd

from .. import __version__
from ..config.settings import OUTPUT_CONFIG
from ..models.results import LossResult

logger = logging.getLogger(__name__)

DEPENDENCIES = ("numpy", "scipy", "pandas", "python-dotenv")


def format_value(value: Any) -> str:
    """CSV cell text: 17 significant digits for floats, a token for divergent losses."""
    if isinstance(value, LossResult):
        if value.divergent:
            return OUTPUT_CONFIG["divergent_token"]
        value = value.value
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return OUTPUT_CONFIG["float_format"].format(value)
    if hasattr(value, "item"):
        return format_value(value.item())
    return str(value)


def file_digest(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def package_versions() -> Dict[str, str]:
    """Versions of this package, the interpreter and the numerical stack."""
    versions = {"hmq-detect": __version__, "python": platform.python_version()}
    for name in DEPENDENCIES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


class ArtifactManager:
    """Writes CSV tables and JSON documents into one output directory and tracks them."""

    def __init__(self, output_dir: Path):
        """Create the output directory if needed."""
        self.output_dir = Path(output_dir)
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OSError(e.errno, f"cannot create output directory {self.output_dir}: "
                                   f"{e.strerror}") from e
        self.outputs: List[Path] = []

    def _target(self, name: str) -> Path:
        path = self.output_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        if path not in self.outputs:
            self.outputs.append(path)
        return path

    def write_csv(self, name: str, rows: Sequence[Mapping[str, Any]],
                  column_docs: Mapping[str, str]) -> Path:
        """Write ``rows`` as CSV, preceded by one '#' line documenting each column."""
        columns = list(column_docs)
        frame = pd.DataFrame([{c: format_value(row.get(c)) for c in columns} for row in rows],
                             columns=columns, dtype=object)
        path = self._target(name)
        header = "".join(f"# {column}: {doc}\n" for column, doc in column_docs.items())
        with open(path, "w", newline="") as handle:
            handle.write(header)
            frame.to_csv(handle, index=False, lineterminator="\n")
        logger.info(f"Wrote {len(rows)} rows to {path}")
        return path

    def write_json(self, name: str, data: Any) -> Path:
        """Write a JSON document with sorted keys."""
        path = self._target(name)
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        logger.debug(f"Wrote {path}")
        return path

    def emit_manifest(self, config: Dict[str, Any], config_hash: str, seed: int,
                      wall_time: float, outputs: Optional[Sequence[Path]] = None) -> Path:
        """Write the manifest listing every produced file with its size and sha256 digest."""
        outputs = self.outputs if outputs is None else list(outputs)
        files = [
            {
                "path": path.relative_to(self.output_dir).as_posix(),
                "bytes": path.stat().st_size,
                "sha256": file_digest(path),
            }
            for path in outputs
        ]
        manifest = {
            "config": config,
            "config_hash": config_hash,
            "seed": seed,
            "versions": package_versions(),
            "wall_time_seconds": wall_time,
            "files": files,
        }
        path = self.output_dir / OUTPUT_CONFIG["manifest_name"]
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        logger.info(f"Manifest lists {len(files)} files: {path}")
        return path
