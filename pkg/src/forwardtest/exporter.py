import json
import logging
import math
import os
import traceback
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np
import pandas as pd

from .errors import PersistenceError


def _plain(value: Any) -> Any:
    """Convert numpy scalars, arrays, dates and NaN into JSON-safe values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if hasattr(value, "isoformat"):
        return value.isoformat()
    return value


def to_json(payload: Any) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(_plain(payload), sort_keys=True, indent=2) + "\n"


class ArtifactWriter:
    """Writes run artifacts under one output directory and remembers what it wrote."""

    def __init__(self, output_dir: Union[str, Path]):
        self.output_dir = Path(output_dir)
        self.logger = logging.getLogger("ArtifactWriter")
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.written_files: Dict[str, List[Path]] = {"csv": [], "json": [], "svg": [], "html": [], "bin": []}

    def _target(self, name: str) -> Path:
        path = self.output_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def _write(self, name: str, data: bytes, kind: str) -> Path:
        path = self._target(name)
        tmp = path.with_name(path.name + ".part")
        try:
            with open(tmp, "wb") as handle:
                handle.write(data)
            os.replace(tmp, path)
        except OSError as e:
            error_details = traceback.format_exc()
            self.logger.error(f"Error writing {path}: {str(e)}")
            self.logger.debug(f"Error details: {error_details}")
            if tmp.exists():
                tmp.unlink()
            raise PersistenceError(f"cannot write {path}: {e}") from e
        self.written_files[kind].append(path)
        self.logger.info(f"  Wrote {path.relative_to(self.output_dir)} ({len(data)} bytes)")
        return path

    def write_csv(self, name: str, frame: pd.DataFrame, float_format: str = "%.10g") -> Path:
        text = frame.to_csv(index=False, float_format=float_format, lineterminator="\n")
        return self._write(name, text.encode("utf-8"), "csv")

    def write_text(self, name: str, text: str) -> Path:
        return self._write(name, text.encode("utf-8"), "csv")

    def write_json(self, name: str, payload: Any) -> Path:
        return self._write(name, to_json(payload).encode("utf-8"), "json")

    def write_svg(self, name: str, svg_text: str) -> Path:
        return self._write(name, svg_text.encode("utf-8"), "svg")

    def write_html(self, name: str, html: str) -> Path:
        return self._write(name, html.encode("utf-8"), "html")

    def write_bytes(self, name: str, data: bytes) -> Path:
        return self._write(name, data, "bin")

    def outputs(self) -> List[str]:
        """Every written path relative to the output directory, sorted."""
        paths = {p for files in self.written_files.values() for p in files}
        return sorted(str(p.relative_to(self.output_dir)) for p in paths)

    def cleanup_failed(self) -> None:
        """Remove everything written so far; used when a stage fails midway."""
        try:
            for kind in self.written_files:
                for path in self.written_files[kind]:
                    if path.exists():
                        path.unlink()
                self.written_files[kind] = []
        except Exception as e:
            self.logger.error(f"Error during cleanup: {str(e)}")
