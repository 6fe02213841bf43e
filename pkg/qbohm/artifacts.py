"""
Text artifacts produced by experiments.
Artifacts are built in memory and written in one pass once a run succeeds.
"""
import hashlib
import io
import json
from pathlib import Path
from typing import Any, Iterable, List, Sequence

import numpy as np
from pydantic import BaseModel

# 17 significant digits round-trip every double exactly
FLOAT_FORMAT = "%.17g"


class Artifact(BaseModel):
    """One output file: relative name plus its full text."""
    name: str
    text: str

    @property
    def sha256(self) -> str:
        return sha256_text(self.text)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def format_table(columns: Sequence[str], table: np.ndarray, fmt: Any = FLOAT_FORMAT) -> str:
    """Comma-separated table with one header row."""
    buffer = io.StringIO()
    np.savetxt(buffer, np.atleast_2d(table), delimiter=",", fmt=fmt,
               header=",".join(columns), comments="")
    return buffer.getvalue()


def format_rows(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Mixed-type rows (ints, strings, floats); floats use 17 significant digits."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % float(value)
    return str(value)


def to_json(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_artifacts(artifacts: List[Artifact], output_dir: Path) -> List[Path]:
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for artifact in artifacts:
        path = output_dir / artifact.name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(artifact.text)
        written.append(path)
    return written
