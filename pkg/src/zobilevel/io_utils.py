"""Deterministic file output helpers.

Floats are rendered with repr() so a re-run with the same seed reproduces
output files byte for byte.  Writes go through a temp file plus rename so a
crash never leaves a half-written artifact.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np
from pathlib import Path
from typing import Iterable, Sequence


def format_cell(v) -> str:
    if isinstance(v, np.floating):
        v = float(v)
    elif isinstance(v, np.integer):
        v = int(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_cell(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
