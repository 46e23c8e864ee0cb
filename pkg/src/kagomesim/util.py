"""Shared plumbing: worker pools, deterministic CSV output, hashing."""

from __future__ import annotations

import csv
import hashlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Map ``fn`` over ``items``, optionally on a process pool.

    Results come back in input order regardless of worker scheduling, so any
    downstream merge is deterministic.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def format_cell(value) -> str:
    """Deterministic text form for a CSV cell.

    Floats use repr (shortest round-trip form), bools become 0/1, everything
    else goes through str.  Numpy scalars are coerced to their Python
    equivalents first, so identical inputs always produce identical bytes.
    """
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path: str | Path, fieldnames: Sequence[str], rows: Iterable[dict]) -> None:
    """Write row dicts with fixed column order and LF newlines."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(fieldnames))
        for row in rows:
            writer.writerow([format_cell(row[name]) for name in fieldnames])


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()
