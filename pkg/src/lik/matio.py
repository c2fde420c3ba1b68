"""Flat CSV matrix files: comma separated, no header, 17 significant digits."""
from pathlib import Path

import numpy as np

from .errors import InvalidDimensionError, NumericError

FLOAT_FMT = "%.17g"


def write_matrix(path, A):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise InvalidDimensionError(f"expected a 2-d matrix, got shape {A.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(FLOAT_FMT % v for v in row) for row in A]
    path.write_text("\n".join(lines) + "\n")


def read_matrix(path):
    path = Path(path)
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise NumericError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise InvalidDimensionError(f"{path}: empty matrix file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise InvalidDimensionError(f"{path}: ragged rows")
    A = np.array(rows, dtype=float)
    if not np.all(np.isfinite(A)):
        raise NumericError(f"{path}: non-finite entries")
    return A
