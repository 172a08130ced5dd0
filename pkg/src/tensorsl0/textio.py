"""Plain-text tensor files.

Layout: line 1 holds D, line 2 the extents, then one value per line in
storage order (last index fastest). Matrices are written with D = 2.
"""

from __future__ import annotations

import os
from typing import Union

import numpy as np

PathLike = Union[str, "os.PathLike[str]"]


class TensorFormatError(ValueError):
    def __init__(self, path, line: int, msg: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {msg}")


def format_tensor(x: np.ndarray) -> str:
    x = np.asarray(x, dtype=np.float64)
    lines = [str(x.ndim), " ".join(str(s) for s in x.shape)]
    lines.extend(format(float(v), ".17g") for v in x.reshape(-1))
    return "\n".join(lines) + "\n"


def write_tensor(path: PathLike, x: np.ndarray) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write(format_tensor(x))


def parse_tensor(text: str, path="<string>") -> np.ndarray:
    lines = text.splitlines()
    if len(lines) < 2:
        raise TensorFormatError(path, len(lines) + 1, "missing header")
    try:
        ndim = int(lines[0].strip())
    except ValueError:
        raise TensorFormatError(path, 1, f"expected the dimension count, got {lines[0]!r}") from None
    if ndim < 1:
        raise TensorFormatError(path, 1, f"dimension count must be >= 1, got {ndim}")
    try:
        shape = tuple(int(s) for s in lines[1].split())
    except ValueError:
        raise TensorFormatError(path, 2, f"bad extents {lines[1]!r}") from None
    if len(shape) != ndim or any(s < 1 for s in shape):
        raise TensorFormatError(path, 2, f"expected {ndim} positive extents, got {lines[1]!r}")

    n = int(np.prod(shape, dtype=np.int64))
    values = np.empty(n, dtype=np.float64)
    count = 0
    for lineno, raw in enumerate(lines[2:], start=3):
        s = raw.strip()
        if not s:
            continue
        if count == n:
            raise TensorFormatError(path, lineno, f"more than {n} values")
        try:
            values[count] = float(s)
        except ValueError:
            raise TensorFormatError(path, lineno, f"bad value {s!r}") from None
        if not np.isfinite(values[count]):
            raise TensorFormatError(path, lineno, f"non-finite value {s!r}")
        count += 1
    if count != n:
        raise TensorFormatError(path, len(lines) + 1, f"expected {n} values, found {count}")
    return values.reshape(shape)


def read_tensor(path: PathLike) -> np.ndarray:
    with open(path, encoding="ascii") as f:
        return parse_tensor(f.read(), path)
