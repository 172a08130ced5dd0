"""Dense multilinear algebra on numpy arrays.

Tensors are plain ``float64`` ndarrays in C order, so the last index varies
fastest in storage. Modes are numbered like numpy axes, starting at 0.

With this storage order ``vec(X x_0 A0 x_1 A1 ... ) == kron(A0, A1, ...) @ vec(X)``
holds with the factors in natural mode order.
"""

from __future__ import annotations

import math
from functools import reduce
from typing import Sequence

import numpy as np

DEFAULT_CAP_ELEMENTS = 10**8


class KroneckerCapError(ValueError):
    """Raised when a Kronecker product would exceed the element cap."""

    def __init__(self, shape: tuple[int, int], cap: int):
        self.shape = shape
        self.cap = cap
        n = shape[0] * shape[1]
        super().__init__(
            f"Kronecker product of shape {shape[0]}x{shape[1]} "
            f"({n} elements) exceeds the cap of {cap} elements"
        )


def as_tensor(x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim < 1 or 0 in x.shape:
        raise ValueError(f"tensor needs D >= 1 and positive extents, got shape {x.shape}")
    return x


def _check_mode(x: np.ndarray, mode: int) -> None:
    if not 0 <= mode < x.ndim:
        raise ValueError(f"mode {mode} out of range for a {x.ndim}-way tensor")


def mode_matricize(x: np.ndarray, mode: int) -> np.ndarray:
    """Unfold ``x`` along ``mode``.

    Row ``r`` holds every entry whose index in ``mode`` is ``r``; columns run
    over the remaining indices in order, last fastest.
    """
    _check_mode(x, mode)
    return np.moveaxis(x, mode, 0).reshape(x.shape[mode], -1)


def mode_fold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`mode_matricize`."""
    shape = tuple(int(s) for s in shape)
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} out of range for a {len(shape)}-way shape")
    rest = shape[:mode] + shape[mode + 1:]
    expected = (shape[mode], int(np.prod(rest, dtype=np.int64)))
    if m.shape != expected:
        raise ValueError(f"matrix of shape {m.shape} cannot fold to {shape} in mode {mode}")
    t = np.asarray(m).reshape((shape[mode],) + rest)
    return np.ascontiguousarray(np.moveaxis(t, 0, mode))


def mode_product(x: np.ndarray, a: np.ndarray, mode: int) -> np.ndarray:
    """d-mode product ``x x_mode a``; extent ``mode`` becomes ``a.shape[0]``."""
    _check_mode(x, mode)
    if a.ndim != 2 or a.shape[1] != x.shape[mode]:
        raise ValueError(
            f"matrix of shape {a.shape} does not match extent {x.shape[mode]} of mode {mode}"
        )
    n = x.shape[mode]
    before = math.prod(x.shape[:mode])
    after = math.prod(x.shape[mode + 1:])
    out_shape = x.shape[:mode] + (a.shape[0],) + x.shape[mode + 1:]
    x = np.ascontiguousarray(x)
    if after == 1:
        out = x.reshape(before, n) @ a.T
    elif before == 1:
        out = a @ x.reshape(n, after)
    else:
        # batched over the leading modes; avoids transposing x
        out = np.matmul(a, x.reshape(before, n, after))
    return out.reshape(out_shape)


def multi_mode_product(x: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    """``x x_0 mats[0] x_1 mats[1] ...`` over every mode of ``x``."""
    if len(mats) != x.ndim:
        raise ValueError(f"need {x.ndim} matrices, got {len(mats)}")
    out = x
    for mode, a in enumerate(mats):
        out = mode_product(out, a, mode)
    return np.ascontiguousarray(out)


def vectorize(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x).reshape(-1)


def tensorize(v: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    v = np.asarray(v, dtype=np.float64)
    if v.size != int(np.prod(shape, dtype=np.int64)):
        raise ValueError(f"vector of length {v.size} cannot be shaped as {shape}")
    return np.ascontiguousarray(v).reshape(shape)


def kron_shape(mats: Sequence[np.ndarray]) -> tuple[int, int]:
    rows = reduce(lambda p, a: p * a.shape[0], mats, 1)
    cols = reduce(lambda p, a: p * a.shape[1], mats, 1)
    return rows, cols


def kronecker(a: np.ndarray, b: np.ndarray, cap: int = DEFAULT_CAP_ELEMENTS) -> np.ndarray:
    return kron_chain([a, b], cap=cap)


def kron_chain(mats: Sequence[np.ndarray], cap: int = DEFAULT_CAP_ELEMENTS) -> np.ndarray:
    """Left-to-right Kronecker product of ``mats``.

    The size is checked before anything is allocated.
    """
    if not mats:
        raise ValueError("kron_chain needs at least one matrix")
    for a in mats:
        if np.ndim(a) != 2:
            raise ValueError("kron_chain takes 2-D matrices")
    shape = kron_shape(mats)
    if shape[0] * shape[1] > cap:
        raise KroneckerCapError(shape, cap)
    return reduce(np.kron, (np.asarray(a, dtype=np.float64) for a in mats))


def frobenius_norm_sq(x: np.ndarray) -> float:
    v = np.ravel(x)
    return float(v @ v)


def count_nonzero(x: np.ndarray, tol: float = 0.0) -> int:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return int(np.count_nonzero(np.abs(x) > tol))
