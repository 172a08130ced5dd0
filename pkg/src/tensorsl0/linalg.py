"""Small dense linear algebra helpers and seeded Gaussian sampling."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.linalg

PIVOT_RTOL = 1e-12


class SingularGramError(np.linalg.LinAlgError):
    """The Gram matrix ``A A^T`` is numerically singular (A lacks full row rank)."""


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def solve_spd(g: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``g @ s = rhs`` for symmetric positive-definite ``g`` by Cholesky.

    Raises SingularGramError when a pivot falls below ``1e-12 * max(diag(g))``.
    """
    g = np.asarray(g, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"Gram matrix must be square, got {g.shape}")
    if rhs.shape[0] != g.shape[0]:
        raise ValueError(f"right-hand side with {rhs.shape[0]} rows for a {g.shape[0]}-square system")
    scale = np.max(np.abs(g)) if g.size else 0.0
    if not np.allclose(g, g.T, rtol=0.0, atol=1e-10 * max(scale, 1.0)):
        raise ValueError("Gram matrix is not symmetric")

    dmax = float(np.max(np.diag(g)))
    if dmax <= 0.0:
        raise SingularGramError("singular Gram matrix")
    try:
        c, lower = scipy.linalg.cho_factor(g, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        raise SingularGramError("singular Gram matrix") from None
    pivots = np.diag(c) ** 2
    if np.min(pivots) < PIVOT_RTOL * dmax:
        raise SingularGramError("singular Gram matrix")
    return scipy.linalg.cho_solve((c, lower), rhs)


def right_pinv(a: np.ndarray) -> np.ndarray:
    """``A^T (A A^T)^{-1}`` for a wide matrix with full row rank."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("right_pinv takes a 2-D matrix")
    m, n = a.shape
    if m > n:
        raise ValueError(f"right pseudoinverse needs rows <= cols, got {m}x{n}")
    return a.T @ solve_spd(a @ a.T, np.eye(m))


def seeded_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; a given seed yields the same stream on every platform."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def gaussian_matrix(rng: np.random.Generator, m: int, n: int) -> np.ndarray:
    if m < 1 or n < 1:
        raise ValueError("matrix dimensions must be positive")
    return rng.standard_normal((m, n))


def gaussian_tensor(rng: np.random.Generator, shape: Sequence[int]) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if not shape or min(shape) < 1:
        raise ValueError(f"bad tensor shape {shape}")
    return rng.standard_normal(shape)
