"""Spark and mutual-coherence uniqueness checks for multi-mode dictionaries."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .tensor import as_tensor

RANK_RTOL = 1e-10
SPARK_MAX_COLS = 20
SPARK_SUBSET_BUDGET = 200_000


def coherence(a: np.ndarray) -> float:
    """Largest normalized inner product between two distinct columns."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] < 2:
        raise ValueError("coherence needs a matrix with at least two columns")
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("coherence is undefined for a matrix with a zero column")
    u = a / norms
    g = np.abs(u.T @ u)
    np.fill_diagonal(g, 0.0)
    return float(min(1.0, np.max(g)))


def elimination_rank(a: np.ndarray, tol: float) -> int:
    """Rank by Gaussian elimination with partial pivoting; pivots <= tol count as zero."""
    m = np.array(a, dtype=np.float64)
    rows, cols = m.shape
    rank = 0
    for c in range(cols):
        if rank == rows:
            break
        p = rank + int(np.argmax(np.abs(m[rank:, c])))
        if abs(m[p, c]) <= tol:
            continue
        m[[rank, p]] = m[[p, rank]]
        m[rank + 1:, c:] -= np.outer(m[rank + 1:, c] / m[rank, c], m[rank, c:])
        rank += 1
    return rank


def spark_bruteforce(a: np.ndarray, max_cols: int = SPARK_MAX_COLS) -> int:
    """Size of the smallest linearly dependent set of columns.

    Returns ``cols + 1`` when every subset is independent. Enumerates subsets,
    so it refuses matrices wider than ``max_cols``.
    """
    a = np.asarray(a, dtype=np.float64)
    rows, cols = a.shape
    if cols > max_cols:
        raise ValueError(f"spark enumeration over {cols} columns exceeds the cap of {max_cols}")
    tol = RANK_RTOL * float(np.max(np.abs(a))) if a.size else 0.0
    for size in range(1, min(cols, rows + 1) + 1):
        if size > rows:
            return size
        for subset in combinations(range(cols), size):
            if elimination_rank(a[:, subset], tol) < size:
                return size
    return cols + 1


def spark_subset_count(a: np.ndarray) -> int:
    """Worst-case number of column subsets :func:`spark_bruteforce` examines."""
    rows, cols = np.shape(a)
    return sum(math.comb(cols, s) for s in range(1, min(rows, cols) + 1))


def spark_coherence_bound(a: np.ndarray) -> float:
    """Lower bound ``1 + 1/mu`` on the spark; ``inf`` for orthogonal columns."""
    mu = coherence(a)
    if mu == 0.0:
        return math.inf
    return 1.0 + 1.0 / mu


def kron_coherence(dicts: Sequence[np.ndarray]) -> float:
    return max(coherence(a) for a in dicts)


def kron_spark_bound(dicts: Sequence[np.ndarray] = (), sparks: Optional[Sequence[int]] = None,
                     max_cols: int = SPARK_MAX_COLS) -> int:
    """``min_d spark(A_d)``, an upper bound on the spark of the Kronecker product."""
    if sparks is None:
        sparks = [spark_bruteforce(a, max_cols) for a in dicts]
    if not sparks:
        raise ValueError("need at least one dictionary or spark")
    return int(min(sparks))


@dataclass(frozen=True)
class UniquenessVerdict:
    """Outcome of the three sparsity tests for a given ``k``.

    ``eq31_bound`` is the random-support estimate ``prod(spark_d / 2)``; it
    is an empirical guide, not a guarantee.
    """

    k: int
    coherence: float
    coherence_bound: float
    passes_coherence: bool
    eq31_bound: float
    passes_eq31: bool
    eq31_sparks_assumed: bool
    spark_bound: Optional[int] = None
    passes_spark: Optional[bool] = None

    def lines(self) -> list[str]:
        out = [f"k = {self.k}", f"max coherence = {self.coherence:.6g}"]
        if math.isinf(self.coherence_bound):
            out.append("coherence bound: unbounded (orthogonal columns); pass")
        else:
            out.append(
                f"coherence bound 0.5*(1 + 1/mu) = {self.coherence_bound:.6g}; "
                f"k < bound: {'pass' if self.passes_coherence else 'fail'}"
            )
        if self.spark_bound is None:
            out.append("spark bound: not computed")
        else:
            out.append(
                f"spark bound 0.5*min spark = {0.5 * self.spark_bound:.6g} (min spark {self.spark_bound}); "
                f"k <= bound: {'pass' if self.passes_spark else 'fail'}"
            )
        note = " (spark taken as rows per mode)" if self.eq31_sparks_assumed else ""
        out.append(
            f"random-support bound prod(spark/2) = {self.eq31_bound:.6g}{note}; "
            f"k <= bound: {'pass' if self.passes_eq31 else 'fail'} [empirical, not a guarantee]"
        )
        return out


def uniqueness_check(k: int, dicts: Sequence[np.ndarray], compute_sparks: bool = True,
                     max_cols: int = SPARK_MAX_COLS,
                     subset_budget: int = SPARK_SUBSET_BUDGET) -> UniquenessVerdict:
    """Evaluate sparsity ``k`` against the spark, coherence and random-support bounds.

    Sparks are enumerated only when every dictionary is within ``max_cols``
    columns and ``subset_budget`` subsets; otherwise the spark test is
    reported absent and the random-support bound substitutes ``spark = rows``.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    dicts = [as_tensor(a) for a in dicts]
    mu = kron_coherence(dicts)
    cbound = math.inf if mu == 0.0 else 0.5 * (1.0 + 1.0 / mu)

    sparks = None
    if compute_sparks and all(
        a.shape[1] <= max_cols and spark_subset_count(a) <= subset_budget for a in dicts
    ):
        sparks = [spark_bruteforce(a, max_cols) for a in dicts]

    spark_bound = passes_spark = None
    if sparks is not None:
        spark_bound = min(sparks)
        passes_spark = k <= 0.5 * spark_bound

    assumed = sparks is None
    per_mode = [a.shape[0] for a in dicts] if assumed else sparks
    eq31 = float(np.prod([s / 2.0 for s in per_mode]))

    return UniquenessVerdict(
        k=int(k),
        coherence=mu,
        coherence_bound=cbound,
        passes_coherence=k < cbound,
        eq31_bound=eq31,
        passes_eq31=k <= eq31,
        eq31_sparks_assumed=assumed,
        spark_bound=spark_bound,
        passes_spark=passes_spark,
    )
