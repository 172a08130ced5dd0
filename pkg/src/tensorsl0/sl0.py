"""Smoothed-l0 recovery of sparse tensors from multi-mode measurements.

The measurement model is ``Y = X x_0 A0 x_1 A1 ... x_{D-1} A_{D-1}`` with wide
dictionaries ``A_d``. The solver anneals a Gaussian surrogate of the l0 norm
and keeps every iterate on (or near) the feasible set via pseudoinverse
mode products, so the flattened Kronecker dictionary is never formed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .linalg import right_pinv
from .tensor import as_tensor, frobenius_norm_sq, multi_mode_product

SNR_CAP_DB = 300.0


@dataclass(frozen=True)
class DictionarySet:
    """Per-mode dictionaries with their right pseudoinverses cached."""

    dicts: tuple[np.ndarray, ...]
    pinvs: tuple[np.ndarray, ...] = field(repr=False)

    @classmethod
    def from_matrices(cls, mats: Sequence[np.ndarray]) -> "DictionarySet":
        if len(mats) == 0:
            raise ValueError("need at least one dictionary")
        dicts = []
        for d, a in enumerate(mats):
            a = np.ascontiguousarray(a, dtype=np.float64)
            if a.ndim != 2:
                raise ValueError(f"dictionary {d} is not a matrix")
            # square factors are allowed so identities can pad the mode count
            if a.shape[0] > a.shape[1]:
                raise ValueError(f"dictionary {d} of shape {a.shape} is not wide")
            a.setflags(write=False)
            dicts.append(a)
        pinvs = []
        for a in dicts:
            p = np.ascontiguousarray(right_pinv(a))
            p.setflags(write=False)
            pinvs.append(p)
        return cls(tuple(dicts), tuple(pinvs))

    @property
    def ndim(self) -> int:
        return len(self.dicts)

    @property
    def x_shape(self) -> tuple[int, ...]:
        return tuple(a.shape[1] for a in self.dicts)

    @property
    def y_shape(self) -> tuple[int, ...]:
        return tuple(a.shape[0] for a in self.dicts)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return multi_mode_product(x, self.dicts)

    def backward(self, r: np.ndarray) -> np.ndarray:
        """Apply every pseudoinverse: the minimum-norm preimage of ``r``."""
        return multi_mode_product(r, self.pinvs)


@dataclass(frozen=True)
class SolverConfig:
    sigma_min: float = 0.004
    sigma_decay: float = 0.9
    inner_iters: int = 5
    step_mu: float = 0.5
    epsilon: float = 0.01
    noisy: bool = False
    sigma_initial: Optional[float] = None

    def __post_init__(self):
        if not self.sigma_min > 0:
            raise ValueError("sigma_min must be positive")
        if not 0 < self.sigma_decay < 1:
            raise ValueError("sigma_decay must lie in (0, 1)")
        if int(self.inner_iters) != self.inner_iters or self.inner_iters < 1:
            raise ValueError("inner_iters must be a positive integer")
        if not self.step_mu > 0:
            raise ValueError("step_mu must be positive")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")
        if self.sigma_initial is not None and not self.sigma_initial > 0:
            raise ValueError("sigma_initial must be positive")


@dataclass
class RecoveryReport:
    x_hat: np.ndarray
    sigma_trace: list[float]
    residual_energy: float
    iterations: int
    projections: int
    elapsed: float

    @property
    def outer_stages(self) -> int:
        return len(self.sigma_trace)


def smoothed_norm(x: np.ndarray, sigma: float) -> float:
    """Gaussian surrogate of the l0 norm: ``size - sum(exp(-x^2 / 2 sigma^2))``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=np.float64)
    return float(x.size - np.sum(np.exp(-(x * x) / (2.0 * sigma * sigma))))


def smoothed_norm_delta(x: np.ndarray, sigma: float) -> np.ndarray:
    """Descent direction ``x * exp(-x^2 / 2 sigma^2)``.

    This is ``sigma**2`` times the gradient of :func:`smoothed_norm`; the
    ``sigma**2`` factor is absorbed into the fixed step size.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=np.float64)
    return x * np.exp(-(x * x) / (2.0 * sigma * sigma))


def _check_y(y: np.ndarray, dicts: DictionarySet) -> np.ndarray:
    y = as_tensor(y)
    if y.shape != dicts.y_shape:
        raise ValueError(f"measurement shape {y.shape} does not match dictionaries {dicts.y_shape}")
    return y


def initialize(y: np.ndarray, dicts: DictionarySet) -> np.ndarray:
    """Minimum-norm feasible starting point."""
    return dicts.backward(_check_y(y, dicts))


def residual(x: np.ndarray, y: np.ndarray, dicts: DictionarySet) -> np.ndarray:
    return y - dicts.forward(x)


def project(x: np.ndarray, y: np.ndarray, dicts: DictionarySet) -> np.ndarray:
    """Orthogonal projection of ``x`` onto ``{X : forward(X) = y}``."""
    y = _check_y(y, dicts)
    x = as_tensor(x)
    if x.shape != dicts.x_shape:
        raise ValueError(f"tensor shape {x.shape} does not match dictionaries {dicts.x_shape}")
    return x + dicts.backward(residual(x, y, dicts))


def sigma_schedule(sigma_initial: float, cfg: SolverConfig) -> list[float]:
    """Geometric schedule from ``sigma_initial`` down to ``cfg.sigma_min``.

    Values above ``sigma_min`` are kept; the last stage runs at ``sigma_min``.
    """
    trace = []
    sigma = float(sigma_initial)
    while sigma > cfg.sigma_min:
        trace.append(sigma)
        sigma *= cfg.sigma_decay
    trace.append(float(cfg.sigma_min))
    return trace


def default_sigma_initial(x0: np.ndarray) -> float:
    return 2.0 * float(np.max(np.abs(x0)))


def recover(y: np.ndarray, dicts: DictionarySet, cfg: Optional[SolverConfig] = None) -> RecoveryReport:
    """Recover a sparse tensor from ``y``.

    Each stage runs ``cfg.inner_iters`` steps of ``X -= mu * delta(X)`` followed
    by a projection onto the feasible set. In noisy mode the projection is
    skipped while the residual energy is within ``cfg.epsilon``.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    y = _check_y(y, dicts)
    x = dicts.backward(y)

    sigma1 = cfg.sigma_initial if cfg.sigma_initial is not None else default_sigma_initial(x)
    trace = sigma_schedule(sigma1, cfg)
    mu = cfg.step_mu
    iters = 0
    projections = 0
    for sigma in trace:
        c = -1.0 / (2.0 * sigma * sigma)
        for _ in range(cfg.inner_iters):
            x = x - mu * (x * np.exp(c * (x * x)))
            r = y - dicts.forward(x)
            if not cfg.noisy or frobenius_norm_sq(r) > cfg.epsilon:
                x = x + dicts.backward(r)
                projections += 1
            iters += 1

    energy = frobenius_norm_sq(y - dicts.forward(x))
    return RecoveryReport(
        x_hat=x,
        sigma_trace=trace,
        residual_energy=energy,
        iterations=iters,
        projections=projections,
        elapsed=time.perf_counter() - t0,
    )


def snr_db(x_true: np.ndarray, x_hat: np.ndarray) -> float:
    """``20 log10(||x_true|| / ||x_true - x_hat||)``, capped at 300 dB."""
    x_true = np.asarray(x_true, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x_true.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x_true.shape} vs {x_hat.shape}")
    signal = math.sqrt(frobenius_norm_sq(x_true))
    if signal == 0.0:
        raise ValueError("SNR is undefined for an all-zero reference")
    err = math.sqrt(frobenius_norm_sq(x_true - x_hat))
    if err == 0.0:
        return SNR_CAP_DB
    return min(SNR_CAP_DB, 20.0 * math.log10(signal / err))
