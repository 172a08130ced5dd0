"""Reproducible recovery experiments: accuracy, phase transition and timing."""

from __future__ import annotations

import csv
import io
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .linalg import SingularGramError, gaussian_matrix, seeded_rng
from .sl0 import SNR_CAP_DB, DictionarySet, SolverConfig, recover, snr_db
from .tensor import (
    DEFAULT_CAP_ELEMENTS,
    KroneckerCapError,
    frobenius_norm_sq,
    kron_chain,
    multi_mode_product,
    tensorize,
    vectorize,
)
from .textio import write_tensor

CSV_FIELDS = (
    "experiment", "method", "D", "shape_x", "shape_y", "K", "K_over_M",
    "seed", "snr_db", "runtime_s", "residual_energy", "status",
)
MEASUREMENT_SNR_DB = 60.0
ZERO_TOL = 1e-6

SIM1_CASES = {
    "sim1-2d": ((50, 50), (30, 30), 150),
    "sim1-3d": ((20, 20, 20), (12, 12, 12), 100),
}
SIM2_CASES = {
    1: ((200,), (120,)),
    2: ((20, 20), (12, 12)),
    3: ((20, 20, 20), (12, 12, 12)),
}
SIM2_RATIOS = tuple(round(0.025 * i, 3) for i in range(1, 29))
SIM3_GRID = (10, 20, 30, 40, 50)
DEFAULT_TRIALS = {"sim1": 20, "sim2": 20, "sim3": 5}


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    seed: int = 0
    trials: int = 20
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(noisy=True))
    noise_std: Optional[float] = None  # None: 60 dB measurement SNR per instance
    out: Optional[Path] = None
    cap_elements: int = DEFAULT_CAP_ELEMENTS
    parallel: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.noise_std is not None and self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")


@dataclass
class TrialRecord:
    experiment: str
    method: str
    shape_x: tuple[int, ...]
    shape_y: tuple[int, ...]
    k: int
    seed: int
    snr_db: Optional[float] = None
    runtime_s: Optional[float] = None
    residual_energy: Optional[float] = None
    status: str = "ok"

    @property
    def ndim(self) -> int:
        return len(self.shape_x)

    @property
    def m_total(self) -> int:
        return math.prod(self.shape_y)

    @property
    def k_over_m(self) -> float:
        return self.k / self.m_total

    def row(self) -> dict:
        def num(v):
            return "" if v is None else repr(float(v))

        return {
            "experiment": self.experiment,
            "method": self.method,
            "D": self.ndim,
            "shape_x": format_shape(self.shape_x),
            "shape_y": format_shape(self.shape_y),
            "K": self.k,
            "K_over_M": repr(self.k_over_m),
            "seed": self.seed,
            "snr_db": num(self.snr_db),
            "runtime_s": num(self.runtime_s),
            "residual_energy": num(self.residual_energy),
            "status": self.status,
        }


@dataclass
class Instance:
    x_true: np.ndarray
    dicts: list[np.ndarray]
    y: np.ndarray


@dataclass
class TrialOutcome:
    record: TrialRecord
    instance: Optional[Instance] = None
    x_hat: Optional[np.ndarray] = None


def format_shape(shape: Sequence[int]) -> str:
    return "x".join(str(s) for s in shape)


def trial_seed(master: int, experiment: str, point: int, trial: int) -> int:
    """64-bit seed derived from the master seed and the trial coordinates."""
    ss = np.random.SeedSequence(
        entropy=int(master), spawn_key=(zlib.crc32(experiment.encode()), int(point), int(trial))
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_instance(rng: np.random.Generator, extents_x: Sequence[int], extents_y: Sequence[int],
                      k: int, noise_std: Optional[float] = None) -> Instance:
    """Draw Gaussian dictionaries, a ``k``-sparse Gaussian tensor and its measurements.

    ``noise_std=None`` scales the additive noise to a 60 dB measurement SNR.
    """
    extents_x = tuple(int(n) for n in extents_x)
    extents_y = tuple(int(m) for m in extents_y)
    if len(extents_x) != len(extents_y) or not extents_x:
        raise ValueError("extents of x and y must have the same nonzero length")
    if any(m < 1 or n < 1 or m >= n for m, n in zip(extents_y, extents_x)):
        raise ValueError(f"need 1 <= M_d < N_d, got {extents_y} vs {extents_x}")
    n_total = math.prod(extents_x)
    if not 0 <= k <= n_total:
        raise ValueError(f"k={k} outside [0, {n_total}]")

    dicts = [gaussian_matrix(rng, m, n) for m, n in zip(extents_y, extents_x)]
    x = np.zeros(n_total)
    support = rng.choice(n_total, size=k, replace=False)
    x[support] = rng.standard_normal(k)
    x = x.reshape(extents_x)

    y = multi_mode_product(x, dicts)
    if noise_std is None:
        energy = frobenius_norm_sq(y)
        noise_std = math.sqrt(energy / y.size) * 10.0 ** (-MEASUREMENT_SNR_DB / 20.0)
    noise = rng.standard_normal(y.shape)
    if noise_std > 0:
        y = y + noise_std * noise
    return Instance(x, dicts, y)


@dataclass
class EquivalentProblem:
    """Same measurements posed with fewer, larger dictionaries."""

    method: str
    dicts: list[np.ndarray]
    x_shape: tuple[int, ...]

    @property
    def y_shape(self) -> tuple[int, ...]:
        return tuple(a.shape[0] for a in self.dicts)

    def reshape_y(self, y: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(y).reshape(self.y_shape)

    def reshape_x(self, x: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(x).reshape(self.x_shape)


def build_equivalent_problems(x_shape: Sequence[int], dicts: Sequence[np.ndarray],
                              cap: int = DEFAULT_CAP_ELEMENTS,
                              methods: Sequence[str] = ("flat-1d", "flat-2d")) -> dict[str, EquivalentProblem]:
    """Flatten a multi-mode problem.

    ``flat-1d`` uses the full Kronecker dictionary on ``vec(X)``; ``flat-2d``
    keeps the first mode and merges the rest into one Kronecker factor.
    Raises KroneckerCapError when a merged dictionary would exceed ``cap``.
    """
    x_shape = tuple(int(n) for n in x_shape)
    if len(dicts) != len(x_shape):
        raise ValueError("one dictionary per mode is required")
    out = {}
    if "flat-1d" in methods:
        out["flat-1d"] = EquivalentProblem("flat-1d", [kron_chain(dicts, cap=cap)], (math.prod(x_shape),))
    if "flat-2d" in methods:
        if len(x_shape) < 2:
            raise ValueError("flat-2d needs at least two modes")
        rest = list(dicts[1:])
        merged = kron_chain(rest, cap=cap) if len(rest) > 1 else np.asarray(rest[0], dtype=np.float64)
        out["flat-2d"] = EquivalentProblem(
            "flat-2d", [np.asarray(dicts[0], dtype=np.float64), merged],
            (x_shape[0], math.prod(x_shape[1:])),
        )
    return out


def _solve(y: np.ndarray, mats: Sequence[np.ndarray], cfg: SolverConfig):
    """Pseudoinverses and recovery, timed together."""
    t0 = time.perf_counter()
    ds = DictionarySet.from_matrices(mats)
    report = recover(y, ds, cfg)
    return report, time.perf_counter() - t0


def _score(rec: TrialRecord, x_true: np.ndarray, x_hat: np.ndarray) -> None:
    if frobenius_norm_sq(x_true) == 0.0:
        # SNR undefined; the status says whether the estimate is also zero
        rec.status = "zero_signal" if np.max(np.abs(x_hat)) <= ZERO_TOL else "zero_signal_spurious"
        rec.snr_db = None
    else:
        rec.snr_db = snr_db(x_true, x_hat)


def _accuracy_trial(task) -> TrialOutcome:
    experiment, point, trial, shape_x, shape_y, k, spec, keep = task
    seed = trial_seed(spec.seed, experiment, point, trial)
    rec = TrialRecord(experiment, f"tensor-{len(shape_x)}d", shape_x, shape_y, k, seed)
    inst = generate_instance(seeded_rng(seed), shape_x, shape_y, k, spec.noise_std)
    try:
        report, elapsed = _solve(inst.y, inst.dicts, spec.solver)
    except SingularGramError:
        rec.status = "singular_gram"
        return TrialOutcome(rec, inst if keep else None)
    rec.runtime_s = elapsed
    rec.residual_energy = report.residual_energy
    _score(rec, inst.x_true, report.x_hat)
    return TrialOutcome(rec, inst if keep else None, report.x_hat if keep else None)


def _run_tasks(fn: Callable, tasks: list, parallel: bool) -> list:
    if parallel and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=os.cpu_count()) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def sort_key(rec: TrialRecord):
    return (rec.experiment, rec.ndim, rec.k, rec.method, rec.seed)


def records_to_csv(records: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for rec in records:
        w.writerow(rec.row())
    return buf.getvalue()


def _write(out: Optional[Path], name: str, text: str) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8")


def run_sim1(spec: ExperimentSpec, cases: Sequence[str] = ("sim1-2d", "sim1-3d"),
             k_override: Optional[int] = None) -> list[TrialOutcome]:
    """Accuracy runs on the 50x50 and 20x20x20 setups.

    Writes ``sim1.csv``, ``sim1_values.csv`` (true/recovered pairs per entry)
    and the first trial's tensors to ``spec.out``.
    """
    tasks = []
    for case in cases:
        shape_x, shape_y, k = SIM1_CASES[case]
        if k_override is not None:
            k = k_override
        for t in range(spec.trials):
            tasks.append((case, 0, t, shape_x, shape_y, k, spec, True))
    outcomes = _run_tasks(_accuracy_trial, tasks, spec.parallel)

    if spec.out is not None:
        records = [o.record for o in outcomes]
        _write(spec.out, "sim1.csv", records_to_csv(records))
        buf = io.StringIO()
        buf.write("experiment,seed,index,true,recovered\n")
        for o in outcomes:
            if o.x_hat is None:
                continue
            for i, (a, b) in enumerate(zip(vectorize(o.instance.x_true), vectorize(o.x_hat))):
                buf.write(f"{o.record.experiment},{o.record.seed},{i},{a!r},{float(b)!r}\n")
        _write(spec.out, "sim1_values.csv", buf.getvalue())
        for case in cases:
            first = next((o for o in outcomes if o.record.experiment == case and o.x_hat is not None), None)
            if first is not None:
                write_tensor(spec.out / f"{case}_x_true.txt", first.instance.x_true)
                write_tensor(spec.out / f"{case}_x_hat.txt", first.x_hat)
    return outcomes


def sim2_grid(m_total: int, ratios: Sequence[float] = SIM2_RATIOS) -> list[int]:
    return sorted({int(round(r * m_total)) for r in ratios})


def run_sim2(spec: ExperimentSpec, dims: Sequence[int] = (1, 2, 3),
             ratios: Sequence[float] = SIM2_RATIOS) -> tuple[list[TrialRecord], list[dict]]:
    """Mean SNR versus K/M for one-, two- and three-way problems.

    Writes ``sim2.csv`` (every trial) and ``sim2_summary.csv`` (mean per point).
    """
    tasks = []
    for ndim in dims:
        shape_x, shape_y = SIM2_CASES[ndim]
        for point, k in enumerate(sim2_grid(math.prod(shape_y), ratios)):
            for t in range(spec.trials):
                tasks.append((f"sim2-{ndim}d", point, t, shape_x, shape_y, k, spec, False))
    records = [o.record for o in _run_tasks(_accuracy_trial, tasks, spec.parallel)]
    records.sort(key=sort_key)
    summary = summarize_sim2(records)

    if spec.out is not None:
        _write(spec.out, "sim2.csv", records_to_csv(records))
        buf = io.StringIO()
        buf.write("D,K,K_over_M,trials,mean_snr_db\n")
        for s in summary:
            buf.write(f"{s['D']},{s['K']},{s['K_over_M']!r},{s['trials']},{s['mean_snr_db']!r}\n")
        _write(spec.out, "sim2_summary.csv", buf.getvalue())
    return records, summary


def summarize_sim2(records: Sequence[TrialRecord]) -> list[dict]:
    groups: dict[tuple[int, int], list[TrialRecord]] = {}
    for r in records:
        groups.setdefault((r.ndim, r.k), []).append(r)
    out = []
    for (ndim, k), rs in sorted(groups.items()):
        snrs = [SNR_CAP_DB if r.status == "zero_signal" else r.snr_db for r in rs]
        snrs = [v for v in snrs if v is not None]
        out.append({
            "D": ndim,
            "K": k,
            "K_over_M": rs[0].k_over_m,
            "trials": len(rs),
            "mean_snr_db": float(np.mean(snrs)) if snrs else math.nan,
        })
    return out


def collapse_point(summary: Sequence[dict], ndim: int, threshold_db: float = 20.0) -> Optional[float]:
    """First K/M at which the mean SNR drops below ``threshold_db``."""
    for s in sorted((s for s in summary if s["D"] == ndim), key=lambda s: s["K"]):
        if not s["mean_snr_db"] >= threshold_db:
            return s["K_over_M"]
    return None


def _timing_trial(task) -> list[TrialRecord]:
    nx, point, trial, spec, methods = task
    shape_x = (nx,) * 3
    shape_y = (nx // 2,) * 3
    k = (nx // 5) ** 3
    seed = trial_seed(spec.seed, "sim3", point, trial)
    inst = generate_instance(seeded_rng(seed), shape_x, shape_y, k, spec.noise_std)

    out = []
    for method in methods:
        rec = TrialRecord("sim3", method, shape_x, shape_y, k, seed)
        out.append(rec)
        if method == "tensor-3d":
            mats, y, as_x = inst.dicts, inst.y, lambda x: x
        else:
            try:
                prob = build_equivalent_problems(shape_x, inst.dicts, spec.cap_elements, (method,))[method]
            except KroneckerCapError as e:
                rec.status = f"capped:{e.shape[0]}x{e.shape[1]}"
                continue
            mats, y = prob.dicts, prob.reshape_y(inst.y)
            as_x = lambda x: tensorize(x, shape_x)  # noqa: E731
        try:
            report, elapsed = _solve(y, mats, spec.solver)
        except SingularGramError:
            rec.status = "singular_gram"
            continue
        rec.runtime_s = elapsed
        rec.residual_energy = report.residual_energy
        _score(rec, inst.x_true, as_x(report.x_hat))
    return out


def run_sim3(spec: ExperimentSpec, grid: Sequence[int] = SIM3_GRID,
             methods: Sequence[str] = ("tensor-3d", "flat-2d", "flat-1d")) -> tuple[list[TrialRecord], list[dict]]:
    """Recovery time of the three-way solver against its flattened equivalents.

    Every method sees the same instance and schedule. Flattened problems whose
    Kronecker dictionary exceeds ``spec.cap_elements`` are recorded as capped.
    Runs serially unless ``spec.parallel``.
    """
    for nx in grid:
        if nx < 10 or nx % 10:
            raise ValueError(f"N_x must be a positive multiple of 10, got {nx}")
    tasks = [(nx, p, t, spec, tuple(methods)) for p, nx in enumerate(grid) for t in range(spec.trials)]
    records = [r for rs in _run_tasks(_timing_trial, tasks, spec.parallel) for r in rs]
    records.sort(key=lambda r: (r.shape_x[0], r.method, r.seed))
    summary = summarize_sim3(records)
    if spec.out is not None:
        _write(spec.out, "sim3.csv", records_to_csv(records))
        buf = io.StringIO()
        buf.write("N_x,N,method,trials,mean_runtime_s,mean_snr_db,status\n")
        for s in summary:
            buf.write(
                f"{s['N_x']},{s['N']},{s['method']},{s['trials']},"
                f"{_fmt(s['mean_runtime_s'])},{_fmt(s['mean_snr_db'])},{s['status']}\n"
            )
        _write(spec.out, "sim3_summary.csv", buf.getvalue())
    return records, summary


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else repr(v)


def summarize_sim3(records: Sequence[TrialRecord]) -> list[dict]:
    groups: dict[tuple[int, str], list[TrialRecord]] = {}
    for r in records:
        groups.setdefault((r.shape_x[0], r.method), []).append(r)
    out = []
    for (nx, method), rs in sorted(groups.items()):
        times = [r.runtime_s for r in rs if r.runtime_s is not None]
        snrs = [r.snr_db for r in rs if r.snr_db is not None]
        capped = any(r.status.startswith("capped") for r in rs)
        out.append({
            "N_x": nx,
            "N": nx ** 3,
            "method": method,
            "trials": len(rs),
            "mean_runtime_s": float(np.mean(times)) if times else None,
            "mean_snr_db": float(np.mean(snrs)) if snrs else None,
            "status": "capped" if capped else "ok",
        })
    return out


def with_solver(spec: ExperimentSpec, **overrides) -> ExperimentSpec:
    return replace(spec, solver=replace(spec.solver, **overrides))
