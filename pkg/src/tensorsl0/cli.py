"""Command-line entry point: ``tensorsl0 sim1|sim2|sim3|recover|analyze``.

Exit codes: 0 success, 1 usage error, 2 singular Gram matrix, 3 Kronecker cap exceeded.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench
from .linalg import SingularGramError, gaussian_matrix, seeded_rng
from .sl0 import DictionarySet, SolverConfig, recover
from .tensor import DEFAULT_CAP_ELEMENTS, KroneckerCapError
from .textio import TensorFormatError, read_tensor, write_tensor
from .uniqueness import uniqueness_check

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CAP = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# config keys -> (argparse dest, converter)
CONFIG_KEYS = {
    "seed": ("seed", int),
    "trials": ("trials", int),
    "out": ("out", str),
    "sigma-min": ("sigma_min", float),
    "sigma-decay": ("sigma_decay", float),
    "sigma-initial": ("sigma_initial", float),
    "mu": ("mu", float),
    "inner-iters": ("inner_iters", int),
    "epsilon": ("epsilon", float),
    "noise-std": ("noise_std", float),
    "cap-elements": ("cap_elements", int),
    "parallel": ("parallel", lambda s: s.strip().lower() in ("1", "true", "yes", "on")),
}


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("_", "-")
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            dest, conv = CONFIG_KEYS[key]
            try:
                values[dest] = conv(value)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return values


def _common(p: argparse.ArgumentParser) -> None:
    # defaults are None so config-file values can fill in what flags omit
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--trials", type=int, help="trials per point")
    p.add_argument("--out", help="output directory (default: results)")
    p.add_argument("--sigma-min", type=float)
    p.add_argument("--sigma-decay", type=float)
    p.add_argument("--sigma-initial", type=float, help="first sigma (default 2*max|X0|)")
    p.add_argument("--mu", type=float, help="step size")
    p.add_argument("--inner-iters", type=int)
    p.add_argument("--epsilon", type=float, help="residual energy budget in noisy mode")
    p.add_argument("--noise-std", type=float,
                   help="noise std on every entry of Y (default: 60 dB measurement SNR)")
    p.add_argument("--cap-elements", type=int, help=f"Kronecker element cap (default {DEFAULT_CAP_ELEMENTS})")
    p.add_argument("--parallel", action="store_true", default=None, help="run trials in worker processes")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tensorsl0", description="Sparse tensor recovery with smoothed l0 and multi-mode dictionaries.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sim1", help="accuracy on the 50x50 and 20x20x20 setups")
    _common(p)
    p.add_argument("--case", choices=("2d", "3d", "both"), default="both")
    p.add_argument("-k", type=int, help="override the number of nonzeros")

    p = sub.add_parser("sim2", help="mean SNR versus K/M for D = 1, 2, 3")
    _common(p)
    p.add_argument("--dims", default="1,2,3", help="comma-separated subset of 1,2,3")

    p = sub.add_parser("sim3", help="runtime of the 3-way solver against flattened equivalents")
    _common(p)
    p.add_argument("--grid", default=",".join(str(n) for n in bench.SIM3_GRID), help="comma-separated N_x values")

    p = sub.add_parser("recover", help="recover X from Y and per-mode dictionaries in text format")
    _common(p)
    p.add_argument("--y", required=True, help="measurement tensor file")
    p.add_argument("--dict", action="append", required=True, dest="dicts",
                   help="dictionary file, once per mode in order")
    p.add_argument("--noisy", action="store_true", help="project only when residual energy exceeds epsilon")
    p.add_argument("--output", required=True, help="file for the recovered tensor")

    p = sub.add_parser("analyze", help="uniqueness bounds for a sparsity level")
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--dict", action="append", dest="dicts", help="dictionary file, once per mode")
    p.add_argument("--generate", help="random Gaussian dictionaries, e.g. 12x20,12x20,12x20")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-spark", action="store_true", help="skip brute-force spark enumeration")
    p.add_argument("--output", help="also write the report to this file")
    return parser


def _merged(args) -> dict:
    vals = read_config(args.config) if getattr(args, "config", None) else {}
    for dest, _ in CONFIG_KEYS.values():
        v = getattr(args, dest, None)
        if v is not None:
            vals[dest] = v
    return vals


def _solver(vals: dict, noisy: bool) -> SolverConfig:
    kw = {}
    for key, field in (("sigma_min", "sigma_min"), ("sigma_decay", "sigma_decay"), ("mu", "step_mu"),
                       ("inner_iters", "inner_iters"), ("epsilon", "epsilon"),
                       ("sigma_initial", "sigma_initial")):
        if key in vals:
            kw[field] = vals[key]
    try:
        return SolverConfig(noisy=noisy, **kw)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _spec(experiment: str, vals: dict) -> bench.ExperimentSpec:
    try:
        return bench.ExperimentSpec(
            experiment=experiment,
            seed=vals.get("seed", 0),
            trials=vals.get("trials", bench.DEFAULT_TRIALS[experiment]),
            solver=_solver(vals, noisy=True),
            noise_std=vals.get("noise_std"),
            out=Path(vals.get("out", "results")),
            cap_elements=vals.get("cap_elements", DEFAULT_CAP_ELEMENTS),
            parallel=bool(vals.get("parallel", False)),
        )
    except ValueError as e:
        raise UsageError(str(e)) from None


def _int_list(s: str, name: str) -> list[int]:
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad --{name} value {s!r}") from None


def cmd_sim1(args) -> int:
    spec = _spec("sim1", _merged(args))
    cases = {"2d": ("sim1-2d",), "3d": ("sim1-3d",), "both": ("sim1-2d", "sim1-3d")}[args.case]
    outcomes = bench.run_sim1(spec, cases, k_override=args.k)
    for case in cases:
        snrs = [o.record.snr_db for o in outcomes if o.record.experiment == case and o.record.snr_db is not None]
        mean = f"{np.mean(snrs):.2f} dB" if snrs else "undefined"
        print(f"{case}: {len(snrs)} trials, mean SNR {mean}")
    print(f"wrote {spec.out / 'sim1.csv'}")
    return EXIT_OK


def cmd_sim2(args) -> int:
    spec = _spec("sim2", _merged(args))
    dims = _int_list(args.dims, "dims")
    if not dims or any(d not in bench.SIM2_CASES for d in dims):
        raise UsageError("--dims must list values from 1,2,3")
    _, summary = bench.run_sim2(spec, dims)
    for d in dims:
        cp = bench.collapse_point(summary, d)
        print(f"D={d}: mean SNR first below 20 dB at K/M = {'none' if cp is None else f'{cp:.4f}'}")
    print(f"wrote {spec.out / 'sim2.csv'} and {spec.out / 'sim2_summary.csv'}")
    return EXIT_OK


def cmd_sim3(args) -> int:
    spec = _spec("sim3", _merged(args))
    try:
        _, summary = bench.run_sim3(spec, _int_list(args.grid, "grid"))
    except ValueError as e:
        raise UsageError(str(e)) from None
    for s in summary:
        t = "capped" if s["mean_runtime_s"] is None else f"{s['mean_runtime_s']:.4f} s"
        print(f"N_x={s['N_x']:>3} {s['method']:>9}: {t}")
    print(f"wrote {spec.out / 'sim3.csv'} and {spec.out / 'sim3_summary.csv'}")
    return EXIT_OK


def cmd_recover(args) -> int:
    vals = _merged(args)
    cfg = _solver(vals, noisy=args.noisy)
    y = read_tensor(args.y)
    mats = [read_tensor(p) for p in args.dicts]
    for p, a in zip(args.dicts, mats):
        if a.ndim != 2:
            raise UsageError(f"{p}: dictionary must have D = 2")
    if len(mats) != y.ndim:
        raise UsageError(f"Y has {y.ndim} modes but {len(mats)} dictionaries were given")
    try:
        ds = DictionarySet.from_matrices(mats)
        report = recover(y, ds, cfg)
    except SingularGramError:
        raise
    except ValueError as e:
        raise UsageError(str(e)) from None
    write_tensor(args.output, report.x_hat)
    print(f"stages={report.outer_stages} iterations={report.iterations} "
          f"residual_energy={report.residual_energy:.6g} elapsed={report.elapsed:.4f}s")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if bool(args.dicts) == bool(args.generate):
        raise UsageError("give either --dict files or --generate")
    if args.dicts:
        mats = [read_tensor(p) for p in args.dicts]
        for p, a in zip(args.dicts, mats):
            if a.ndim != 2:
                raise UsageError(f"{p}: dictionary must have D = 2")
    else:
        rng = seeded_rng(args.seed)
        mats = []
        for part in args.generate.split(","):
            try:
                m, n = (int(v) for v in part.lower().split("x"))
            except ValueError:
                raise UsageError(f"bad dictionary size {part!r}; expected MxN") from None
            mats.append(gaussian_matrix(rng, m, n))
    try:
        verdict = uniqueness_check(args.k, mats, compute_sparks=not args.no_spark)
    except ValueError as e:
        raise UsageError(str(e)) from None
    text = "\n".join(verdict.lines()) + "\n"
    sys.stdout.write(text)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    return EXIT_OK


COMMANDS = {"sim1": cmd_sim1, "sim2": cmd_sim2, "sim3": cmd_sim3, "recover": cmd_recover, "analyze": cmd_analyze}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"tensorsl0: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TensorFormatError, OSError) as e:
        print(f"tensorsl0: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SingularGramError as e:
        print(f"tensorsl0: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except KroneckerCapError as e:
        print(f"tensorsl0: {e}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
