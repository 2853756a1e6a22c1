"""Command-line front end.

Subcommands: hafnian, linked-sum, correlation, dqmc, inchworm, bench.
Exit codes: 0 success, 2 validation error, 3 capacity error, 4 I/O error.
Relative output paths resolve under $DIAGSUM_OUTPUT_DIR when it is set.
Seeds default to a fixed constant so runs replay by default.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import DIRECT_BENCH_CAP, bench_hafnian, bench_linked
from .dqmc import DEFAULT_M_MAX, dqmc_series
from .errors import CapacityError, DiagsumError, OutputError, ValidationError
from .hafnian import hafnian_ie
from .inchworm import inchworm_series
from .linkedsum import rounded_box
from .pairings import direct_influence, direct_linked_sum
from .series import emit_series
from .spinboson import CASE1, CASE2, bath_correlation, load_params

DEFAULT_SEED = 12345

OUTPUT_DIR_ENV = "DIAGSUM_OUTPUT_DIR"


def _out_path(raw: str) -> Path:
    path = Path(raw)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    return path


def _load_matrix(path: str) -> np.ndarray:
    """m x m complex matrix from JSON ([[ [re, im], ... ]]) or whitespace CSV.

    The CSV layout is m rows of 2m numbers: re im re im ...
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot read matrix file {path}: {exc}") from exc
    if p.suffix.lower() == ".json" or text.lstrip().startswith(("[", "{")):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
        arr = np.asarray(data, dtype=float)
        if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(
                f"{path}: expected an m x m grid of [re, im] pairs, got shape {arr.shape}")
        return arr[..., 0] + 1j * arr[..., 1]
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            vals = [float(tok) for tok in line.split()]
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: non-numeric entry: {exc}") from exc
        if len(vals) % 2:
            raise ValidationError(f"{path}:{lineno}: odd number of columns; "
                                  "entries are re im pairs")
        rows.append([complex(vals[i], vals[i + 1]) for i in range(0, len(vals), 2)])
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ValidationError(f"{path}: not a square matrix")
    return np.array(rows, dtype=complex)


def _check_correlation_matrix(B: np.ndarray, path: str) -> None:
    if not np.allclose(B, B.T, atol=1e-12, rtol=0.0):
        raise ValidationError(f"{path}: matrix must be symmetric")
    if np.any(np.abs(np.diagonal(B)) > 1e-12):
        raise ValidationError(f"{path}: matrix must have a zero diagonal")


def _resolve_params(args):
    if getattr(args, "params", None):
        return load_params(args.params)
    if getattr(args, "case", None) == 1:
        return CASE1
    if getattr(args, "case", None) == 2:
        return CASE2
    raise ValidationError("provide --params FILE or --case {1,2}")


def _add_params_args(sub) -> None:
    sub.add_argument("--params", help="key = value parameter file (Table-1 names)")
    sub.add_argument("--case", type=int, choices=(1, 2),
                     help="built-in parameter set")


def _cmd_hafnian(args) -> int:
    B = _load_matrix(args.matrix)
    _check_correlation_matrix(B, args.matrix)
    start = time.perf_counter()
    if args.engine == "ie":
        value = hafnian_ie(B)
    else:
        value = direct_influence(B)
    elapsed = time.perf_counter() - start
    print(f"{value.real:.17g} {value.imag:.17g}")
    if args.time:
        print(f"time_seconds {elapsed:.6f}", file=sys.stderr)
    return 0


def _cmd_linked_sum(args) -> int:
    B = _load_matrix(args.matrix)
    _check_correlation_matrix(B, args.matrix)
    start = time.perf_counter()
    if args.engine == "ie":
        value = rounded_box(B)
    else:
        value = direct_linked_sum(B)
    elapsed = time.perf_counter() - start
    print(f"{value.real:.17g} {value.imag:.17g}")
    if args.time:
        print(f"time_seconds {elapsed:.6f}", file=sys.stderr)
    return 0


def _cmd_correlation(args) -> int:
    p = _resolve_params(args)
    t_obs = args.t_obs
    if t_obs <= 0:
        raise ValidationError("--t-obs must be positive")
    taus = np.linspace(0.0, 2.0 * t_obs, args.points)
    path = _out_path(args.out)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau1", "tau2", "re", "im"])
            for i, tau1 in enumerate(taus):
                for tau2 in taus[i:]:
                    val = bath_correlation(p, float(tau1), float(tau2), t_obs)
                    writer.writerow([repr(float(tau1)), repr(float(tau2)),
                                     repr(val.real), repr(val.imag)])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    print(f"wrote {path}")
    return 0


def _emit(args, series) -> None:
    wrote = False
    if args.csv:
        emit_series(series, "csv", _out_path(args.csv))
        print(f"wrote {_out_path(args.csv)}")
        wrote = True
    if args.json:
        emit_series(series, "json", _out_path(args.json))
        print(f"wrote {_out_path(args.json)}")
        wrote = True
    if not wrote:
        for row in zip(series.times, series.mean_re, series.mean_im,
                       series.stderr_re, series.stderr_im):
            print(" ".join(repr(v) for v in row))


def _cmd_dqmc(args) -> int:
    p = _resolve_params(args)
    series = dqmc_series(
        p, args.t_final, args.h, args.n_samples, sampler_kind=args.sampler,
        b_const=args.b_const, m_max=args.m_max, m_bar=args.m_bar,
        seed=args.seed, threads=args.threads,
    )
    _emit(args, series)
    return 0


def _cmd_inchworm(args) -> int:
    p = _resolve_params(args)
    series = inchworm_series(
        p, args.t_final, args.h, args.n_rhs, replicas=args.replicas,
        b_const=args.b_const, m_max=args.m_max, m_bar=args.m_bar,
        seed=args.seed, threads=args.threads,
    )
    _emit(args, series)
    return 0


def _print_bench(report) -> None:
    print(f"# {report.kind}: median seconds over {report.trials} trials")
    ms = sorted(set(report.medians["direct"]) | set(report.medians["ie"]))
    print(f"{'m':>4} {'direct':>12} {'ie':>12}")
    for m in ms:
        direct = report.medians["direct"].get(m)
        ie = report.medians["ie"].get(m)
        mark = "out-of-cap" if m in report.skipped["direct"] else "-"
        print(f"{m:>4} {direct if direct is not None else mark:>12} "
              f"{ie if ie is not None else '-':>12}")
    crossover = report.crossover()
    print(f"crossover_m {crossover if crossover is not None else 'none'}")


def _cmd_bench(args) -> int:
    reports = []
    if args.kind in ("hafnian", "both"):
        reports.append(bench_hafnian(
            ms_direct=range(4, min(args.direct_max, DIRECT_BENCH_CAP) + 1, 2),
            ms_ie=range(4, args.ie_max + 1, 2),
            trials=args.trials, seed=args.seed))
    if args.kind in ("linked", "both"):
        reports.append(bench_linked(
            ms_direct=range(4, min(args.direct_max, DIRECT_BENCH_CAP) + 1, 2),
            ms_ie=range(4, args.ie_max + 1, 2),
            trials=args.trials, seed=args.seed))
    for report in reports:
        _print_bench(report)
    if args.json:
        path = _out_path(args.json)
        try:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump([r.to_dict() for r in reports], fh, indent=2, sort_keys=True)
                fh.write("\n")
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc}") from exc
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diagsum",
        description="Diagram summation kernels and Monte Carlo engines "
                    "for the spin-boson model.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("hafnian", help="sum over all pairings of a matrix")
    sub.add_argument("matrix", help="JSON or whitespace-CSV matrix of re,im pairs")
    sub.add_argument("--engine", choices=("ie", "direct"), default="ie")
    sub.add_argument("--time", action="store_true", help="report wall time on stderr")
    sub.set_defaults(func=_cmd_hafnian)

    sub = subs.add_parser("linked-sum", help="sum over linked pairings of a matrix")
    sub.add_argument("matrix", help="JSON or whitespace-CSV matrix of re,im pairs")
    sub.add_argument("--engine", choices=("ie", "direct"), default="ie")
    sub.add_argument("--time", action="store_true", help="report wall time on stderr")
    sub.set_defaults(func=_cmd_linked_sum)

    sub = subs.add_parser("correlation", help="dump a bath-correlation grid as CSV")
    _add_params_args(sub)
    sub.add_argument("--t-obs", type=float, required=True, help="fold time")
    sub.add_argument("--points", type=int, default=101, help="grid points on [0, 2t]")
    sub.add_argument("--out", default="correlation.csv")
    sub.set_defaults(func=_cmd_correlation)

    sub = subs.add_parser("dqmc", help="bare diagrammatic Monte Carlo series")
    _add_params_args(sub)
    sub.add_argument("--t-final", type=float, required=True)
    sub.add_argument("--h", type=float, default=0.1)
    sub.add_argument("--n-samples", type=int, default=100_000)
    sub.add_argument("--sampler", choices=("poisson", "exact", "fixed"),
                     default="poisson")
    sub.add_argument("--b-const", type=float, default=0.2)
    sub.add_argument("--m-max", type=int, default=DEFAULT_M_MAX)
    sub.add_argument("--m-bar", type=int, default=None,
                     help="fixed even truncation (convergence-study test mode)")
    sub.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sub.add_argument("--threads", type=int, default=1)
    sub.add_argument("--csv")
    sub.add_argument("--json")
    sub.set_defaults(func=_cmd_dqmc)

    sub = subs.add_parser("inchworm", help="inchworm Monte Carlo series")
    _add_params_args(sub)
    sub.add_argument("--t-final", type=float, required=True)
    sub.add_argument("--h", type=float, default=0.1)
    sub.add_argument("--n-rhs", type=int, default=64,
                     help="Monte Carlo samples per right-hand-side evaluation")
    sub.add_argument("--replicas", type=int, default=4,
                     help="independent solves per time point (for the stderr)")
    sub.add_argument("--b-const", type=float, default=0.2)
    sub.add_argument("--m-max", type=int, default=DEFAULT_M_MAX)
    sub.add_argument("--m-bar", type=int, default=None,
                     help="fixed even truncation (convergence-study test mode)")
    sub.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sub.add_argument("--threads", type=int, default=1)
    sub.add_argument("--csv")
    sub.add_argument("--json")
    sub.set_defaults(func=_cmd_inchworm)

    sub = subs.add_parser("bench", help="wall-clock benchmark of both kernels")
    sub.add_argument("--kind", choices=("hafnian", "linked", "both"), default="both")
    sub.add_argument("--trials", type=int, default=5)
    sub.add_argument("--direct-max", type=int, default=DIRECT_BENCH_CAP)
    sub.add_argument("--ie-max", type=int, default=20)
    sub.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sub.add_argument("--json")
    sub.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DiagsumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return OutputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
