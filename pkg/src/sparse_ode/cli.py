"""Command line: simulate oscillator data, fit a system, run the benchmark.

Data files are long-format CSV with header ``time,series,value``. Families
can be pinned in a JSON sidecar ``<file>.families.json`` mapping series name
to family, or with ``--family name=family``; otherwise they are inferred.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ._validation import infer_family
from .basis import make_bspline_basis
from .collocation import SmoothConfig, fit_grade, fit_vanilla, smooth_processes_with_lambdas
from .exceptions import (ConvergenceFailure, FitFailure, InvalidConfigurationError,
                         InvalidDataError, NumericError, SparseODEError)
from .expfam import get_family
from .model import ObservationSet
from .penalties import Penalty
from .profiling import TuningConfig, fit_hdgp
from .results import BIC_SCALES, FitResult
from .simulate import (BenchmarkConfig, generate_observations, oscillator_truth, run_benchmark,
                       support_rates, write_benchmark)

HEADER = ("time", "series", "value")
GRID_POINTS = 201


class UsageError(Exception):
    pass


def _num(v) -> str:
    return repr(float(v))


# --- ingestion ----------------------------------------------------------------

def ingest_csv(path, families: dict | None = None) -> ObservationSet:
    """Read a long-format ``time,series,value`` file into an ObservationSet.

    Series become columns in order of first appearance; times are rescaled
    to [0, 1]. ``families`` (series -> family name) overrides the sidecar,
    which overrides inference.
    """
    path = Path(path)
    cells: dict = {}
    order: list = []
    times: set = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HEADER:
            raise InvalidDataError(f"{path}: header must be {','.join(HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise InvalidDataError(f"{path}, line {lineno}: expected 3 fields, got {len(row)}")
            t_raw, name, v_raw = (x.strip() for x in row)
            try:
                t, v = float(t_raw), float(v_raw)
            except ValueError:
                raise InvalidDataError(
                    f"{path}, line {lineno}: non-numeric time or value {t_raw!r}, {v_raw!r}"
                ) from None
            if not (math.isfinite(t) and math.isfinite(v)):
                raise InvalidDataError(f"{path}, line {lineno}: time and value must be finite")
            if name not in cells:
                cells[name] = {}
                order.append(name)
            if t in cells[name]:
                raise InvalidDataError(f"{path}, line {lineno}: duplicate entry for "
                                       f"series {name!r} at time {t_raw}")
            cells[name][t] = v
            times.add(t)
    if not order:
        raise InvalidDataError(f"{path}: no observations")
    grid = sorted(times)
    gaps = [f"{name}@{t!r}" for name in order for t in grid if t not in cells[name]]
    if gaps:
        shown = ", ".join(gaps[:20]) + (" ..." if len(gaps) > 20 else "")
        raise InvalidDataError(f"{path}: ragged series, missing {len(gaps)} cells: {shown}")
    Y = np.array([[cells[name][t] for name in order] for t in grid])

    sidecar = path.with_name(path.name + ".families.json")
    chosen = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    chosen.update(families or {})
    unknown = set(chosen) - set(order)
    if unknown:
        raise InvalidDataError(f"family given for unknown series: {sorted(unknown)}")
    fams = [get_family(chosen.get(name, infer_family(Y[:, j]))) for j, name in enumerate(order)]
    return ObservationSet.from_raw(np.array(grid), Y, fams, names=order)


def write_observations(data: ObservationSet, path) -> None:
    path = Path(path)
    t = data.time_offset + data.time_scale * data.times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for i, ti in enumerate(t):
            for j, name in enumerate(data.names):
                w.writerow([_num(ti), name, _num(data.y[i, j])])
    sidecar = path.with_name(path.name + ".families.json")
    sidecar.write_text(json.dumps({n: f.name for n, f in zip(data.names, data.families)},
                                  indent=1) + "\n")


# --- output -------------------------------------------------------------------

def write_gamma_csv(gamma: np.ndarray, names, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target", "intercept", *names])
        for name, row in zip(names, gamma):
            w.writerow([name, *map(_num, row)])


def read_gamma_csv(path) -> tuple[list, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0][2:]
    gamma = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return names, gamma


def _compact_trace(trace) -> list:
    out = []
    for entry in trace:
        e = {k: v for k, v in entry.items() if k not in ("sweeps",)}
        if "sweeps" in entry:
            e["sweeps"] = [{"lambda_theta": s["lambda_theta"], "gamma_change": s["gamma_change"],
                            "fidelity": s["fidelity"], "outer_steps": len(s["h_steps"]),
                            "h_start": s["h_steps"][0][1] if s["h_steps"] else None,
                            "h_end": s["h_steps"][-1][2] if s["h_steps"] else None,
                            "failures": s["failures"]} for s in entry["sweeps"]]
        out.append(e)
    return out


def emit_result(result: FitResult, data: ObservationSet, outdir, config: dict | None = None,
                seed=None, extra: dict | None = None) -> Path:
    """Write gamma.csv, edges.csv, fit.csv and meta.json into ``outdir``."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidConfigurationError(f"cannot create output directory {outdir}: {exc}") from exc
    scale = data.time_scale
    gamma = result.gamma_hat.gamma / scale
    write_gamma_csv(gamma, data.names, outdir / "gamma.csv")

    with open(outdir / "edges.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "target", "weight", "sign"])
        for j, target in enumerate(data.names):
            for k, source in enumerate(data.names):
                g = gamma[j, k + 1]
                if g != 0:
                    w.writerow([source, target, _num(g), "promote" if g > 0 else "suppress"])

    s = np.linspace(0.0, 1.0, GRID_POINTS)
    theta = result.fit.values(s)
    dtheta = result.fit.values(s, 1) / scale
    with open(outdir / "fit.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", *data.names, *(f"d_{n}" for n in data.names)])
        for i, si in enumerate(s):
            w.writerow([_num(data.time_offset + scale * si), *map(_num, theta[i]),
                        *map(_num, dtheta[i])])

    meta = {
        "method": result.info.get("method"),
        "config": config or {},
        "seed": seed,
        "series": list(data.names),
        "families": [f.name for f in data.families],
        "time_offset": data.time_offset,
        "time_scale": data.time_scale,
        "lambda_gamma": result.lambda_gamma,
        "lambda_theta_final": result.lambda_theta_final,
        "bic": result.bic,
        "fidelity": result.fidelity,
        "n_edges": int(np.count_nonzero(gamma[:, 1:])),
        "info": {k: v for k, v in result.info.items() if k != "config"},
        "trace": _compact_trace(result.trace),
    }
    meta.update(extra or {})
    with open(outdir / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, default=_json_default)
    return outdir


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


# --- argument handling ----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _snr(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid SNR {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("SNR must be positive")
    return v


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number list {text!r}") from None


def _ints(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer list {text!r}") from None


def _words(text: str) -> list:
    return [x.strip() for x in text.split(",") if x.strip()]


def _family_override(text: str) -> tuple:
    name, sep, fam = text.partition("=")
    if not sep or not name or not fam:
        raise argparse.ArgumentTypeError("expected NAME=FAMILY")
    return name, fam


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sparse-ode", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="write oscillator data and its true system")
    sim.add_argument("--family", default="gaussian", choices=["gaussian", "poisson", "bernoulli"])
    sim.add_argument("--n", type=int, default=500)
    noise = sim.add_mutually_exclusive_group()
    noise.add_argument("--snr", type=_snr, default=None)
    noise.add_argument("--sigma", type=float, default=None)
    sim.add_argument("--sign", type=int, choices=[-1, 1], default=-1)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)

    fit = sub.add_parser("fit", help="estimate a sparse linear ODE from a CSV file")
    fit.add_argument("--input", required=True)
    fit.add_argument("--out", required=True)
    fit.add_argument("--method", default="hdgp", choices=["hdgp", "vanilla", "grade"])
    fit.add_argument("--penalty", default="lasso", choices=["lasso", "scad"])
    fit.add_argument("--scad-a", type=float, default=3.7)
    fit.add_argument("--family", type=_family_override, action="append", default=[],
                     metavar="NAME=FAMILY")
    fit.add_argument("--lambda-gamma", type=_floats, default=None,
                     help="comma-separated lambda_gamma grid")
    fit.add_argument("--lambda-theta-init", type=float, default=None)
    fit.add_argument("--delta-init", type=float, default=None)
    fit.add_argument("--fidelity-threshold", type=float, default=None)
    fit.add_argument("--gamma-tol", type=float, default=None)
    fit.add_argument("--threshold-factor", type=float, default=None)
    fit.add_argument("--max-outer-sweeps", type=int, default=None)
    fit.add_argument("--mode", choices=["gauss_seidel", "jacobi"], default=None)
    fit.add_argument("--bic-scale", choices=list(BIC_SCALES), default=None)
    fit.add_argument("--warm-start", action="store_true")
    fit.add_argument("--roughness-lambda", type=float, default=None,
                     help="fixed smoothing penalty (default: chosen automatically)")
    fit.add_argument("--truth", default=None, help="true gamma.csv to score the support against")
    fit.add_argument("--seed", type=int, default=None, help="recorded in meta.json")
    fit.add_argument("--workers", type=int, default=1)

    bench = sub.add_parser("benchmark", help="run the oscillator benchmark")
    bench.add_argument("--families", type=_words, default=["gaussian"])
    bench.add_argument("--ns", type=_ints, default=[500])
    bench.add_argument("--snrs", type=_floats, default=[10.0])
    bench.add_argument("--penalties", type=_words, default=["lasso"])
    bench.add_argument("--methods", type=_words, default=["hdgp", "vanilla", "grade"])
    bench.add_argument("--reps", type=int, default=50)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--sign", type=int, choices=[-1, 1], default=-1)
    bench.add_argument("--workers", type=int, default=1)
    bench.add_argument("--out", required=True)
    return p


# --- commands ---------------------------------------------------------------------

def _cmd_simulate(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth_ss, noise_ss = np.random.SeedSequence(args.seed).spawn(2)
    truth = oscillator_truth(truth_ss, args.sign)
    data = generate_observations(truth, args.family, args.n, snr=args.snr, sigma=args.sigma,
                                 seed=noise_ss)
    write_observations(data, out / "data.csv")
    write_gamma_csv(truth.gamma.gamma, data.names, out / "truth_gamma.csv")
    (out / "truth.json").write_text(json.dumps({
        "family": args.family, "n": args.n,
        "snr": None if args.snr is None else ("inf" if math.isinf(args.snr) else args.snr),
        "sigma": args.sigma, "sign": args.sign, "seed": args.seed,
        "phases": truth.phases.tolist(),
    }, indent=1) + "\n")


def _tuning_from(args) -> TuningConfig:
    overrides = {
        "lambda_gamma_grid": sorted(args.lambda_gamma, reverse=True) if args.lambda_gamma else None,
        "lambda_theta_init": args.lambda_theta_init,
        "delta_init": args.delta_init,
        "fidelity_change_threshold": args.fidelity_threshold,
        "gamma_tol": args.gamma_tol,
        "threshold_factor": args.threshold_factor,
        "max_outer_sweeps": args.max_outer_sweeps,
        "mode": args.mode,
        "bic_scale": args.bic_scale,
    }
    kw = {k: v for k, v in overrides.items() if v is not None}
    if args.warm_start:
        kw["warm_start"] = True
    return TuningConfig(**kw)


def _cmd_fit(args) -> None:
    data = ingest_csv(args.input, dict(args.family))
    basis = make_bspline_basis(data.n)
    pen = Penalty(args.penalty, 0.0, args.scad_a)
    tuning = _tuning_from(args)
    smooth_cfg = SmoothConfig(basis, "auto" if args.roughness_lambda is None
                              else args.roughness_lambda)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        smooth_fit, smooth_lams = smooth_processes_with_lambdas(data, smooth_cfg)
        if args.method == "hdgp":
            result = fit_hdgp(data, tuning, pen, basis, smooth=smooth_fit)
            config = tuning.to_dict()
        else:
            runner = fit_vanilla if args.method == "vanilla" else fit_grade
            result = runner(data, basis, pen, lambda_gamma_grid=tuning.lambda_gamma_grid,
                            smooth=smooth_fit, bic_scale=tuning.bic_scale)
            config = {"lambda_gamma_grid": tuning.lambda_gamma_grid,
                      "bic_scale": tuning.bic_scale}
    config.update({"method": args.method, "penalty": asdict(pen), "input": str(args.input),
                   "spline_order": basis.order, "n_basis": basis.n_basis,
                   "roughness_lambda": args.roughness_lambda or "auto",
                   "smoothing_lambdas": smooth_lams, "workers": args.workers})
    notes = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    extra = {"warnings": notes}
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    if args.truth:
        names, g_true = read_gamma_csv(args.truth)
        if list(names) != list(data.names):
            raise InvalidDataError(f"truth series {names} do not match data series "
                                   f"{list(data.names)}")
        tpr, fpr = support_rates(result.gamma_hat.interactions, g_true[:, 1:])
        extra["truth_support"] = {"tpr": tpr, "fpr": fpr, "truth": str(args.truth)}
    emit_result(result, data, args.out, config, args.seed, extra)


def _cmd_benchmark(args) -> None:
    cfg = BenchmarkConfig(tuple(args.families), tuple(args.ns), tuple(args.snrs),
                          tuple(args.penalties), tuple(args.methods), args.reps, args.seed,
                          args.sign)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = run_benchmark(cfg, workers=args.workers)
    write_benchmark(table, out / "benchmark.csv", out / "benchmark.json")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be at least 1")
        {"simulate": _cmd_simulate, "fit": _cmd_fit, "benchmark": _cmd_benchmark}[
            args.command](args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except (InvalidConfigurationError, InvalidDataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, ConvergenceFailure, FitFailure, ArithmeticError,
            np.linalg.LinAlgError, SparseODEError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(json.dumps(diag, indent=1, default=_json_default), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
