"""Command-line entry point.

    lqg-rendezvous run --scenario <path|preset> [--seed S] [--runs R] [--out DIR]
                       [--dump-gains] [--mode local|global]
    lqg-rendezvous verify --suite kalman|riccati|lemma1|bound

Exit status is 0 on success, 2 on configuration errors and 1 on runtime
failures; errors are reported on one stderr line starting with
``lqg-rendezvous: config-error:`` or ``lqg-rendezvous: runtime-error:``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, oracles
from .config import config_hash, config_to_dict, load_scenario
from .control import CostWeights, GainSchedule, riccati_backward
from .errors import ConfigurationError
from .estimation import steady_state_covariance
from .sim import EpisodeTrace, run_monte_carlo

PROG = "lqg-rendezvous"
TRACE_FIELDS = ("x", "y", "theta", "xhat", "yhat", "Px", "Py", "ux", "uy", "vl", "vr")
CSV_SCHEMA = "lqg-rendezvous-trace/1"


def trace_header(n: int) -> list[str]:
    return ["step", "time_s"] + [f"{f}_{i}" for i in range(n) for f in TRACE_FIELDS]


def emit_trace_csv(trace: EpisodeTrace, path) -> None:
    """One row per step; floats use ``repr`` so they parse back to the same doubles."""
    n = trace.truth.shape[1]
    cols = np.concatenate([
        trace.truth, trace.est, trace.cov, trace.velocity, trace.wheels,
    ], axis=2)  # (T, N, 11) in TRACE_FIELDS order
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_header(n))
        for k in range(trace.n_records):
            w.writerow([k, repr(k * trace.h)] + [repr(float(v)) for v in cols[k].ravel()])


def read_trace_csv(path) -> dict:
    """Parse a trace CSV into ``{column: float array}``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in row] for row in body]).reshape(len(body), len(header))
    return {name: data[:, j] for j, name in enumerate(header)}


def emit_gains_csv(schedule: GainSchedule, path) -> None:
    m = schedule.horizon
    n = schedule.pi.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if schedule.is_scalar:
            w.writerow(["step", "pi", "gain"])
            for k in range(m + 1):
                g = repr(float(schedule.gains[k, 0, 0])) if k < m else ""
                w.writerow([k, repr(float(schedule.pi[k, 0, 0])), g])
        else:
            idx = [(i, j) for i in range(n) for j in range(n)]
            w.writerow(["step"] + [f"pi_{i}_{j}" for i, j in idx] + [f"gain_{i}_{j}" for i, j in idx])
            for k in range(m + 1):
                gains = [repr(float(schedule.gains[k, i, j])) if k < m else "" for i, j in idx]
                w.writerow([k] + [repr(float(schedule.pi[k, i, j])) for i, j in idx] + gains)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, default=_json_default, allow_nan=False)
        fh.write("\n")


# ------------------------------------------------------------------------ run

def cmd_run(args) -> int:
    config = load_scenario(args.scenario)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.runs is not None:
        changes["monte_carlo_runs"] = args.runs
    if args.mode is not None:
        changes["gain_mode"] = args.mode
    if changes:
        config = dataclasses.replace(config, **changes)

    out = Path(args.out or os.environ.get("RENDEZVOUS_OUT_DIR") or "out")
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    mc = run_monte_carlo(config)
    summary = analysis.summarize(mc)

    outputs = {"trace": str(out / "trace_run000.csv"), "summary": str(out / "summary.json")}
    emit_trace_csv(mc.traces[0], outputs["trace"])
    _write_json(summary, outputs["summary"])
    if args.dump_gains:
        outputs["gains"] = str(out / "gains.csv")
        emit_gains_csv(mc.schedule, outputs["gains"])
    outputs["manifest"] = str(out / "manifest.json")
    manifest = {
        "scenario": config.name,
        "config_hash": config_hash(config),
        "config": config_to_dict(config),
        "master_seed": config.master_seed,
        "artifact_version": __version__,
        "outputs": outputs,
        "wall_clock_s": time.perf_counter() - t0,
    }
    _write_json(manifest, outputs["manifest"])
    conv = summary["convergence"]
    print(f"{config.name}: {mc.runs} run(s), converged {conv['converged_runs']}/{mc.runs}, "
          f"terminal MSE {summary['terminal']['mse']:.3e} -> {out}")
    return 0


# --------------------------------------------------------------------- verify

def _suite_kalman(rng):
    q = 10.0 ** rng.uniform(-9, -2, 50)
    r = 10.0 ** rng.uniform(-9, -2, 50)
    p, _ = oracles.iterate_covariance(q, r)
    for qi, ri, pi in zip(q, r, p):
        ref = steady_state_covariance(qi, ri)
        yield f"q={qi:.3e} r={ri:.3e}", abs(pi - ref) <= 1e-10, f"iterated {pi:.6e} closed-form {ref:.6e}"


def _suite_riccati(rng):
    for i in range(20):
        m = int(rng.integers(1, 5))
        a, b = rng.uniform(0.5, 1.5), rng.uniform(0.05, 1.0)
        q, r, qm = rng.uniform(0.0, 2.0), rng.uniform(0.1, 2.0), rng.uniform(0.0, 2.0)
        x0 = rng.uniform(-1.0, 1.0)
        w = CostWeights.scalar(q, r, qm, m)
        sched = riccati_backward(w, [[a]], [[b]])
        gains = sched.gains[:, 0, 0]
        cost = oracles.closed_loop_cost(a, b, q, r, qm, x0, gains[None, :])[0]
        best, _ = oracles.lq_min_cost(a, b, q, r, qm, x0, m)
        spread = np.abs(gains).max() + 1.0
        rand = oracles.closed_loop_cost(a, b, q, r, qm, x0, rng.uniform(-2 * spread, 2 * spread, (10_000, m)))
        ok = abs(cost - best) <= 1e-8 and np.all(rand >= cost - 1e-9)
        yield f"instance {i} M={m}", ok, f"riccati {cost:.12g} lstsq {best:.12g} random-min {rand.min():.12g}"


def _suite_quadratic(rng):
    for i in range(20):
        n = int(rng.integers(1, 5))
        m = rng.normal(size=n)
        cov = oracles.random_psd(rng, n)
        s = oracles.random_symmetric(rng, n)
        chk = analysis.quadratic_expectation_oracle(m, cov, s, 1_000_000, rng)
        yield (f"triple {i} n={n}", chk.passed(5.0),
               f"empirical {chk.empirical:.6g} analytic {chk.analytic:.6g} se {chk.std_error:.3g}")


def _suite_bound(rng):
    config = dataclasses.replace(load_scenario("paper-sec5-low-noise"), stop_on_convergence=False)
    mc = run_monte_carlo(config)
    for ax in analysis.AXES:
        chk = analysis.stability_check(mc, ax)
        if chk["error"]:
            yield f"axis {ax}", False, chk["error"]
        else:
            yield (f"axis {ax}", chk["holds"],
                   f"lambda {chk['lambda']:.4f} mu {chk['mu']:.3e} max mse/bound {chk['max_ratio']:.3f} "
                   f"violations at steps {chk['violations']}")


SUITES = {"kalman": _suite_kalman, "riccati": _suite_riccati, "lemma1": _suite_quadratic, "bound": _suite_bound}


def cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    failures = 0
    for label, ok, detail in SUITES[args.suite](rng):
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'} {args.suite} {label}: {detail}")
    print(f"{args.suite}: {'all passed' if not failures else f'{failures} failed'}")
    return 0 if not failures else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=PROG, description="Distributed LQG rendezvous simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario (Monte Carlo batch)")
    run.add_argument("--scenario", required=True, help="scenario TOML file or preset name")
    run.add_argument("--seed", type=int, help="master seed override")
    run.add_argument("--runs", type=int, help="Monte Carlo run count override")
    run.add_argument("--out", help="output directory (default $RENDEZVOUS_OUT_DIR or ./out)")
    run.add_argument("--dump-gains", action="store_true", help="also write gains.csv")
    run.add_argument("--mode", choices=("local", "global"), help="gain mode override")
    run.set_defaults(func=cmd_run)
    ver = sub.add_parser("verify", help="run an oracle check suite")
    ver.add_argument("--suite", required=True, choices=sorted(SUITES))
    ver.add_argument("--seed", type=int, default=12345)
    ver.set_defaults(func=cmd_verify)
    return p


def run_command(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"{PROG}: config-error: {' '.join(str(exc).split())}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single-line report for any runtime failure
        print(f"{PROG}: runtime-error: {type(exc).__name__}: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1


def main(argv=None) -> None:
    sys.exit(run_command(argv))
