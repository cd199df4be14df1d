"""Command-line experiment runner.

    brwlevel run      --config exp.toml   # every task in the config
    brwlevel rates    --config exp.toml   # rates / sweep tasks only
    brwlevel simulate --config exp.toml
    brwlevel oracle   --config exp.toml
    brwlevel bound    --config exp.toml
    brwlevel table    --config exp.toml

Outputs go to ``--out``, else the config's ``output_dir``, else
``$BRWLEVEL_OUT``, else ``./brwlevel_out``.  Every file carries the config
hash and seed; nothing depends on the wall clock.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import rare_event, simulator
from .config import build_spec, load_config
from .deviation import Regime, dump_curve_csv, rate
from .errors import BRWError, ConfigParseError, UnsupportedRegime
from .rng import stream

ENV_OUT = "BRWLEVEL_OUT"
EXIT_OK, EXIT_PARSE, EXIT_UNSUPPORTED, EXIT_NUMERICAL = 0, 2, 3, 4

SUBCOMMAND_KINDS = {
    "run": None,
    "rates": ("rates", "sweep"),
    "simulate": ("simulate",),
    "oracle": ("oracle",),
    "bound": ("strategy",),
    "table": ("table",),
}


class TaskFailure(Exception):
    def __init__(self, op, exc):
        super().__init__(f"{op}: {type(exc).__name__}: {exc}")
        self.op = op
        self.exc = exc


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (Regime,)):
        return v.value
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _header(ctx):
    return f"# config_hash={ctx['hash']} seed={ctx['seed']}\n"


# ---------------------------------------------------------------------------
# regime table
# ---------------------------------------------------------------------------

def regime_rows(specs):
    rows = []
    for spec in specs:
        try:
            res = rate(spec)
            rows.append({"regime": res.regime.value, "scale": res.scale,
                         "constant": res.constant, "branch": res.branch})
        except UnsupportedRegime:
            rows.append({"regime": "Unsupported", "scale": "", "constant": math.nan, "branch": ""})
    return sorted(rows, key=lambda r: r["regime"])


def emit_regime_table(specs, fmt="markdown"):
    """One row per spec (regime, scale, constant, branch), sorted by regime."""
    rows = regime_rows(specs)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["regime", "scale", "constant", "branch"])
        for r in rows:
            w.writerow([r["regime"], r["scale"], repr(float(r["constant"])), r["branch"]])
        return buf.getvalue()
    lines = ["| regime | scale | constant | branch |", "|---|---|---|---|"]
    for r in rows:
        c = "n/a" if math.isnan(r["constant"]) else f"{r['constant']:.10g}"
        lines.append(f"| {r['regime']} | {r['scale']} | {c} | {r['branch']} |")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# task handlers; each returns summary rows (label, value) and writes files
# ---------------------------------------------------------------------------

def task_rates(task, spec, ctx, idx):
    res = rate(spec)
    out = {"config_hash": ctx["hash"], "seed": ctx["seed"], "model": spec.to_dict(),
           "x_star": spec.x_star, **res.to_dict()}
    if res.regime is Regime.BOTTCHER_BOUNDED:
        out["a_star"] = res.aux["a_star"]
        out["c_bar"] = res.aux.get("c_bar")
    name = "rates.json" if idx == ctx["first_rates"] else f"rates_{idx}.json"
    _dump_json(os.path.join(ctx["out"], name), out)
    if task.get("curves"):
        curves = {Regime.SCHRODER_LIGHT: ("f", "d"), Regime.BOTTCHER_BOUNDED: ("F_L",)}.get(res.regime, ())
        for c in curves:
            dump_curve_csv(spec, c, os.path.join(ctx["out"], f"curve_{c}_{idx}.csv"), preamble=_header(ctx))
    return [(f"{res.regime.value} constant ({res.scale}, {res.branch})", res.constant)]


def task_sweep(task, spec, ctx, idx):
    param = task.get("param", "a")
    if param not in ("a", "theta"):
        raise ValueError(f"sweep param must be 'a' or 'theta', got {param!r}")
    path = os.path.join(ctx["out"], f"sweep_{param}_{idx}.csv")
    with open(path, "w", newline="") as fh:
        fh.write(_header(ctx))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([param, "regime", "scale", "constant", "branch"])
        for v in task["values"]:
            s = spec.with_params(**{param: v})
            res = rate(s)
            w.writerow([repr(float(v)), res.regime.value, res.scale, repr(res.constant), res.branch])
    return [(f"sweep over {param}", len(task["values"]))]


def task_simulate(task, spec, ctx, idx):
    n_max = int(task.get("n_max", 20))
    reps = int(task.get("reps", 10))
    mode = task.get("mode", "cohort")
    thetas = [float(t) for t in task.get("thetas", [spec.theta])]
    levels = [simulator.Level(t, spec.x_star) for t in thetas]
    rng = stream(ctx["seed"], idx)
    res = simulator.run_brw_batch(spec.off, spec.step, n_max, levels, reps, rng, mode)
    os.makedirs(os.path.join(ctx["out"], "sim"), exist_ok=True)
    path = os.path.join(ctx["out"], "sim", f"simulate_{idx}.csv")
    with open(path, "w", newline="") as fh:
        fh.write(_header(ctx))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "n", "total"] + [f"count@theta={t!r}" for t in thetas] + ["mode"])
        for r in range(reps):
            for n in range(n_max + 1):
                w.writerow([r, n, repr(float(res.totals[r, n]))]
                           + [repr(float(res.counts[r, n, i])) for i in range(len(thetas))] + [res.modes[n]])
    window = tuple(task.get("window", (n_max // 2, n_max)))
    summary = {"config_hash": ctx["hash"], "seed": ctx["seed"], "window": list(window), "slopes": {}}
    rows = []
    for i, th in enumerate(thetas):
        slopes = []
        for r in range(reps):
            try:
                slopes.append(simulator.biggins_slope(res.records(r), th, window))
            except BRWError:
                pass
        theory = spec.log_m - spec.I(th * spec.x_star)
        mean = float(np.mean(slopes)) if slopes else math.nan
        se = float(np.std(slopes, ddof=1) / math.sqrt(len(slopes))) if len(slopes) > 1 else math.nan
        summary["slopes"][repr(th)] = {"mean": mean, "std_error": se, "runs": len(slopes), "theory": theory}
        rows.append((f"slope theta={th} (theory {theory:.6g})", mean))
    _dump_json(os.path.join(ctx["out"], "sim", f"simulate_{idx}.json"), summary)
    return rows


def task_oracle(task, spec, ctx, idx):
    xs = task.get("x", [0.5])
    xs = xs if isinstance(xs, list) else [xs]
    n = int(task.get("n", 100))
    reps = int(task.get("reps", 100_000))
    os.makedirs(os.path.join(ctx["out"], "sim"), exist_ok=True)
    path = os.path.join(ctx["out"], "sim", f"oracle_{idx}.csv")
    rows = []
    with open(path, "w", newline="") as fh:
        fh.write(_header(ctx))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "n", "log_prob_estimate", "std_error", "rate_estimate", "theory_rate"])
        for j, x in enumerate(xs):
            r = simulator.cramer_is_estimate(spec.step, float(x), n, reps, stream(ctx["seed"], idx, j), rf=spec.rf)
            w.writerow([repr(float(x)), n, repr(r.log_prob_estimate), repr(r.std_error),
                        repr(r.rate_estimate), repr(r.theory / n)])
            rows.append((f"oracle x={x}: rate estimate (theory {r.theory / n:.6g})", r.rate_estimate))
    return rows


def task_strategy(task, spec, ctx, idx):
    kind = task.get("strategy", "schroder")
    n = int(task["n"])
    reps = int(task.get("reps", 10_000))
    rng = stream(ctx["seed"], idx)
    if kind == "schroder":
        if "rho" in task:
            rep = rare_event.schroder_strategy_bound(spec, float(task["rho"]), n, reps, rng,
                                                     task.get("eps"), int(task.get("residual_reps", 2000)))
        else:
            rep, _ = rare_event.optimized_schroder_bound(spec, n, reps, rng, eps=task.get("eps"),
                                                         residual_reps=int(task.get("residual_reps", 2000)))
    elif kind == "uniform":
        rep = rare_event.bottcher_uniform_bound(spec, task.get("L_prime"), task.get("delta"), n, reps, rng)
    elif kind == "geometric":
        rep = rare_event.bottcher_geometric_bound(spec, n, reps, rng, task.get("delta"))
    else:
        raise ValueError(f"unknown strategy {kind!r}")
    os.makedirs(os.path.join(ctx["out"], "bounds"), exist_ok=True)
    out = {"config_hash": ctx["hash"], "seed": ctx["seed"], **rep.to_dict()}
    _dump_json(os.path.join(ctx["out"], "bounds", f"{kind}_{idx}.json"), out)
    return [(f"{rep.kind} bound at n={n} ({rep.scale}; theory {rep.theory:.6g})", rep.scaled)]


def task_table(task, spec, ctx, idx):
    models = task.get("models")
    specs = [build_spec(m) for m in models] if models else [spec]
    base = os.path.join(ctx["out"], f"regime_table_{idx}")
    for fmt, ext in (("markdown", ".md"), ("csv", ".csv")):
        with open(base + ext, "w") as fh:
            fh.write(_header(ctx) if ext == ".csv" else f"<!-- config_hash={ctx['hash']} seed={ctx['seed']} -->\n")
            fh.write(emit_regime_table(specs, fmt))
    return [(f"regime table ({len(specs)} rows)", len(specs))]


HANDLERS = {"rates": task_rates, "sweep": task_sweep, "simulate": task_simulate,
            "oracle": task_oracle, "strategy": task_strategy, "table": task_table}


def _run_task(task, spec, ctx, idx):
    kind = task["kind"]
    try:
        return HANDLERS[kind](task, spec, ctx, idx)
    except (UnsupportedRegime, ConfigParseError):
        raise
    except (BRWError, ArithmeticError, ValueError) as exc:
        raise TaskFailure(f"tasks[{idx}] ({kind})", exc) from exc


def run_experiment(config_path, out=None, seed=None, jobs=1, kinds=None):
    """Run the config's tasks; returns the output directory."""
    cfg = load_config(config_path)
    if seed is not None:
        cfg.seed = int(seed)
    out = out or cfg.output_dir or os.environ.get(ENV_OUT) or "brwlevel_out"
    spec = build_spec(cfg.model, validate=False)
    tasks = cfg.tasks or [{"kind": "rates"}]
    chosen = [(i, t) for i, t in enumerate(tasks) if kinds is None or t["kind"] in kinds]
    if not chosen and kinds is not None:
        chosen = [(len(tasks), {"kind": kinds[0]})]
    needs_valid = any(t["kind"] in ("rates", "strategy") for _, t in chosen)
    if needs_valid:
        try:
            spec.validate()
        except ValueError as exc:
            raise ConfigParseError(str(exc)) from exc
    os.makedirs(out, exist_ok=True)
    rates_idx = [i for i, t in chosen if t["kind"] == "rates"]
    ctx = {"out": out, "seed": cfg.seed, "hash": cfg.hash, "first_rates": rates_idx[0] if rates_idx else None}
    with open(os.path.join(out, "config.toml"), "w") as fh:
        fh.write(cfg.dumps())
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(_run_task, t, spec, ctx, i) for i, t in chosen]
            results = [f.result() for f in futs]
    else:
        results = [_run_task(t, spec, ctx, i) for i, t in chosen]
    lines = ["# Experiment summary", "", f"config_hash: `{cfg.hash}`  ", f"seed: {cfg.seed}", "",
             "| task | kind | quantity | value |", "|---|---|---|---|"]
    for (i, t), rows in zip(chosen, results):
        for label, value in rows:
            v = f"{value:.10g}" if isinstance(value, float) else str(value)
            lines.append(f"| {i} | {t['kind']} | {label} | {v} |")
    with open(os.path.join(out, "summary.md"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="brwlevel", description="Level-set lower deviations of branching random walks.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_KINDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="TOML experiment file")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--out", default=None, help="output directory")
        s.add_argument("--jobs", type=int, default=1, help="tasks run concurrently")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        out = run_experiment(args.config, args.out, args.seed, args.jobs, SUBCOMMAND_KINDS[args.command])
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except UnsupportedRegime as exc:
        print(f"unsupported regime: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except TaskFailure as exc:
        print(f"numerical failure in {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
