"""Command-line entry point: ``smartho <subcommand> ...``.

Exit codes: 0 success, 1 configuration or input error, 2 runtime assertion.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import pipeline, qmodel, wire
from .sim import forwarding as fwd
from .sim import metrics
from .sim.config import MODES, SMARTHO, TRADITIONAL, ConfigError, ScenarioConfig, load_json
from .sim.engine import ClockRegression
from .sim.handover import run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

SWEEP_COLUMNS = (
    "schema_version", "config_hash", "seed", "mode", "tandem", "load", "status",
    "handovers", "mean_ho_time_us", "p95_ho_time_us", "mean_total_ho_time_us", "drop_pct",
    "wasted_preallocations", "total_time_us",
)
CI_COLUMNS = (
    "schema_version", "config_hash", "mode", "tandem", "load", "n",
    "mean_total_ho_time_us", "ci95_low", "ci95_high", "mean_drop_pct", "drop_ci95_low", "drop_ci95_high",
)

# two-sided 97.5% Student t quantiles, df = 1..30
_T975 = (
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
    2.201, 2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
    2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
)


class UsageError(Exception):
    pass


def mean_ci95(values) -> tuple:
    vals = [v for v in values if not math.isnan(v)]
    if not vals:
        return math.nan, math.nan, math.nan
    m = statistics.fmean(vals)
    if len(vals) < 2:
        return m, m, m
    df = len(vals) - 1
    t = _T975[df - 1] if df <= len(_T975) else 1.960
    half = t * statistics.stdev(vals) / math.sqrt(len(vals))
    return m, m - half, m + half


def improvement_pct(baseline: float, candidate: float) -> float:
    return 100.0 * (baseline - candidate) / baseline if baseline else math.nan


def _default_config() -> str:
    return str(pipeline.data_path("scenario.json"))


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _setup_logging() -> None:
    level = os.environ.get("SMARTHO_SIM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _prepare_out(out: Path, names, force: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if force:
        return
    clash = [n for n in names if (out / n).exists()]
    if clash:
        raise UsageError(f"{out}: {', '.join(clash)} already exist; pass --force to overwrite")


def _scenario_from(args) -> tuple:
    raw = load_json(args.config)
    base = ScenarioConfig.from_dict(raw)
    return raw, base


# --- run -------------------------------------------------------------------

def cmd_run(args) -> int:
    _, base = _scenario_from(args)
    modes = list(MODES) if args.mode == "both" else [args.mode]
    changes = {}
    if args.tandem:
        changes["tandem"] = args.tandem[0]
    if args.load:
        changes["parallel_pings"] = args.load[0]
    if args.seed is not None:
        changes["seed"] = args.seed
    base = base.with_(**changes)
    out = Path(args.out)
    names = ["metrics.csv", "summary.txt"] + (["trace.log"] if args.trace else [])
    _prepare_out(out, names, args.force)

    reports = {m: [] for m in modes}
    for rep in range(args.reps):
        for mode in modes:
            cfg = base.with_(mode=mode, seed=base.seed + rep)
            reports[mode].append(run_scenario(cfg))

    first = True
    csv_text = ""
    for mode in modes:
        for r in reports[mode]:
            csv_text += r.to_csv(header=first)
            first = False
    (out / "metrics.csv").write_text(csv_text)
    if args.trace:
        (out / "trace.log").write_text("".join(
            f"# mode={r.mode} seed={r.seed}\n" + r.trace_text() for m in modes for r in reports[m]))

    lines = [
        f"config_hash: {base.config_hash()}",
        f"seed: {base.seed}",
        f"reps: {args.reps}",
        f"tandem: {base.tandem}",
        f"load: {base.parallel_pings}",
    ]
    means = {}
    for mode in modes:
        rs = reports[mode]
        means[mode] = statistics.fmean(r.mean_total_ho_time() for r in rs)
        lines += [
            f"{mode}.mean_ho_time_us: {statistics.fmean(r.mean_ho_time() for r in rs):.3f}",
            f"{mode}.mean_total_ho_time_us: {means[mode]:.3f}",
            f"{mode}.drop_pct: {statistics.fmean(r.drop_pct() for r in rs):.3f}",
            f"{mode}.wasted_preallocations: {sum(r.wasted_preallocations for r in rs)}",
            f"{mode}.drop_threshold_us: {rs[0].drop_threshold_us:.1f}",
        ]
    if len(modes) == 2:
        lines.append(f"improvement_pct: {improvement_pct(means[TRADITIONAL], means[SMARTHO]):.3f}")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


# --- sweep -----------------------------------------------------------------

def _sweep_point(task: tuple) -> dict:
    cfg_dict, mode, tandem, load, seed = task
    row = {"schema_version": metrics.SCHEMA_VERSION, "seed": seed, "mode": mode, "tandem": tandem, "load": load}
    try:
        cfg = ScenarioConfig.from_dict(cfg_dict).with_(mode=mode, tandem=tandem, parallel_pings=load, seed=seed)
        row["config_hash"] = cfg.config_hash()
        rep = run_scenario(cfg)
        agg = rep.aggregates()
        row.update({
            "status": "ok",
            "handovers": agg["handovers"],
            "mean_ho_time_us": f"{agg['mean_ho_time_us']:.3f}",
            "p95_ho_time_us": f"{agg['p95_ho_time_us']:.3f}",
            "mean_total_ho_time_us": f"{agg['mean_total_ho_time_us']:.3f}",
            "drop_pct": f"{agg['drop_pct']:.3f}",
            "wasted_preallocations": agg["wasted_preallocations"],
            "total_time_us": agg["total_time_us"],
        })
    except Exception as exc:  # a failed point is reported, the sweep goes on
        row.setdefault("config_hash", "")
        row["status"] = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
    return row


def _row_key(row: dict) -> tuple:
    return (row["mode"], int(row["tandem"]), int(row["load"]), int(row["seed"]))


def cmd_sweep(args) -> int:
    raw, base = _scenario_from(args)
    grid = raw.get("sweep", {})
    modes = [args.mode] if args.mode and args.mode != "both" else grid.get("modes", list(MODES))
    tandems = args.tandem or grid.get("tandem", [1, 2, 3, 4])
    loads = args.load or grid.get("loads", [base.parallel_pings])
    seeds = grid.get("seeds", [base.seed])
    if args.seed is not None or args.reps:
        start = args.seed if args.seed is not None else base.seed
        seeds = list(range(start, start + (args.reps or len(seeds))))
    for m in modes:
        if m not in MODES:
            raise ConfigError(f"sweep mode {m!r} not in {MODES}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows_path, ci_path = out / "sweep.csv", out / "sweep_ci.csv"
    done: dict = {}
    if args.resume and rows_path.exists():
        with open(rows_path, newline="") as fh:
            for row in csv.DictReader(fh):
                if row.get("status") == "ok":
                    done[_row_key(row)] = row
    elif not args.force:
        _prepare_out(out, ["sweep.csv", "sweep_ci.csv"], False)

    cfg_dict = base.to_dict()
    tasks = [
        (cfg_dict, m, t, ld, s)
        for m in modes for t in tandems for ld in loads for s in seeds
        if (m, t, ld, s) not in done
    ]
    rows = list(done.values())
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows.extend(pool.map(_sweep_point, tasks))
    else:
        # write as we go so an interrupted sweep can resume
        for task in tasks:
            rows.append(_sweep_point(task))
            _write_rows(rows_path, rows)
    _write_rows(rows_path, rows)

    groups: dict = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        groups.setdefault((row["mode"], int(row["tandem"]), int(row["load"])), []).append(row)
    ci_rows = []
    for (mode, tandem, load), grp in sorted(groups.items()):
        m, lo, hi = mean_ci95([float(r["mean_total_ho_time_us"]) for r in grp])
        dm, dlo, dhi = mean_ci95([float(r["drop_pct"]) for r in grp])
        ci_rows.append({
            "schema_version": metrics.SCHEMA_VERSION,
            "config_hash": base.config_hash(),
            "mode": mode, "tandem": tandem, "load": load, "n": len(grp),
            "mean_total_ho_time_us": f"{m:.3f}", "ci95_low": f"{lo:.3f}", "ci95_high": f"{hi:.3f}",
            "mean_drop_pct": f"{dm:.3f}", "drop_ci95_low": f"{dlo:.3f}", "drop_ci95_high": f"{dhi:.3f}",
        })
    ci_path.write_text(metrics.write_csv(CI_COLUMNS, ci_rows))
    failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"{len(rows)} rows ({failed} failed) -> {rows_path}")
    print(f"{len(ci_rows)} groups -> {ci_path}")
    return EXIT_OK


def _write_rows(path: Path, rows: list) -> None:
    ordered = sorted(rows, key=_row_key)
    tmp = path.with_suffix(".csv.tmp")
    tmp.write_text(metrics.write_csv(SWEEP_COLUMNS, ordered))
    tmp.replace(path)


# --- forwarding ----------------------------------------------------------------

def cmd_forwarding(args) -> int:
    raw = load_json(args.config)
    try:
        cfg = fwd.ForwardingConfig.from_dict(raw.get("forwarding", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"forwarding section: {exc}") from exc
    if args.seed is not None:
        cfg = fwd.ForwardingConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    if args.load:
        cfg = fwd.ForwardingConfig.from_dict({**cfg.to_dict(), "loads": args.load})
    out = Path(args.out)
    _prepare_out(out, ["forwarding.csv"], args.force)
    records = fwd.run_forwarding_grid(cfg)
    text = metrics.forwarding_csv(records, _hash_dict(cfg.to_dict()), cfg.seed)
    (out / "forwarding.csv").write_text(text)
    for r in records:
        print(f"{r.mode:>3} switches={r.transit_switches} pings={r.parallel_pings:>3} "
              f"avg_response_us={r.avg_response_us:9.3f} drops={r.drop_count}")
    return EXIT_OK


def _hash_dict(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


# --- qmodel --------------------------------------------------------------------

def cmd_qmodel(args) -> int:
    path = args.config or str(pipeline.data_path("example_topology.json"))
    raw = load_json(path)
    try:
        topo = qmodel.PathTopology.from_dict(raw.get("topology", raw))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    t_mr = args.t_mr if args.t_mr is not None else raw.get("t_MR")
    if t_mr is None:
        raise ConfigError("no t_MR: give --t-mr or a t_MR key in the topology file")
    budget = qmodel.delay_budget(float(t_mr), topo)
    print(budget.table())
    if args.out:
        out = Path(args.out)
        _prepare_out(out, ["delay_budget.csv"], args.force)
        (out / "delay_budget.csv").write_text(budget.csv())
    return EXIT_OK


# --- wire-parse / validate ---------------------------------------------------------

def cmd_wire_parse(args) -> int:
    if args.file:
        data = Path(args.file).read_bytes()
    elif args.hex:
        try:
            data = bytes.fromhex("".join(args.hex).replace(":", ""))
        except ValueError as exc:
            raise ConfigError(f"bad hex input: {exc}") from exc
    else:
        raise UsageError("give packet bytes as hex or --file")
    try:
        pkt = wire.deserialize(data)
    except (wire.WireError, ValueError) as exc:
        raise ConfigError(f"cannot parse packet: {exc}") from exc
    for line in wire.describe(pkt):
        print(line)
    if args.dump:
        print(wire.hexdump(data))
    return EXIT_OK


def cmd_validate(args) -> int:
    raw, cfg = _scenario_from(args)
    if "forwarding" in raw:
        try:
            fwd.ForwardingConfig.from_dict(raw["forwarding"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"forwarding section: {exc}") from exc
    for key in raw.get("sweep", {}):
        if key not in ("modes", "tandem", "loads", "seeds"):
            raise ConfigError(f"unknown sweep key {key!r}")
    cfg.mobility_rows()
    print(f"ok {args.config} config_hash={cfg.config_hash()}")
    return EXIT_OK


# --- entry point ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smartho", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", default=_default_config(), help="scenario JSON (default: bundled)")
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")

    run = sub.add_parser("run", help="run one scenario in one or both modes")
    common(run)
    run.add_argument("--mode", choices=[*MODES, "both"], default="both")
    run.add_argument("--tandem", type=_int_list)
    run.add_argument("--load", type=_int_list, help="parallel ping processes")
    run.add_argument("--reps", type=int, default=1, help="seeds seed..seed+reps-1")
    run.add_argument("--trace", action="store_true", help="also write trace.log")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="grid over mode x tandem x load x seed")
    common(sw)
    sw.add_argument("--mode", choices=[*MODES, "both"])
    sw.add_argument("--tandem", type=_int_list)
    sw.add_argument("--load", type=_int_list)
    sw.add_argument("--reps", type=int, help="number of seeds")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--resume", action="store_true", help="keep finished rows of an earlier sweep")
    sw.set_defaults(func=cmd_sweep)

    fw = sub.add_parser("forwarding", help="tag vs IP forwarding over transit switches")
    common(fw)
    fw.add_argument("--load", type=_int_list)
    fw.set_defaults(func=cmd_forwarding)

    qm = sub.add_parser("qmodel", help="delay budget for a path topology")
    qm.add_argument("--config", help="topology JSON (default: bundled worked example)")
    qm.add_argument("--t-mr", type=float, dest="t_mr", help="t_MR in the topology's time unit")
    qm.add_argument("--out")
    qm.add_argument("--force", action="store_true")
    qm.set_defaults(func=cmd_qmodel)

    wp = sub.add_parser("wire-parse", help="decode a packet")
    wp.add_argument("hex", nargs="*", help="packet bytes in hex")
    wp.add_argument("--file", help="read raw bytes from a file")
    wp.add_argument("--dump", action="store_true", help="also print a hexdump")
    wp.set_defaults(func=cmd_wire_parse)

    va = sub.add_parser("validate", help="check a scenario config")
    va.add_argument("--config", default=_default_config())
    va.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "reps", None) is not None and args.reps < 1:
        print("error: --reps must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, UsageError, qmodel.QueueModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AssertionError, ClockRegression) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
