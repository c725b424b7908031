"""Command-line entry point.

Subcommands: run (single scenario), compare-protocols, sweep-nodes,
sweep-l (experiment families over seeds), gen-map (synthetic map and
scenario), replay-trace (recompute metrics from a routing trace).
Experiment cells fan out over worker processes; each run is internally
single-threaded and cells share nothing, so worker count never changes
any output file's content.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from dtnsim import engine, mapgen, metrics, replay, scenario

DEFAULT_SEEDS = "1,2,3,4,5"
DEFAULT_SCALES = "0.5,1.0,1.5"
DEFAULT_L_VALUES = "5,10,20,40,80"


def bundled_scenario_path() -> Path:
    return Path(str(resources.files("dtnsim.data") / mapgen.DEFAULT_SCENARIO_NAME))


# ---------------------------------------------------------------------------
# Argument plumbing


def add_run_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", type=Path, default=None,
                   help="scenario file (default: bundled desk-scale scenario)")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override any scenario key")
    p.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    p.add_argument("--dt", type=float, default=None, help="override the time step (s)")
    p.add_argument("--until", type=float, default=None, help="override the duration (s)")
    p.add_argument("--repair", choices=("drop", "bridge"), default="drop",
                   help="map connectivity repair mode (default: drop minor components)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--json", action="store_true", help="also write JSON mirrors of tables")


def add_trace_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trace-movement", metavar="FILE", default=None,
                   help="write time,node_id,x,y samples to FILE (under --out)")
    p.add_argument("--trace-contacts", metavar="FILE", default=None,
                   help="write time,event,node_a,node_b rows to FILE")
    p.add_argument("--trace-routing", metavar="FILE", default=None,
                   help="write time,event,message_id,from,to,hops rows to FILE")
    p.add_argument("--trace-sample", type=float, default=60.0,
                   help="movement trace sampling interval in seconds (default 60)")
    p.add_argument("--dump-graph", metavar="FILE", default=None,
                   help="write the repaired road graph as WKT and continue")


def parse_overrides(pairs: list[str]) -> dict[str, str]:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise SystemExit(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def effective_overrides(args) -> dict[str, str]:
    overrides = parse_overrides(args.overrides)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.dt is not None:
        overrides["time_step"] = repr(args.dt)
    if args.until is not None:
        overrides["duration"] = repr(args.until)
    return overrides


def load_config(args, extra: dict[str, str] | None = None):
    path = args.scenario if args.scenario is not None else bundled_scenario_path()
    overrides = effective_overrides(args)
    if extra:
        overrides.update(extra)
    config = scenario.load_scenario(path.read_text(), overrides)
    return config, path.parent


# ---------------------------------------------------------------------------
# Single run


def write_run_outputs(result: engine.RunResult, out_dir: Path, args,
                      write_json: bool) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    acc = result.metrics
    row = {
        "protocol": result.protocol,
        "seed": result.seed,
        "created": acc.created,
        "delivered": acc.delivered,
        "relayed": acc.relayed,
        "aborted": acc.aborted,
        "delivery_rate": metrics.format_metric(metrics.delivery_rate(acc)),
        "overhead_ratio": metrics.format_metric(metrics.overhead_ratio(acc)),
        "latency_avg_s": metrics.format_metric(metrics.latency_avg(acc)),
    }
    csv_lines = metrics.report_csv_rows(result.protocol, result.seed, acc)
    metrics.write_atomic(str(out_dir / "report.csv"), "\n".join(csv_lines) + "\n")
    metrics.write_atomic(str(out_dir / "report.txt"), metrics.render_report_text([row]))
    if write_json:
        metrics.write_atomic(str(out_dir / "report.json"), json.dumps(row, indent=2) + "\n")
    header = {
        "movement": "time,node_id,x,y",
        "contacts": "time,event,node_a,node_b",
        "routing": "time,event,message_id,from,to,hops",
    }
    for name, rows in (("movement", result.movement_rows),
                       ("contacts", result.contact_rows),
                       ("routing", result.routing_rows)):
        target = getattr(args, f"trace_{name}", None)
        if target:
            content = "\n".join([header[name]] + rows) + "\n"
            metrics.write_atomic(str(out_dir / target), content)
    return row


def cmd_run(args) -> int:
    config, base_dir = load_config(args)
    options = engine.RunOptions(
        repair_mode=args.repair,
        trace_movement=args.trace_movement,
        trace_contacts=args.trace_contacts,
        trace_routing=args.trace_routing,
        movement_sample_interval_s=args.trace_sample,
    )
    world = engine.World(config, base_dir, options)
    if args.dump_graph and world.graph is not None:
        from dtnsim import roadmap as rm

        args.out.mkdir(parents=True, exist_ok=True)
        metrics.write_atomic(str(args.out / args.dump_graph), rm.dump_wkt(world.graph))
    result = world.run()
    row = write_run_outputs(result, args.out, args, args.json)
    if result.repair_report is not None and result.repair_report.changed:
        print(f"map repair: {result.repair_report.summary()}", file=sys.stderr)
    print(f"protocol {row['protocol']}  seed {row['seed']}  "
          f"created {row['created']}  delivered {row['delivered']}  "
          f"delivery_rate {row['delivery_rate']}  overhead {row['overhead_ratio']}  "
          f"latency {row['latency_avg_s']}  "
          f"[{result.kernel_mode} kernels, {result.wall_time_s:.1f}s]")
    return 0


# ---------------------------------------------------------------------------
# Experiment harness


def run_cell(payload: dict) -> dict:
    """Execute one experiment cell in a worker process."""
    try:
        config = scenario.load_scenario(payload["scenario_text"], payload["overrides"])
        if payload.get("carrier_scale") is not None:
            config = scenario.scale_carrier_groups(config, payload["carrier_scale"])
        result = engine.run(config, payload["base_dir"],
                            engine.RunOptions(repair_mode=payload["repair"]))
        acc = result.metrics
        dr, ov, la = (metrics.delivery_rate(acc), metrics.overhead_ratio(acc),
                      metrics.latency_avg(acc))
        return {
            "status": "ok",
            "label": payload["label"],
            "protocol": config.router.protocol,
            "seed": config.rng_seed,
            "axis": payload["axis"],
            "created": acc.created,
            "delivered": acc.delivered,
            "relayed": acc.relayed,
            "aborted": acc.aborted,
            "delivery_rate": dr,
            "overhead_ratio": ov,
            "latency_avg_s": la,
            "repro_cmd": payload["repro_cmd"],
        }
    except Exception:
        return {
            "status": "error",
            "label": payload["label"],
            "axis": payload["axis"],
            "error": traceback.format_exc(limit=5),
            "repro_cmd": payload["repro_cmd"],
        }


def _repro_cmd(scenario_path: Path, seed: int, overrides: dict[str, str]) -> str:
    parts = [f"dtnsim run --scenario {scenario_path} --seed {seed}"]
    parts += [f"--set {k}={v}" for k, v in sorted(overrides.items()) if k != "seed"]
    return " ".join(parts)


def _execute_cells(payloads: list[dict], workers: int) -> list[dict]:
    if workers <= 1:
        return [run_cell(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_cell, payloads))


def _stat(values: list[float | None]) -> dict[str, float] | None:
    present = [v for v in values if v is not None]
    if not present:
        return None
    return {"mean": statistics.mean(present), "min": min(present), "max": max(present)}


SUMMARY_COLUMNS = ["axis", "protocol", "seed", "created", "delivered", "relayed",
                   "aborted", "delivery_rate", "overhead_ratio", "latency_avg_s",
                   "status", "repro_cmd"]


def write_experiment_outputs(rows: list[dict], group_keys: list[str], out_dir: Path,
                             write_json: bool, axis_name: str) -> list[dict]:
    """Write per-cell summary.csv plus a seed-averaged table; returns the
    aggregated rows (one per group) for trend checks."""
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = sorted(rows, key=lambda r: (str(r["axis"]), r.get("protocol", ""),
                                       r.get("seed", 0)))
    lines = [",".join(SUMMARY_COLUMNS)]
    for r in rows:
        record = []
        for col in SUMMARY_COLUMNS:
            v = r.get(col, "")
            if col in ("delivery_rate", "overhead_ratio", "latency_avg_s"):
                v = metrics.format_metric(v) if isinstance(v, float) else (v or metrics.NA)
            if col == "repro_cmd":
                v = f'"{v}"'
            record.append(str(v))
        lines.append(",".join(record))
    metrics.write_atomic(str(out_dir / "summary.csv"), "\n".join(lines) + "\n")

    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if r["status"] != "ok":
            continue
        key = tuple(r[k] for k in group_keys)
        groups.setdefault(key, []).append(r)
    aggregated = []
    for key, cells in sorted(groups.items(), key=lambda kv: tuple(str(x) for x in kv[0])):
        agg = dict(zip(group_keys, key))
        for field in ("delivery_rate", "overhead_ratio", "latency_avg_s"):
            agg[field] = _stat([c[field] for c in cells])
        agg["n_seeds"] = len(cells)
        aggregated.append(agg)

    table_lines = []
    head = [axis_name.ljust(24), "delivery (mean/min/max)".ljust(28),
            "overhead (mean/min/max)".ljust(30), "latency s (mean/min/max)"]
    table_lines.append("  ".join(head))
    for agg in aggregated:
        label = " ".join(str(agg[k]) for k in group_keys)
        cells = []
        for field in ("delivery_rate", "overhead_ratio", "latency_avg_s"):
            s = agg[field]
            cells.append("n/a" if s is None else
                         f"{s['mean']:.4f}/{s['min']:.4f}/{s['max']:.4f}")
        table_lines.append("  ".join([label.ljust(24), cells[0].ljust(28),
                                      cells[1].ljust(30), cells[2]]))
    metrics.write_atomic(str(out_dir / "summary.txt"), "\n".join(table_lines) + "\n")
    if write_json:
        payload = {"cells": rows, "aggregated": aggregated}
        metrics.write_atomic(str(out_dir / "summary.json"),
                             json.dumps(payload, indent=2, default=str) + "\n")
    print("\n".join(table_lines))
    failures = [r for r in rows if r["status"] != "ok"]
    for f in failures:
        print(f"cell {f['label']} failed:\n{f['error']}", file=sys.stderr)
    return aggregated


def _parse_list(text: str, cast) -> list:
    return [cast(part) for part in text.split(",") if part.strip()]


def _experiment_payloads(args, cells: list[dict]) -> list[dict]:
    scenario_path = args.scenario if args.scenario is not None else bundled_scenario_path()
    scenario_text = scenario_path.read_text()
    base_overrides = effective_overrides(args)
    payloads = []
    for cell in cells:
        overrides = dict(base_overrides)
        overrides.update(cell["overrides"])
        overrides["seed"] = str(cell["seed"])
        repro_overrides = dict(overrides)
        if cell.get("carrier_scale") is not None:
            # Bake the scaled counts into the repro command so it stands alone.
            config = scenario.load_scenario(scenario_text, overrides)
            scaled = scenario.scale_carrier_groups(config, cell["carrier_scale"])
            for i, group in enumerate(scaled.groups, start=1):
                if group.role == "carrier":
                    repro_overrides[f"Group{i}.count"] = str(group.count)
        payloads.append({
            "scenario_text": scenario_text,
            "base_dir": str(scenario_path.parent),
            "overrides": overrides,
            "carrier_scale": cell.get("carrier_scale"),
            "repair": args.repair,
            "label": cell["label"],
            "axis": cell["axis"],
            "repro_cmd": _repro_cmd(scenario_path, cell["seed"], repro_overrides),
        })
    return payloads


def cmd_compare_protocols(args) -> int:
    seeds = _parse_list(args.seeds, int)
    cells = [
        {"label": f"{proto}_s{seed}", "axis": proto, "seed": seed,
         "overrides": {"router.protocol": proto}}
        for proto in scenario.PROTOCOLS for seed in seeds
    ]
    results = _execute_cells(_experiment_payloads(args, cells), args.workers)
    write_experiment_outputs(results, ["protocol"], args.out, args.json, "protocol")
    return 1 if all(r["status"] != "ok" for r in results) else 0


def cmd_sweep_nodes(args) -> int:
    seeds = _parse_list(args.seeds, int)
    scales = _parse_list(args.scales, float)
    cells = [
        {"label": f"{proto}_x{scale}_s{seed}", "axis": f"{scale}", "seed": seed,
         "overrides": {"router.protocol": proto}, "carrier_scale": scale}
        for scale in scales for proto in scenario.PROTOCOLS for seed in seeds
    ]
    results = _execute_cells(_experiment_payloads(args, cells), args.workers)
    write_experiment_outputs(results, ["axis", "protocol"], args.out, args.json,
                             "carrier-scale protocol")
    return 1 if all(r["status"] != "ok" for r in results) else 0


def cmd_sweep_l(args) -> int:
    seeds = _parse_list(args.seeds, int)
    l_values = _parse_list(args.l_values, int)
    cells = [
        {"label": f"L{l}_s{seed}", "axis": l, "seed": seed,
         "overrides": {"router.protocol": "spray-and-wait",
                       "router.snw_copies": str(l)}}
        for l in l_values for seed in seeds
    ]
    results = _execute_cells(_experiment_payloads(args, cells), args.workers)
    write_experiment_outputs(results, ["axis"], args.out, args.json, "L")
    return 1 if all(r["status"] != "ok" for r in results) else 0


def cmd_gen_map(args) -> int:
    params = mapgen.MapParams(seed=args.seed, town_size=args.town_size,
                              town_step_m=args.town_step, jitter_m=args.jitter)
    written = mapgen.write_map_files(args.out, params)
    for path in written:
        print(path)
    return 0


def cmd_replay_trace(args) -> int:
    result = replay.replay_file(args.trace)
    formatted = result.formatted()
    for key, value in formatted.items():
        print(f"{key}: {value}")
    if args.json:
        args.out.mkdir(parents=True, exist_ok=True)
        metrics.write_atomic(str(args.out / "replay.json"),
                             json.dumps(formatted, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtnsim",
        description="Deterministic store-carry-forward network simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and write reports")
    add_run_arguments(p)
    add_trace_arguments(p)
    p.set_defaults(func=cmd_run)

    for name, fn, extra in (
        ("compare-protocols", cmd_compare_protocols, {}),
        ("sweep-nodes", cmd_sweep_nodes, {"scales": DEFAULT_SCALES}),
        ("sweep-l", cmd_sweep_l, {"l_values": DEFAULT_L_VALUES}),
    ):
        p = sub.add_parser(name, help=f"experiment family: {name.replace('-', ' ')}")
        add_run_arguments(p)
        p.add_argument("--seeds", default=DEFAULT_SEEDS,
                       help=f"comma-separated seeds (default {DEFAULT_SEEDS})")
        p.add_argument("--workers", type=int, default=4,
                       help="parallel worker processes (default 4)")
        if "scales" in extra:
            p.add_argument("--scales", default=extra["scales"],
                           help=f"carrier-count scale factors (default {extra['scales']})")
        if "l_values" in extra:
            p.add_argument("--l-values", default=extra["l_values"],
                           help=f"spray copy budgets (default {extra['l_values']})")
        p.set_defaults(func=fn)

    p = sub.add_parser("gen-map", help="generate the synthetic desk-scale map")
    p.add_argument("--out", type=Path, default=Path("out/map"))
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--town-size", type=int, default=5, help="town grid vertices per side")
    p.add_argument("--town-step", type=float, default=800.0, help="town block size (m)")
    p.add_argument("--jitter", type=float, default=40.0, help="coordinate jitter (m)")
    p.set_defaults(func=cmd_gen_map)

    p = sub.add_parser("replay-trace", help="recompute metrics from a routing trace")
    p.add_argument("trace", help="routing trace CSV file")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_replay_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    from dtnsim.roadmap import MapError, WktError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (scenario.ScenarioError, MapError, WktError, replay.TraceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
