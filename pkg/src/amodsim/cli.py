"""Command-line surface: validate inputs, run simulations, compare runs.

Exit codes: 0 success, 1 validation failure, 2 runtime failure, 3 comparison
mismatch. A matrix sweep writes one directory per cell and resumes an
interrupted sweep by skipping cells whose stored config hash already matches.
"""

import argparse
import dataclasses
import json
import os
import sys
import time
from datetime import datetime

from . import metrics
from .config import (ConfigError, RunConfig, STRATEGY_NAMES, apply_seed_override,
                     load_config)
from .demand import (NYC_BBOX, TIMESTAMP_FORMAT, CleaningReport, DemandFormatError,
                     GenerationError, TripRequest, generate_demand, parse_trips)
from .engine import EngineConfig, SimulationError, parse_record_line, run
from .fleet import Fleet, Strategy
from .road import NetworkLoadError, RoadNetwork, TrafficState, load_network
from .zones import ZoneLoadError, ZoneMap, load_zones

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_COMPARE = 3

LOAD_ERRORS = (ConfigError, NetworkLoadError, ZoneLoadError, DemandFormatError,
               GenerationError, OSError, ValueError)


@dataclasses.dataclass
class Inputs:
    net: RoadNetwork
    zone_map: ZoneMap
    sched: object
    requests: list[TripRequest]
    cleaning: CleaningReport | None
    traffic: TrafficState
    fleet: Fleet
    epoch: datetime | None


def _zones_bbox(zone_map: ZoneMap) -> tuple[float, float, float, float]:
    boxes = [z.boundary.bbox for z in zone_map.zones]
    return (min(b[0] for b in boxes), min(b[1] for b in boxes),
            max(b[2] for b in boxes), max(b[3] for b in boxes))


def load_inputs(cfg: RunConfig) -> Inputs:
    net = load_network(cfg.path(cfg.nodes_path), cfg.path(cfg.edges_path),
                       cfg.speed_limit_mps)
    zone_map, sched = load_zones(cfg.path(cfg.zones_path))
    cleaning = None
    epoch = None
    if cfg.demand.generated:
        kwargs = {"zone_map": zone_map} if cfg.demand.region == "zones" \
            else {"bbox": _zones_bbox(zone_map)}
        requests = generate_demand(cfg.demand.rate_per_hour, cfg.demand.duration_s,
                                   party_probs=cfg.demand.party_probs,
                                   seed=cfg.demand.seed,
                                   patience_range=cfg.demand.patience_range,
                                   **kwargs)
        horizon = cfg.demand.duration_s
    else:
        requests, cleaning = parse_trips(cfg.path(cfg.demand.file),
                                         bbox=cfg.demand.bbox or NYC_BBOX,
                                         capacity=cfg.demand.capacity,
                                         rng_seed=cfg.demand.seed)
        if cleaning.epoch_iso:
            epoch = datetime.strptime(cleaning.epoch_iso, TIMESTAMP_FORMAT)
        horizon = max((r.request_time_s for r in requests), default=0.0)
    traffic = TrafficState.build(list(cfg.traffic_schedule),
                                 walk_seed=cfg.traffic_walk_seed,
                                 walk_step_s=cfg.traffic_walk_step_s,
                                 walk_sigma=cfg.traffic_walk_sigma,
                                 horizon_s=horizon)
    fleet = Fleet.place_uniform(net, cfg.fleet_size, cfg.fleet_seed, cfg.fleet_capacity)
    return Inputs(net, zone_map, sched, requests, cleaning, traffic, fleet, epoch)


# -- validate ------------------------------------------------------------


def cmd_validate(cfg: RunConfig, out=None) -> int:
    out = out if out is not None else sys.stdout
    errors: list[str] = []
    warnings: list[str] = []
    infos: list[str] = []

    paths = [("network.nodes", cfg.nodes_path), ("network.edges", cfg.edges_path),
             ("zones", cfg.zones_path)]
    if not cfg.demand.generated:
        paths.append(("demand.file", cfg.demand.file))
    for label, p in paths:
        if not os.path.exists(cfg.path(p)):
            errors.append(f"{label}: no such file {cfg.path(p)}")
    if errors:
        for e in errors:
            print(f"error {e}", file=out)
        return EXIT_VALIDATION

    try:
        inputs = load_inputs(cfg)
    except LOAD_ERRORS as exc:
        print(f"error {exc}", file=out)
        return EXIT_VALIDATION

    net = inputs.net
    n_edges = sum(len(v) for v in net.adj.values())
    infos.append(f"network: {len(net.nodes)} nodes, {n_edges} edges")
    if net.scc_count > 1:
        warnings.append(f"network: {net.scc_count} strongly connected components; "
                        "some trips may be unroutable")
    infos.append(f"zones: {len(inputs.zone_map)} zones, "
                 f"{len(inputs.sched.pairs())} adjacent pairs")
    if len(inputs.zone_map) == 0:
        errors.append("zones: no zones loaded")

    if inputs.cleaning is not None:
        rep = inputs.cleaning
        infos.append("demand: " + ", ".join(rep.as_text().strip().splitlines()))
        rejected = rep.rows_read - rep.rows_kept
        if rep.rows_read and rejected:
            warnings.append(f"demand: {rejected} of {rep.rows_read} rows rejected "
                            f"({100.0 * rejected / rep.rows_read:.1f}%)")
        if not rep.balances():
            errors.append("demand: cleaning report does not balance")
    else:
        infos.append(f"demand: generated {len(inputs.requests)} requests")

    uncovered = sum(1 for r in inputs.requests
                    if inputs.zone_map.locate(r.pickup) is None)
    if uncovered:
        warnings.append(f"zones: {uncovered} of {len(inputs.requests)} pickups outside "
                        "all zones (nearest-centroid fallback applies)")
    unsnapped = sum(1 for r in inputs.requests
                    if net.nearest_node(r.pickup, cfg.snap_radius_m) is None
                    or net.nearest_node(r.dropoff, cfg.snap_radius_m) is None)
    if unsnapped:
        warnings.append(f"network: {unsnapped} requests beyond the {cfg.snap_radius_m} m "
                        "snap radius (will be rejected as unroutable)")

    for line in infos:
        print(f"ok {line}", file=out)
    for line in warnings:
        print(f"warning {line}", file=out)
    for line in errors:
        print(f"error {line}", file=out)
    return EXIT_VALIDATION if errors else EXIT_OK


# -- run -----------------------------------------------------------------


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def cmd_run(cfg: RunConfig, out=None) -> int:
    out = out if out is not None else sys.stdout
    t0 = time.monotonic()
    try:
        inputs = load_inputs(cfg)
    except LOAD_ERRORS as exc:
        print(f"error {exc}", file=out)
        return EXIT_VALIDATION
    engine_cfg = EngineConfig(dispatch=cfg.dispatch_config(),
                              snap_radius_m=cfg.snap_radius_m,
                              log_header=f"# amodsim {cfg.config_hash()}")
    try:
        result = run(inputs.requests, inputs.fleet, inputs.net, inputs.zone_map,
                     inputs.sched, inputs.traffic, engine_cfg)
    except SimulationError as exc:
        print(f"error {exc}", file=out)
        return EXIT_RUNTIME

    out_dir = cfg.path(cfg.out_dir)
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, "call_records.txt"),
           "".join(line + "\n" for line in result.record_lines()))
    _write(os.path.join(out_dir, "event_log.txt"),
           "".join(line + "\n" for line in result.event_log))
    whole = metrics.aggregate(result.records, metrics.BUCKET_WHOLE_RUN)
    daily = metrics.aggregate(result.records, metrics.BUCKET_DAILY, epoch=inputs.epoch)
    _write(os.path.join(out_dir, "summary.txt"), metrics.summary_text(whole + daily))
    _write(os.path.join(out_dir, "periodic.txt"),
           metrics.summary_text(metrics.periodic_rows(result.records, cfg.metric_period_s)))
    _write(os.path.join(out_dir, "adjacency_final.txt"), result.sched.export_text())
    if inputs.cleaning is not None:
        _write(os.path.join(out_dir, "cleaning_report.txt"), inputs.cleaning.as_text())
    metadata = {
        "config": cfg.normalized(),
        "config_hash": cfg.config_hash(),
        "demand_fingerprint": cfg.demand_fingerprint(),
        "epoch": inputs.cleaning.epoch_iso if inputs.cleaning else None,
        "wall_time_s": round(time.monotonic() - t0, 3),
        "counts": result.metadata,
    }
    _write(os.path.join(out_dir, "metadata.json"),
           json.dumps(metadata, sort_keys=True, indent=2) + "\n")

    s = whole[0]
    t_apw = "NA" if s.t_apw_s is None else f"{s.t_apw_s / 60.0:.2f}"
    r_ts = "NA" if s.r_ts is None else f"{s.r_ts:.4f}"
    print(f"run {out_dir}: calls={s.n_calls} served={s.n_success} "
          f"r_ts={r_ts} t_apw_min={t_apw}", file=out)
    return EXIT_OK


# -- compare -------------------------------------------------------------


def _read_run(run_dir: str) -> tuple[dict, list]:
    with open(os.path.join(run_dir, "metadata.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    records = []
    with open(os.path.join(run_dir, "call_records.txt"), encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(parse_record_line(line))
    return meta, records


def cmd_compare(dir_a: str, dir_b: str, out=None) -> int:
    out = out if out is not None else sys.stdout
    try:
        meta_a, rec_a = _read_run(dir_a)
        meta_b, rec_b = _read_run(dir_b)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error {exc}", file=out)
        return EXIT_VALIDATION
    if meta_a["demand_fingerprint"] != meta_b["demand_fingerprint"]:
        print("error runs are not comparable: demand fingerprints differ "
              f"({meta_a['demand_fingerprint'][:12]} vs "
              f"{meta_b['demand_fingerprint'][:12]})", file=out)
        return EXIT_COMPARE

    # The expansion-enabled run is the reference side of the report.
    if not meta_a["config"]["dispatch"]["eat"] and meta_b["config"]["dispatch"]["eat"]:
        meta_a, rec_a, meta_b, rec_b = meta_b, rec_b, meta_a, rec_a
        dir_a, dir_b = dir_b, dir_a
    epoch = None
    if meta_a.get("epoch"):
        epoch = datetime.strptime(meta_a["epoch"], TIMESTAMP_FORMAT)

    rows = []
    whole_a = metrics.aggregate(rec_a, metrics.BUCKET_WHOLE_RUN)[0]
    whole_b = metrics.aggregate(rec_b, metrics.BUCKET_WHOLE_RUN)[0]
    # whole-run horizons differ between dispatchers; align the window labels
    end = max(whole_a.window_end_s, whole_b.window_end_s)
    whole_a = dataclasses.replace(whole_a, window_end_s=end)
    whole_b = dataclasses.replace(whole_b, window_end_s=end)
    rows.append(("whole-run", metrics.improvement(whole_a, whole_b)))
    daily_a = {s.window_start_s: s for s in metrics.aggregate(rec_a, metrics.BUCKET_DAILY,
                                                              epoch=epoch)}
    daily_b = {s.window_start_s: s for s in metrics.aggregate(rec_b, metrics.BUCKET_DAILY,
                                                              epoch=epoch)}
    for k, start in enumerate(sorted(set(daily_a) & set(daily_b))):
        rows.append((f"day-{k}", metrics.improvement(daily_a[start], daily_b[start])))
    print(f"with-expansion    {meta_a['config']['dispatch']['strategy']}"
          f"{'-EAT' if meta_a['config']['dispatch']['eat'] else ''}: {dir_a}", file=out)
    print(f"without-expansion {meta_b['config']['dispatch']['strategy']}"
          f"{'-EAT' if meta_b['config']['dispatch']['eat'] else ''}: {dir_b}", file=out)
    print(metrics.comparison_text(rows), end="", file=out)
    return EXIT_OK


# -- matrix --------------------------------------------------------------


def _cell_name(strategy: Strategy, eat: bool) -> str:
    return f"{strategy.value.lower()}-{'eat' if eat else 'base'}"


def _cell_done(out_dir: str, config_hash: str) -> bool:
    meta_path = os.path.join(out_dir, "metadata.json")
    if not os.path.exists(meta_path):
        return False
    try:
        with open(meta_path, encoding="utf-8") as fh:
            return json.load(fh).get("config_hash") == config_hash
    except (OSError, json.JSONDecodeError):
        return False


def cmd_matrix(cfg: RunConfig, strategies: list[Strategy], out=None) -> int:
    out = out if out is not None else sys.stdout
    root = cfg.path(cfg.out_dir)
    os.makedirs(root, exist_ok=True)
    failures = []
    cells: list[tuple[str, Strategy, bool]] = []
    for strategy in strategies:
        for eat in (True, False):
            name = _cell_name(strategy, eat)
            cell_cfg = dataclasses.replace(cfg, strategy=strategy, eat_enabled=eat,
                                           out_dir=os.path.join(cfg.out_dir, name))
            cells.append((name, strategy, eat))
            if _cell_done(cfg.path(cell_cfg.out_dir), cell_cfg.config_hash()):
                print(f"skip {name}: already complete", file=out)
                continue
            code = cmd_run(cell_cfg, out=out)
            if code != EXIT_OK:
                failures.append((name, code))
                print(f"cell {name} failed with exit {code}", file=out)

    done: dict[str, tuple[dict, list]] = {}
    for name, _, _ in cells:
        cell_dir = os.path.join(root, name)
        if os.path.exists(os.path.join(cell_dir, "call_records.txt")):
            done[name] = _read_run(cell_dir)

    rows = []
    for strategy in strategies:
        w = done.get(_cell_name(strategy, True))
        wo = done.get(_cell_name(strategy, False))
        if w is None or wo is None:
            continue
        sw = metrics.aggregate(w[1], metrics.BUCKET_WHOLE_RUN)[0]
        swo = metrics.aggregate(wo[1], metrics.BUCKET_WHOLE_RUN)[0]
        end = max(sw.window_end_s, swo.window_end_s)
        sw = dataclasses.replace(sw, window_end_s=end)
        swo = dataclasses.replace(swo, window_end_s=end)
        rows.append((strategy.value, metrics.improvement(sw, swo)))
    if rows:
        report = metrics.comparison_text(rows)
        _write(os.path.join(root, "combined_report.txt"), report)
        print(report, end="", file=out)

    _write_plot_data(root, cells, done, out)
    if failures:
        return EXIT_RUNTIME
    return EXIT_OK


def _write_plot_data(root: str, cells, done: dict, out) -> None:
    """Per-day series, one column per matrix cell, NA where a day is absent."""
    daily: dict[str, dict[float, metrics.MetricsSummary]] = {}
    for name, _, _ in cells:
        if name not in done:
            continue
        meta, records = done[name]
        epoch = None
        if meta.get("epoch"):
            epoch = datetime.strptime(meta["epoch"], TIMESTAMP_FORMAT)
        daily[name] = {s.window_start_s: s
                       for s in metrics.aggregate(records, metrics.BUCKET_DAILY, epoch=epoch)}
    if not daily:
        return
    starts = sorted({t for series in daily.values() for t in series})
    names = [name for name, _, _ in cells if name in daily]
    for fname, field in (("plot_wait_daily.tsv", "t_apw_s"), ("plot_rate_daily.tsv", "r_ts")):
        lines = ["\t".join(["day", *names])]
        for k, start in enumerate(starts):
            row = [str(k)]
            for name in names:
                s = daily[name].get(start)
                v = None if s is None else getattr(s, field)
                if v is not None and field == "t_apw_s":
                    v = v / 60.0
                row.append("NA" if v is None else f"{v:.4f}")
            lines.append("\t".join(row))
        _write(os.path.join(root, fname), "\n".join(lines) + "\n")


# -- entry point ---------------------------------------------------------


def _parse_strategies(text: str) -> list[Strategy]:
    names = [part.strip().upper() for part in text.split(",") if part.strip()]
    if not names:
        raise ConfigError("--strategies: empty list")
    bad = [n for n in names if n not in STRATEGY_NAMES]
    if bad:
        raise ConfigError(f"--strategies: unknown {bad}; expected {STRATEGY_NAMES}")
    return [Strategy(n) for n in names]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amodsim",
        description="Zone-expansion fleet dispatch simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a config and its inputs")
    p_validate.add_argument("--config", required=True)

    p_run = sub.add_parser("run", help="simulate one configuration")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", help="override the output directory")
    p_run.add_argument("--seed-override", type=int,
                       help="re-seed demand/fleet/traffic streams from this base")

    p_compare = sub.add_parser("compare", help="improvement report for two finished runs")
    p_compare.add_argument("run_a")
    p_compare.add_argument("run_b")

    p_matrix = sub.add_parser("matrix", help="strategy sweep with and without expansion")
    p_matrix.add_argument("--config", required=True)
    p_matrix.add_argument("--out", help="override the sweep root directory")
    p_matrix.add_argument("--seed-override", type=int)
    p_matrix.add_argument("--strategies", default="NSS,SSS,OSS",
                          help="comma-separated subset of NSS,SSS,OSS")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            return cmd_compare(args.run_a, args.run_b)
        cfg = load_config(args.config)
        if getattr(args, "out", None):
            cfg.out_dir = os.path.abspath(args.out)
        if getattr(args, "seed_override", None) is not None:
            apply_seed_override(cfg, args.seed_override)
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "run":
            return cmd_run(cfg)
        strategies = _parse_strategies(args.strategies)
        return cmd_matrix(cfg, strategies)
    except ConfigError as exc:
        print(f"error {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
