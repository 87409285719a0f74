# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Main CLI for fullmesh.
"""

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

from loguru import logger

from fullmesh.common import (
    ConfigError,
    DeadlockDetected,
    FullMeshError,
    InvariantViolation,
    RoutingInconsistencyError,
    get_fullmesh_out,
    get_fullmesh_profile,
    get_fullmesh_workers,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_DEADLOCK = 4

TRACE_COLUMNS = (
    "routing",
    "offered",
    "seed",
    "id",
    "source",
    "destination",
    "created",
    "injected",
    "delivered",
    "hops",
    "path",
    "vcs",
)


def setup_logging(verbose: bool) -> str:
    level = "DEBUG" if verbose else "INFO"
    logger.remove()
    logger.add(sys.stderr, level=level)
    return level


def _init_worker(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level)


def parse_n_range(text: str) -> list[int]:
    """`3..32`, `4,8,16` or `8`."""
    try:
        if ".." in text:
            low, high = text.split("..", 1)
            return list(range(int(low), int(high) + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"n-range: cannot parse {text!r}; use 3..32, 4,8,16 or 8") from None


# ============================================================================
# Experiments
# ============================================================================


def dispatch(points, workers: int, level: str = "INFO"):
    """Run every point; returns (point, result) pairs in completion order."""
    from fullmesh.engine import run

    if workers <= 1 or len(points) <= 1:
        return [(point, run(point)) for point in points]
    outcomes = []
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_init_worker, initargs=(level,)
    ) as pool:
        futures = {pool.submit(run, point): point for point in points}
        for future in as_completed(futures):
            outcomes.append((futures[future], future.result()))
    return outcomes


def run_experiment(config, workers: int = 1, out_dir: str | Path | None = None, trace: bool = False, level: str = "INFO"):
    """Run every (routing, load, seed) point of a config and write the CSV files."""
    from fullmesh.models import ResultRow, canonical_order, save_results, write_csv

    out_dir = Path(out_dir or config.output or get_fullmesh_out())
    points = config.points(trace=trace)
    logger.info(f"{config.name} [{config.profile}]: {len(points)} runs on {workers} worker(s)")
    outcomes = dispatch(points, workers, level)
    rows = canonical_order(ResultRow.from_run(point, result) for point, result in outcomes)
    stem = f"{config.name}-{config.profile}"
    csv_path = write_csv(rows, out_dir / f"{stem}.csv")
    logger.info(f"wrote {len(rows)} rows to {csv_path}")
    if trace:
        _write_trace(outcomes, out_dir / f"{stem}-trace.csv")
    if config.traffic.mode == "kernel":
        _write_phases(outcomes, out_dir / f"{stem}-phases.csv")
    save_results(rows)
    return rows, csv_path


def _write_trace(outcomes, path: Path) -> None:
    ordered = sorted(outcomes, key=lambda o: (o[0].routing, o[0].load or -1.0, o[0].seed))
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for point, result in ordered:
            for packet in sorted(result.trace or [], key=lambda p: p.id):
                writer.writerow(
                    (
                        result.routing,
                        point.load,
                        point.seed,
                        packet.id,
                        packet.source,
                        packet.destination,
                        packet.created,
                        packet.injected,
                        packet.delivered,
                        packet.hop_count,
                        "-".join(str(x) for x in packet.hops),
                        "-".join(str(v) for v in packet.vcs),
                    )
                )
    logger.info(f"wrote packet trace to {path}")


def _write_phases(outcomes, path: Path) -> None:
    ordered = sorted(outcomes, key=lambda o: (o[0].routing, o[0].seed))
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("routing", "seed", "phase", "completed_at"))
        for point, result in ordered:
            for phase, cycle in enumerate(result.summary.phase_completions):
                writer.writerow((result.routing, point.seed, phase, cycle))


def _load(args):
    from fullmesh.models import load_config

    config = load_config(args.config, args.profile).with_seeds(args.seeds)
    if getattr(args, "routing", None):
        config = config.model_copy(update={"routings": [args.routing]})
        config.check()
    if getattr(args, "load", None) is not None:
        config = config.model_copy(update={"loads": [args.load]})
    if getattr(args, "pattern", None) or getattr(args, "kernel", None):
        traffic = config.traffic.model_copy(
            update={k: v for k, v in (("pattern", args.pattern), ("kernel", args.kernel)) if v}
        )
        suffix = args.kernel or args.pattern
        config = config.model_copy(
            update={
                "traffic": traffic,
                "patterns": [] if args.pattern else config.patterns,
                "name": f"{config.name}-{suffix}",
            }
        )
        config.check()
    return config


def run_command(args):
    """Run one config inline (single process)."""
    config = _load(args)
    run_experiment(config, workers=1, out_dir=args.out, trace=args.trace, level=args.level)
    return EXIT_OK


def sweep_command(args):
    """Run a config's load x seed x routing grid on a worker pool."""
    config = _load(args)
    run_experiment(config, workers=args.workers, out_dir=args.out, trace=args.trace, level=args.level)
    return EXIT_OK


# ============================================================================
# Verification
# ============================================================================


def _verify_one(subject: str, n: int, export: Path | None) -> tuple[bool, str]:
    import numpy as np

    from fullmesh.deadlock import build_cdg, export_edge_list, find_cycle, max_hop_bound, verify_escape
    from fullmesh.ordering import (
        claim_report,
        pairing_identity_holds,
        random_ordering,
        srinr_allowed_paths,
        srinr_labelling,
        verify_fair_ordering_theorem,
    )
    from fullmesh.routing import TeraRouting, build_routing
    from fullmesh.topology import build_complete_graph, embed_service

    kind, _, argument = subject.partition(":")
    match kind:
        case "theorem1":
            report = verify_fair_ordering_theorem(srinr_labelling(n))
            total = verify_fair_ordering_theorem(random_ordering(n, np.random.default_rng(n)))
            ok = (
                report.implication_holds
                and total.implication_holds
                and report.allowed_paths == srinr_allowed_paths(n)
                and report.min_utilization == (n - 3 if n > 2 else 0)
                and report.max_utilization == (n - 2 if n % 2 == 0 else n - 3)
            )
            return ok, (
                f"sRINR utilization {report.min_utilization}..{report.max_utilization}, "
                f"{report.allowed_paths} allowed 2-paths (closed form {srinr_allowed_paths(n)}); "
                f"random total order {total.allowed_paths} paths, fair={total.fair}"
            )
        case "claim_intermediates":
            report = claim_report(n)
            return report.holds, (
                f"min {report.minimum} (expected {report.expected_minimum}), "
                f"same parity {sorted(report.same_parity_counts)}, "
                f"different parity {sorted(report.different_parity_counts)}"
            )
        case "pairing":
            ok = pairing_identity_holds(n)
            return ok, "pairing identity " + ("holds" if ok else "fails")
        case "cdg":
            if not argument:
                raise ConfigError("verify: cdg needs a routing, e.g. cdg:srinr")
            topo = build_complete_graph(n, 1)
            routing = build_routing(argument, topo)
            cdg = build_cdg(topo, routing)
            if export is not None:
                export.mkdir(parents=True, exist_ok=True)
                export_edge_list(cdg, export / f"cdg-{routing.label}-{n}.txt")
            cycle = find_cycle(cdg)
            summary = f"{routing.label}: {cdg.graph.number_of_nodes()} channels, {cdg.graph.number_of_edges()} dependencies"
            if cycle is None:
                return True, summary + ", acyclic"
            witness = " -> ".join(f"({a},{b})vc{v}" for a, b, v in cycle)
            return False, summary + f", cyclic: {witness}"
        case "escape":
            if not argument:
                raise ConfigError("verify: escape needs a service kind, e.g. escape:hypercube")
            emb = embed_service(build_complete_graph(n, 1), argument)
            ok = verify_escape(emb, TeraRouting(emb))
            return ok, f"TERA-{emb.kind.label}, hop bound {max_hop_bound(emb)}"
    raise ConfigError(
        f"verify: unknown subject {subject!r}; use theorem1, claim_intermediates, pairing, "
        "cdg:<routing> or escape:<service>"
    )


def verify_command(args):
    """Print PASS/FAIL per n for a combinatorial or deadlock check."""
    failed = False
    for n in parse_n_range(args.n_range):
        try:
            ok, detail = _verify_one(args.subject, n, Path(args.export) if args.export else None)
        except (ConfigError, RoutingInconsistencyError):
            raise
        except FullMeshError as e:
            ok, detail = False, str(e)
        failed |= not ok
        print(f"{args.subject} n={n}: {'PASS' if ok else 'FAIL'} ({detail})")
    return EXIT_FAIL if failed else EXIT_OK


# ============================================================================
# Estimates, topology export, figures
# ============================================================================


def estimate_command(args):
    """CSV of the analytical estimate per service topology and n."""
    from fullmesh.analysis import DEFAULT_CURVES, compatible_sizes, estimate_curve

    ns = parse_n_range(args.n_range)
    wanted = set(args.families.split(",")) if args.families else None
    out = Path(args.out or get_fullmesh_out()) / "estimate.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("service", "n", "p", "estimate"))
        for label, family, dimensions in DEFAULT_CURVES:
            if wanted is not None and label not in wanted and family not in wanted:
                continue
            for n, p, value in estimate_curve(family, compatible_sizes(family, ns, dimensions), dimensions):
                writer.writerow((label, n, f"{p:.6f}", f"{value:.6f}"))
    print(f"Estimates written to {out}")
    return EXIT_OK


def export_topology_command(args):
    """JSON dump of a topology, with main/service roles when a service is embedded."""
    import json

    from fullmesh.topology import build_complete_graph, build_hyperx, embed_service

    if args.hyperx:
        dims = tuple(int(v) for v in args.hyperx.split(","))
        payload = json.dumps(build_hyperx(dims, args.servers).to_dict(), indent=2)
    else:
        base = build_complete_graph(args.n, args.servers)
        if args.service:
            payload = embed_service(base, args.service).to_json()
        else:
            payload = json.dumps(base.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n")
        print(f"Topology written to {args.out}")
    else:
        print(payload)
    return EXIT_OK


def figure_command(args):
    """Render standalone HTML figures from result CSV files."""
    from fullmesh.figures import write_figures

    written = write_figures(args.results, args.out or get_fullmesh_out(), estimate=args.estimate)
    for path in written:
        print(f"  [OK] {path}")
    return EXIT_OK


def list_command(args):
    """List the bundled experiment configs."""
    from fullmesh.models import bundled_configs

    for name in bundled_configs():
        print(name)
    return EXIT_OK


def _add_experiment_arguments(parser, default_profile: str):
    parser.add_argument(
        "--config",
        type=str,
        required=True,
        help="Experiment JSON file, or the name of a bundled config",
    )
    parser.add_argument(
        "--profile",
        type=str,
        default=default_profile,
        choices=["ci", "full"],
        help=f"Config profile (default: {default_profile})",
    )
    parser.add_argument(
        "--seeds",
        type=int,
        default=None,
        help="Number of seeds per load point (default: the config's seed list)",
    )
    parser.add_argument("--pattern", type=str, default=None, help="Override traffic.pattern")
    parser.add_argument("--kernel", type=str, default=None, help="Override traffic.kernel")
    parser.add_argument("--out", type=str, default=None, help="Output directory")
    parser.add_argument(
        "--trace", action="store_true", help="Also write a per-packet trace CSV"
    )


def main(argv: list[str] | None = None) -> int:
    default_profile = get_fullmesh_profile()
    default_workers = get_fullmesh_workers()

    parser = argparse.ArgumentParser(
        prog="fullmesh",
        description="fullmesh - Full-mesh routing simulator and verifier",
    )
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    run_parser = subparsers.add_parser("run", help="Run an experiment config in-process")
    _add_experiment_arguments(run_parser, default_profile)
    run_parser.add_argument("--routing", type=str, default=None, help="Run only this routing spec")
    run_parser.add_argument("--load", type=float, default=None, help="Run only this offered load")
    run_parser.set_defaults(func=run_command)

    sweep_parser = subparsers.add_parser("sweep", help="Run an experiment config on a worker pool")
    _add_experiment_arguments(sweep_parser, default_profile)
    sweep_parser.add_argument(
        "--workers",
        type=int,
        default=default_workers,
        help=f"Worker processes (default: {default_workers})",
    )
    sweep_parser.set_defaults(func=sweep_command)

    verify_parser = subparsers.add_parser(
        "verify", help="Exhaustive checks: theorem1, claim_intermediates, pairing, cdg:<routing>, escape:<service>"
    )
    verify_parser.add_argument("subject", type=str)
    verify_parser.add_argument("n_range", type=str, help="e.g. 3..32, 4,8,16 or 8")
    verify_parser.add_argument("--export", type=str, default=None, help="Directory for CDG edge lists")
    verify_parser.set_defaults(func=verify_command)

    estimate_parser = subparsers.add_parser("estimate", help="Analytical throughput estimate curves")
    estimate_parser.add_argument("--n-range", type=str, default="4..128")
    estimate_parser.add_argument(
        "--families", type=str, default=None, help="Comma-separated subset, e.g. path,hypercube"
    )
    estimate_parser.add_argument("--out", type=str, default=None, help="Output directory")
    estimate_parser.set_defaults(func=estimate_command)

    export_parser = subparsers.add_parser("export-topology", help="Dump a topology as JSON")
    export_parser.add_argument("--n", type=int, default=64, help="Full-mesh size (default: 64)")
    export_parser.add_argument("--servers", type=int, default=64, help="Servers per switch (default: 64)")
    export_parser.add_argument("--service", type=str, default=None, help="Embedded service kind")
    export_parser.add_argument("--hyperx", type=str, default=None, help="2D-HyperX sides, e.g. 8,8")
    export_parser.add_argument("--out", type=str, default=None, help="Output file (default: stdout)")
    export_parser.set_defaults(func=export_topology_command)

    figure_parser = subparsers.add_parser("figure", help="Render HTML figures from result CSV files")
    figure_parser.add_argument("--results", type=str, nargs="+", required=True)
    figure_parser.add_argument("--estimate", type=str, default=None, help="CSV from `fullmesh estimate`")
    figure_parser.add_argument("--out", type=str, default=None, help="Output directory")
    figure_parser.set_defaults(func=figure_command)

    list_parser = subparsers.add_parser("list", help="List bundled experiment configs")
    list_parser.set_defaults(func=list_command)

    args = parser.parse_args(argv)
    args.level = setup_logging(args.verbose)

    if args.command is None:
        parser.print_help()
        return EXIT_OK

    try:
        return args.func(args)
    except DeadlockDetected as e:
        logger.error(f"deadlock detected: {e}")
        return EXIT_DEADLOCK
    except (InvariantViolation, RoutingInconsistencyError) as e:
        logger.error(f"invariant violation: {e}")
        return EXIT_INVARIANT
    except FullMeshError as e:
        logger.error(f"config error: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
