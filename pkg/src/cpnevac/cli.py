"""Command-line interface.

Subcommands:

* ``evac run --config FILE [--out DIR] [--preset paper-matrix]
  [--seed-offset N]``: run a scenario (or the full experiment grid) and
  write the CSV outputs.
* ``evac validate --config FILE``: parse and check a config file.
* ``evac plotdata --summary FILE [--out DIR]``: reshape a summary CSV
  into grouped-bar plot tables.

``EVAC_LOG`` sets the log level (e.g. DEBUG, INFO, WARNING).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from ._kernels import backend_name
from .building import GraphError, load_graph
from .config import ConfigError, config_from_file, paper_matrix_cells
from .reporting import ReportError, emit_plotdata, read_summary, run_experiment

log = logging.getLogger("evac")


def _setup_logging() -> None:
    level = os.environ.get("EVAC_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _cmd_run(args: argparse.Namespace) -> int:
    config = config_from_file(args.config)
    load_graph(config.graph_file)  # fail fast with the graph diagnostic
    cells = paper_matrix_cells(config) if args.preset == "paper-matrix" else None
    log.info("kernel backend: %s", backend_name())
    summary = run_experiment(
        config, cells=cells, out_dir=args.out, seed_offset=args.seed_offset
    )
    print(f"wrote {Path(args.out) / 'summary.csv'}")
    print("occupancy mode radius survival(mean min max) congestion(mean)")
    for row in summary.rows:
        print(
            f"{row.occupancy:>9} {row.mode:>4} {row.radius:>6g} "
            f"{row.survival_mean:.3f} {row.survival_min:.3f} {row.survival_max:.3f} "
            f"{row.congestion_mean:.1f}"
        )
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    config = config_from_file(args.config)
    graph = load_graph(config.graph_file)
    print(
        f"OK: {args.config} (graph {Path(config.graph_file).name}: "
        f"{len(graph.vertices)} vertices, {len(graph.edges)} edges, "
        f"{len(graph.exit_ids)} exits)"
    )
    return 0


def _cmd_plotdata(args: argparse.Namespace) -> int:
    summary = read_summary(args.summary)
    out_dir = args.out if args.out else Path(args.summary).parent
    for path in emit_plotdata(summary, out_dir):
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evac",
        description="Deterministic building-evacuation simulator with "
        "cognitive-packet route discovery.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario or experiment grid")
    p_run.add_argument("--config", required=True, help="scenario config file")
    p_run.add_argument("--out", default="evac_out", help="output directory")
    p_run.add_argument(
        "--preset",
        choices=["paper-matrix"],
        help="run the full occupancy x mode grid instead of a single cell",
    )
    p_run.add_argument(
        "--seed-offset",
        type=int,
        default=0,
        help="shift every configured seed by N",
    )
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="check a config file and its graph")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=_cmd_validate)

    p_plot = sub.add_parser("plotdata", help="emit plot tables from a summary CSV")
    p_plot.add_argument("--summary", required=True, help="summary.csv path")
    p_plot.add_argument("--out", help="output directory (default: alongside)")
    p_plot.set_defaults(func=_cmd_plotdata)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GraphError, ReportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
