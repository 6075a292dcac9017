"""Experiment orchestration and byte-stable CSV reporting.

Runs every (occupancy, mode, radius) cell of a scenario matrix over the
configured seeds, aggregates survival and congestion statistics and
writes three CSV files (summary, per-run, per-agent trace) plus, on
request, plot-data tables shaped like the grouped bar charts the results
are read from. All output is UTF-8 with LF endings and repr-formatted
floats, so reruns with identical inputs are byte-identical.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import engine
from .building import load_graph
from .config import MetricMode, ScenarioConfig, with_cell

log = logging.getLogger("evac")

CSV_SCHEMA_VERSION = "v1"

RUNS_HEADER = (
    "run_id,occupancy,mode,radius,seed,survival_rate,exited,perished,"
    "duration_s,total_congestion_time_s,sp_launched,sp_delivered,sp_dropped"
)
AGENTS_HEADER = (
    "run_id,agent_id,class,final_group,outcome,exit_or_perish_time_s,"
    "queued_time_s,path_requests,group_switches"
)
SUMMARY_HEADER = (
    "occupancy,mode,radius,replications,survival_mean,survival_min,survival_max,"
    "congestion_mean,congestion_min,congestion_max"
)

_MODE_ORDER = {MetricMode.SM.value: 0, MetricMode.TM.value: 1, MetricMode.CM.value: 2}


class ReportError(RuntimeError):
    """Reporting failed (nothing to plot, malformed summary, ...)."""


@dataclass(frozen=True)
class SummaryRow:
    occupancy: int
    mode: str
    radius: float
    replications: int
    survival_mean: float
    survival_min: float
    survival_max: float
    congestion_mean: float
    congestion_min: float
    congestion_max: float


@dataclass(frozen=True)
class ExperimentSummary:
    rows: tuple[SummaryRow, ...]

    def cell(self, occupancy: int, mode: str, radius: float) -> SummaryRow:
        for row in self.rows:
            if (row.occupancy, row.mode, row.radius) == (occupancy, mode, radius):
                return row
        raise KeyError((occupancy, mode, radius))


def run_id(mode: str, occupancy: int, radius: float, seed: int) -> str:
    return f"{mode}-occ{occupancy}-R{radius:g}-s{seed}"


def _cell_key(cell: tuple[int, MetricMode, float]):
    occ, mode, radius = cell
    return (occ, _MODE_ORDER[mode.value], radius)


def run_experiment(
    config: ScenarioConfig,
    cells: Optional[Sequence[tuple[int, MetricMode, float]]] = None,
    out_dir: Optional[str | Path] = None,
    seed_offset: int = 0,
) -> ExperimentSummary:
    """Execute every cell x seed and aggregate; optionally write CSVs.

    The building graph is loaded once and shared read-only by all runs.
    """
    config.validate()
    if cells is None:
        cells = [(config.occupancy, config.metric_mode, config.radius)]
    graph = load_graph(config.graph_file)
    seeds = [s + seed_offset for s in config.seeds]

    run_lines = []
    agent_lines = []
    summary_rows = []
    for cell in sorted(cells, key=_cell_key):
        occ, mode, radius = cell
        cfg = with_cell(config, occ, mode, radius)
        survivals = []
        congestions = []
        for seed in seeds:
            result = engine.run(cfg, seed, graph=graph)
            rid = run_id(mode.value, occ, radius, seed)
            log.info(
                "run %s: survival=%.3f congestion=%ds",
                rid,
                result.survival_rate,
                result.total_congestion_time,
            )
            survivals.append(result.survival_rate)
            congestions.append(result.total_congestion_time)
            run_lines.append(
                f"{rid},{occ},{mode.value},{radius!r},{seed},"
                f"{result.survival_rate!r},{result.exited},{result.perished},"
                f"{result.duration!r},{result.total_congestion_time},"
                f"{result.sp_launched},{result.sp_delivered},{result.sp_dropped}"
            )
            for r in result.records:
                agent_lines.append(
                    f"{rid},{r.agent_id},{r.agent_class},{r.final_group},"
                    f"{r.outcome},{r.end_time!r},{r.queued_time},"
                    f"{r.path_requests},{r.group_switches}"
                )
        summary_rows.append(
            SummaryRow(
                occupancy=occ,
                mode=mode.value,
                radius=radius,
                replications=len(seeds),
                survival_mean=sum(survivals) / len(survivals),
                survival_min=min(survivals),
                survival_max=max(survivals),
                congestion_mean=sum(congestions) / len(congestions),
                congestion_min=min(congestions),
                congestion_max=max(congestions),
            )
        )
    summary = ExperimentSummary(rows=tuple(summary_rows))
    if out_dir is not None:
        write_csvs(summary, run_lines, agent_lines, out_dir)
    return summary


def _summary_line(row: SummaryRow) -> str:
    return (
        f"{row.occupancy},{row.mode},{row.radius!r},{row.replications},"
        f"{row.survival_mean!r},{row.survival_min!r},{row.survival_max!r},"
        f"{row.congestion_mean!r},{row.congestion_min!r},{row.congestion_max!r}"
    )


def _write(path: Path, name: str, header: str, lines: list[str]) -> None:
    body = [f"# cpnevac-csv {name} {CSV_SCHEMA_VERSION}", header, *lines]
    path.write_text("\n".join(body) + "\n", encoding="utf-8", newline="\n")


def write_csvs(
    summary: ExperimentSummary,
    run_lines: list[str],
    agent_lines: list[str],
    out_dir: str | Path,
) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "summary": out / "summary.csv",
        "runs": out / "runs.csv",
        "agents": out / "agents.csv",
    }
    _write(
        paths["summary"],
        "summary",
        SUMMARY_HEADER,
        [_summary_line(r) for r in summary.rows],
    )
    _write(paths["runs"], "runs", RUNS_HEADER, run_lines)
    _write(paths["agents"], "agents", AGENTS_HEADER, agent_lines)
    return paths


def read_summary(path: str | Path) -> ExperimentSummary:
    """Parse a summary.csv produced by :func:`write_csvs`."""
    rows = []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    lines = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != SUMMARY_HEADER:
        raise ReportError(f"not a summary csv: {path}")
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 10:
            raise ReportError(f"malformed summary row: {ln!r}")
        rows.append(
            SummaryRow(
                occupancy=int(parts[0]),
                mode=parts[1],
                radius=float(parts[2]),
                replications=int(parts[3]),
                survival_mean=float(parts[4]),
                survival_min=float(parts[5]),
                survival_max=float(parts[6]),
                congestion_mean=float(parts[7]),
                congestion_min=float(parts[8]),
                congestion_max=float(parts[9]),
            )
        )
    return ExperimentSummary(rows=tuple(rows))


def emit_plotdata(summary: ExperimentSummary, out_dir: str | Path) -> list[Path]:
    """Write grouped-bar tables: survival and congestion by occupancy/mode.

    One pair of files per distinct radius in the summary.
    """
    if not summary.rows:
        raise ReportError("nothing to plot: summary is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    radii = sorted({row.radius for row in summary.rows})
    for radius in radii:
        rows = [r for r in summary.rows if r.radius == radius]
        modes = sorted({r.mode for r in rows}, key=lambda m: _MODE_ORDER[m])
        occupancies = sorted({r.occupancy for r in rows})
        by_key = {(r.occupancy, r.mode): r for r in rows}
        for metric, fname in (
            ("survival_mean", f"survival_by_mode_R{radius:g}.csv"),
            ("congestion_mean", f"congestion_by_occupancy_R{radius:g}.csv"),
        ):
            lines = [f"# cpnevac-csv plotdata {CSV_SCHEMA_VERSION}"]
            lines.append(",".join(["occupancy", *modes]))
            for occ in occupancies:
                vals = []
                for mode in modes:
                    row = by_key.get((occ, mode))
                    vals.append(repr(getattr(row, metric)) if row else "")
                lines.append(",".join([str(occ), *vals]))
            path = out / fname
            path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
            written.append(path)
    return written
