"""Scenario configuration: typed schema, file parser, validation.

Config files are plain ``[section]`` / ``key = value`` text ('#' starts
a comment) so fixtures diff cleanly. Unknown sections or keys are
errors; every tunable has a default, so a minimal file only names the
graph and the hazard origin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional


class MetricMode(str, Enum):
    SM = "SM"  # all evacuees routed by the safety goal
    TM = "TM"  # all evacuees routed by the time goal
    CM = "CM"  # per-group goals with dynamic regrouping


class ConfigError(ValueError):
    """Invalid configuration file or value."""


@dataclass(frozen=True)
class ScenarioConfig:
    graph_file: str = ""
    occupancy: int = 30
    radius: float = 300.0  # spatial-information range in cm (0 disables)
    metric_mode: MetricMode = MetricMode.CM
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    replications: int = 5
    max_time: float = 900.0
    tick: float = 1.0

    # hazard
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    start_time: float = 5.0
    spread_rate: float = 20.0  # cm/s
    intensity_ramp: float = 30.0  # s per intensity level

    # route discovery
    mailbox_capacity: int = 10
    entry_expiry: float = 60.0
    exploration: float = 0.05
    threshold_smoothing: float = 0.8
    learning_rate: float = 0.1
    band_ratio: float = 1.5
    sp_per_tick: int = 2
    warmup_burst: int = 20
    hop_budget: Optional[int] = None  # None: max(30, ceil(4*sqrt(|V|)))
    age_budget: float = 30.0
    ext_excitation: float = 0.25
    ext_inhibition: float = 0.0
    damping: float = 0.5
    solve_tol: float = 1e-6
    solve_max_iter: int = 200

    # evacuees
    class_two_fraction: float = 0.5
    class_one_speed: float = 130.0  # cm/s
    class_two_speed: float = 80.0
    class_one_fatigue: float = 0.02  # health/s
    class_two_fatigue: float = 0.05
    class_one_hazard_damage: float = 1.0  # health/s per intensity level
    class_two_hazard_damage: float = 2.0
    health_threshold: float = 50.0
    queue_threshold: int = 4
    movement_depth: int = 3
    arrival_window: float = 10.0
    dynamic_grouping: bool = True

    def validate(self) -> None:
        problems = []
        if not self.graph_file:
            problems.append("graph_file is required")
        if self.occupancy < 0:
            problems.append("occupancy must be >= 0")
        if self.radius < 0:
            problems.append("radius must be >= 0")
        if self.replications != len(self.seeds):
            problems.append("replications must equal the number of seeds")
        if not self.seeds:
            problems.append("at least one seed is required")
        if self.max_time <= 0 or self.tick <= 0:
            problems.append("max_time and tick must be > 0")
        if self.spread_rate <= 0:
            problems.append("spread_rate must be > 0")
        if self.intensity_ramp <= 0:
            problems.append("intensity_ramp must be > 0")
        if self.mailbox_capacity < 1:
            problems.append("mailbox_capacity must be >= 1")
        if not 0.0 <= self.exploration <= 1.0:
            problems.append("exploration must be in [0, 1]")
        if not 0.0 <= self.threshold_smoothing < 1.0:
            problems.append("threshold_smoothing must be in [0, 1)")
        if self.band_ratio < 1.0:
            problems.append("band_ratio must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            problems.append("learning_rate must be in (0, 1]")
        if self.sp_per_tick < 0 or self.warmup_burst < 0:
            problems.append("sp_per_tick and warmup_burst must be >= 0")
        if self.hop_budget is not None and self.hop_budget < 1:
            problems.append("hop_budget must be >= 1 when given")
        if min(self.class_one_speed, self.class_two_speed) <= 0:
            problems.append("speeds must be > 0")
        if min(self.class_one_fatigue, self.class_two_fatigue) < 0:
            problems.append("fatigue rates must be >= 0")
        if self.class_two_fatigue <= self.class_one_fatigue:
            problems.append("class-two fatigue must exceed class-one fatigue")
        if min(self.class_one_hazard_damage, self.class_two_hazard_damage) < 0:
            problems.append("hazard damage rates must be >= 0")
        if self.class_two_hazard_damage <= self.class_one_hazard_damage:
            problems.append("class-two hazard damage must exceed class-one")
        if not 0.0 <= self.class_two_fraction <= 1.0:
            problems.append("class_two_fraction must be in [0, 1]")
        if self.queue_threshold < 1:
            problems.append("queue_threshold must be >= 1")
        if self.movement_depth < 1:
            problems.append("movement_depth must be >= 1")
        if self.arrival_window <= 0:
            problems.append("arrival_window must be > 0")
        if problems:
            raise ConfigError("; ".join(problems))


_SCHEMA: dict[str, dict[str, str]] = {
    "scenario": {
        "graph_file": "path",
        "occupancy": "int",
        "radius": "float",
        "metric_mode": "mode",
        "seeds": "int_list",
        "replications": "int",
        "max_time": "float",
        "tick": "float",
    },
    "hazard": {
        "origin": "vec3",
        "start_time": "float",
        "spread_rate": "float",
        "intensity_ramp": "float",
    },
    "cpn": {
        "mailbox_capacity": "int",
        "entry_expiry": "float",
        "exploration": "float",
        "threshold_smoothing": "float",
        "learning_rate": "float",
        "band_ratio": "float",
        "sp_per_tick": "int",
        "warmup_burst": "int",
        "hop_budget": "int",
        "age_budget": "float",
        "ext_excitation": "float",
        "ext_inhibition": "float",
        "damping": "float",
        "solve_tol": "float",
        "solve_max_iter": "int",
    },
    "agents": {
        "class_two_fraction": "float",
        "class_one_speed": "float",
        "class_two_speed": "float",
        "class_one_fatigue": "float",
        "class_two_fatigue": "float",
        "class_one_hazard_damage": "float",
        "class_two_hazard_damage": "float",
        "health_threshold": "float",
        "queue_threshold": "int",
        "movement_depth": "int",
        "arrival_window": "float",
        "dynamic_grouping": "bool",
    },
}


def _parse_value(kind: str, raw: str, base_dir: Path):
    if kind == "int":
        return int(raw)
    if kind == "float":
        v = float(raw)
        if math.isnan(v):
            raise ValueError("nan is not a valid value")
        return v
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "mode":
        try:
            return MetricMode(raw.upper())
        except ValueError:
            raise ValueError(f"metric_mode must be SM, TM or CM, not {raw!r}") from None
    if kind == "int_list":
        return tuple(int(part.strip()) for part in raw.split(",") if part.strip())
    if kind == "vec3":
        parts = [float(p.strip()) for p in raw.split(",")]
        if len(parts) != 3:
            raise ValueError("expected three comma-separated coordinates")
        return tuple(parts)
    if kind == "path":
        p = Path(raw)
        return str(p if p.is_absolute() else (base_dir / p).resolve())
    raise AssertionError(kind)


def config_from_file(path: str | Path) -> ScenarioConfig:
    """Parse and validate a scenario configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    base_dir = path.parent
    values: dict[str, object] = {}
    seen_seeds = False
    seen_replications = False
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, _, rawval = line.partition("=")
        key = key.strip()
        rawval = rawval.strip()
        kind = _SCHEMA[section].get(key)
        if kind is None:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        try:
            values[key] = _parse_value(kind, rawval, base_dir)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
        if key == "seeds":
            seen_seeds = True
        if key == "replications":
            seen_replications = True

    if seen_seeds and not seen_replications:
        values["replications"] = len(values["seeds"])  # type: ignore[arg-type]
    cfg = ScenarioConfig(**values)  # type: ignore[arg-type]
    cfg.validate()
    return cfg


def with_cell(
    config: ScenarioConfig,
    occupancy: int,
    mode: MetricMode,
    radius: float,
) -> ScenarioConfig:
    """Config variant for one experiment cell."""
    return replace(config, occupancy=occupancy, metric_mode=mode, radius=radius)


def paper_matrix_cells(config: ScenarioConfig) -> list[tuple[int, MetricMode, float]]:
    """The default experiment grid: four occupancies, all three modes."""
    return [
        (occ, mode, config.radius)
        for occ in (30, 60, 90, 120)
        for mode in (MetricMode.SM, MetricMode.TM, MetricMode.CM)
    ]
