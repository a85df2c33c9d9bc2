"""Experiment, scenario and timing-plan configuration files.

All files are YAML with a ``schema`` version key; units are feet, seconds
and vehicles/hour throughout.  Validation collects every error (with file
location) instead of stopping at the first.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from .core import (
    Approach,
    CorridorGeometry,
    Movement,
    PhaseConfig,
    ScenarioConfig,
    SimulationDefaults,
    Turn,
    default_phase_configs,
)
from .soa import SoaParams
from .timing import TimingPlan

STRATEGIES = ("FA", "CA", "SOA", "PAA")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("\n".join(errors))


@dataclass
class ExperimentMatrix:
    scenarios: list[str]
    strategies: list[str]
    sensing_ranges: list[float]
    seeds: list[int]
    output_dir: str

    def cells(self) -> list[tuple[str, str, float, int]]:
        """(scenario, strategy, range, seed) for every run; FA and CA do not
        use trajectory sensing, so ranges do not multiply them."""
        out = []
        for sc in self.scenarios:
            for st in self.strategies:
                ranges = self.sensing_ranges if st in ("SOA", "PAA") else [0.0]
                for r in ranges:
                    for seed in self.seeds:
                        out.append((sc, st, r, seed))
        return out


@dataclass
class ExperimentConfig:
    matrix: ExperimentMatrix
    scenarios: dict[str, ScenarioConfig]
    plans: dict[str, TimingPlan]
    geometry: CorridorGeometry
    phase_configs: dict[int, PhaseConfig]
    defaults: SimulationDefaults
    soa_params: SoaParams
    paa_horizon: int
    paa_stage_cap: int
    paa_priority: bool
    paa_priority_core_fraction: float
    source_path: str

    def digest_payload(self, scenario: str, strategy: str, rng: float, seed: int) -> dict:
        sc = self.scenarios[scenario]
        payload = {
            "scenario": scenario,
            "strategy": strategy,
            "range": rng,
            "seed": seed,
            "demand": {m.key(): round(r, 6) for m, r in sorted(sc.demand.items(), key=lambda kv: kv[0].key())},
            "turns": {
                f"i{i}.{a.value}": {t.value: round(v, 6) for t, v in sorted(fr.items(), key=lambda kv: kv[0].value)}
                for (i, a), fr in sorted(sc.turn_fractions.items(), key=lambda kv: (kv[0][0], kv[0][1].value))
            },
            "warmup": sc.warmup,
            "duration": sc.duration,
            "geometry": [list(self.geometry.intersection_positions), self.geometry.approach_length],
            "timing": {p: [c.min_green, c.max_green, c.yellow, c.all_red, c.passage_time, c.advance_passage_time]
                       for p, c in sorted(self.phase_configs.items())},
            "soa": vars(self.soa_params).copy() if strategy == "SOA" else None,
            "paa": [self.paa_horizon, self.paa_stage_cap, self.paa_priority,
                    self.paa_priority_core_fraction] if strategy == "PAA" else None,
            "plan": self.plans[scenario].to_dict()
            if scenario in self.plans
            and (strategy == "CA" or (strategy == "PAA" and self.paa_priority))
            else None,
        }
        return payload


_EXPERIMENT_KEYS = {
    "schema", "output_dir", "geometry", "timing", "run", "soa", "paa",
    "matrix", "scenario_dir", "plan_dir",
}
_MATRIX_KEYS = {"scenarios", "strategies", "sensing_ranges_ft", "seeds"}


def load_experiment(path: str) -> ExperimentConfig:
    errors: list[str] = []
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except Exception as e:
        raise ConfigError([f"{path}: cannot read ({e})"])
    loc = path

    for key in raw:
        if key not in _EXPERIMENT_KEYS:
            errors.append(f"{loc}: unknown key {key!r}")
    mraw = raw.get("matrix", {})
    for key in mraw:
        if key not in _MATRIX_KEYS:
            errors.append(f"{loc}: unknown matrix key {key!r}")

    scenarios = mraw.get("scenarios") or []
    strategies = mraw.get("strategies") or []
    ranges = mraw.get("sensing_ranges_ft") or []
    seeds = mraw.get("seeds") or []
    if not scenarios:
        errors.append(f"{loc}: matrix.scenarios is empty")
    if not strategies:
        errors.append(f"{loc}: matrix.strategies is empty")
    for s in strategies:
        if s not in STRATEGIES:
            errors.append(f"{loc}: unknown strategy {s!r}")
    if any(s in ("SOA", "PAA") for s in strategies) and not ranges:
        errors.append(f"{loc}: matrix.sensing_ranges_ft is empty")
    for r in ranges:
        if not isinstance(r, (int, float)) or r <= 0:
            errors.append(f"{loc}: sensing range {r!r} must be > 0 ft")
    if not seeds:
        errors.append(f"{loc}: matrix.seeds is empty")
    if len(set(seeds)) != len(seeds):
        errors.append(f"{loc}: matrix.seeds must be distinct")

    g = raw.get("geometry", {})
    try:
        spacing = float(g.get("spacing_ft", 1320.0))
        approach = float(g.get("approach_ft", 2200.0))
        first = approach
        geometry = CorridorGeometry(
            intersection_positions=(first, first + spacing, first + 2 * spacing),
            approach_length=approach,
        )
    except (ValueError, TypeError) as e:
        errors.append(f"{loc}: geometry invalid ({e})")
        geometry = CorridorGeometry()

    t = raw.get("timing", {})
    try:
        phase_configs = default_phase_configs(
            min_green=float(t.get("min_green", 5.0)),
            max_green_arterial=float(t.get("max_green_arterial", 60.0)),
            max_green_minor=float(t.get("max_green_minor", 35.0)),
            yellow=float(t.get("yellow", 4.0)),
            all_red=float(t.get("all_red", 1.0)),
            passage_stopbar=float(t.get("passage_stopbar", 2.1)),
            passage_advance=float(t.get("passage_advance", 3.0)),
        )
    except (ValueError, TypeError) as e:
        errors.append(f"{loc}: timing invalid ({e})")
        phase_configs = default_phase_configs()

    s = raw.get("soa", {})
    try:
        soa_params = SoaParams(
            h_sat=float(s.get("h_sat", 2.0)),
            sx_cap=float(s.get("sx_cap", 30.0)),
            sx_floor=float(s.get("sx_floor", 10.0)),
            lost_time_per_critical_phase=float(s.get("lost_time_per_critical_phase", 4.0)),
            xc_window=int(s.get("xc_window", 5)),
            xc_prior=float(s.get("xc_prior", 0.75)),
        )
    except (ValueError, TypeError) as e:
        errors.append(f"{loc}: soa invalid ({e})")
        soa_params = SoaParams()

    p = raw.get("paa", {})
    run = raw.get("run", {})
    warmup = float(run.get("warmup_s", 600.0))
    duration = float(run.get("duration_s", 3600.0))
    if warmup < 0 or duration <= 0:
        errors.append(f"{loc}: run.warmup_s must be >= 0 and run.duration_s > 0")

    base = os.path.dirname(os.path.abspath(path))
    scen_dir = os.path.join(base, raw.get("scenario_dir", "scenarios"))
    plan_dir = os.path.join(base, raw.get("plan_dir", "plans"))
    scenario_cfgs: dict[str, ScenarioConfig] = {}
    for name in scenarios:
        spath = os.path.join(scen_dir, f"{name}.yaml")
        try:
            scenario_cfgs[name] = load_scenario(spath, warmup=warmup, duration=duration)
        except ConfigError as e:
            errors.extend(e.errors)
        except FileNotFoundError:
            errors.append(f"{spath}: scenario file missing")
    plans: dict[str, TimingPlan] = {}
    for name in scenarios:
        ppath = os.path.join(plan_dir, f"{name}.yaml")
        if os.path.exists(ppath):
            try:
                plans[name] = load_plan(ppath)
            except ConfigError as e:
                errors.extend(e.errors)

    if errors:
        raise ConfigError(errors)
    out_dir = raw.get("output_dir", "artifacts/matrix")
    return ExperimentConfig(
        matrix=ExperimentMatrix(
            scenarios=list(scenarios),
            strategies=list(strategies),
            sensing_ranges=[float(r) for r in ranges],
            seeds=[int(x) for x in seeds],
            output_dir=out_dir,
        ),
        scenarios=scenario_cfgs,
        plans=plans,
        geometry=geometry,
        phase_configs=phase_configs,
        defaults=SimulationDefaults(),
        soa_params=soa_params,
        paa_horizon=int(p.get("horizon_s", 120)),
        paa_stage_cap=int(p.get("stage_cap", 8)),
        paa_priority=bool(p.get("priority", True)),
        paa_priority_core_fraction=float(p.get("priority_core_fraction", 0.5)),
        source_path=os.path.abspath(path),
    )


def load_scenario(path: str, warmup: float, duration: float) -> ScenarioConfig:
    errors: list[str] = []
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    name = raw.get("name") or os.path.splitext(os.path.basename(path))[0]
    demand: dict[Movement, float] = {}
    for key, rate in (raw.get("demand") or {}).items():
        try:
            mv = Movement.from_key(key)
        except (ValueError, KeyError):
            errors.append(f"{path}: bad movement key {key!r}")
            continue
        if mv.approach == Approach.EB and mv.intersection != 0:
            errors.append(f"{path}: {key}: EB demand enters at intersection 0")
        if mv.approach == Approach.WB and mv.intersection != 2:
            errors.append(f"{path}: {key}: WB demand enters at intersection 2")
        try:
            rate = float(rate)
        except (TypeError, ValueError):
            errors.append(f"{path}: demand {key} is not a number")
            continue
        if rate < 0:
            errors.append(f"{path}: demand {key} is negative")
        demand[mv] = rate
    fractions: dict[tuple[int, Approach], dict[Turn, float]] = {}
    for key, fr in (raw.get("turn_fractions") or {}).items():
        parts = key.split(".")
        if len(parts) != 2 or not parts[0].startswith("i"):
            errors.append(f"{path}: bad turn_fractions key {key!r} (want iN.<approach>)")
            continue
        try:
            i = int(parts[0][1:])
            app = Approach(parts[1])
        except ValueError:
            errors.append(f"{path}: bad turn_fractions key {key!r}")
            continue
        try:
            d = {Turn(t): float(v) for t, v in fr.items()}
        except (ValueError, TypeError):
            errors.append(f"{path}: bad turn fractions under {key!r}")
            continue
        total = sum(d.values())
        if abs(total - 1.0) > 1e-6:
            errors.append(f"{path}: turn fractions {key} sum to {total:.4f}, expected 1")
        fractions[(i, app)] = d
    if not demand:
        errors.append(f"{path}: no demand entries")
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(
        name=name, demand=demand, turn_fractions=fractions,
        warmup=warmup, duration=duration,
    )


def save_scenario(scenario: ScenarioConfig, path: str) -> None:
    data = {
        "schema": 1,
        "name": scenario.name,
        "demand": {
            mv.key(): round(rate, 2)
            for mv, rate in sorted(scenario.demand.items(), key=lambda kv: kv[0].key())
        },
        "turn_fractions": {
            f"i{i}.{a.value}": {t.value: round(v, 4) for t, v in sorted(fr.items(), key=lambda kv: kv[0].value)}
            for (i, a), fr in sorted(scenario.turn_fractions.items(), key=lambda kv: (kv[0][0], kv[0][1].value))
        },
    }
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        yaml.safe_dump(data, fh, sort_keys=True)


def load_plan(path: str) -> TimingPlan:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    try:
        plan = TimingPlan.from_dict(raw)
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError([f"{path}: bad plan ({e})"])
    errs = plan.validate()
    if errs:
        raise ConfigError([f"{path}: {e}" for e in errs])
    return plan


def save_plan(plan: TimingPlan, path: str) -> None:
    data = {"schema": 1}
    data.update(plan.to_dict())
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        yaml.safe_dump(data, fh, sort_keys=True)
