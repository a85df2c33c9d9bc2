"""Coordinated-actuated baseline generation: Webster seed plus hill climb
against a simulated performance index (the plan-fixture generator behind
``corsim plan``)."""

from __future__ import annotations

from . import metrics
from .config import ExperimentConfig
from .core import SimulationDefaults
from .microsim import SimConfig, Simulation
from .network import build_network
from .strategies import make_supervisor
from .timing import (
    TimingPlan,
    hill_climb,
    performance_index,
    phase_flow_ratios,
    webster_initial,
)

EVAL_SEEDS = (9001, 9002)
EVAL_WARMUP = 300.0
EVAL_DURATION = 1200.0


def evaluate_plan(exp: ExperimentConfig, scenario_name: str, plan: TimingPlan,
                  seeds=EVAL_SEEDS, warmup=EVAL_WARMUP, duration=EVAL_DURATION) -> float:
    """Mean performance index of short seeded CA runs under the plan."""
    from dataclasses import replace

    sc = replace(exp.scenarios[scenario_name], warmup=warmup, duration=duration)
    pis = []
    for seed in seeds:
        cfg = SimConfig(
            scenario=sc,
            strategy="CA",
            sensing_range=0.0,
            seed=seed,
            geometry=exp.geometry,
            phase_configs=exp.phase_configs,
            defaults=exp.defaults,
        )
        sup = make_supervisor("CA", 0.0, exp.defaults, exp.phase_configs, ca_plan=plan)
        rec = Simulation(cfg, supervisors=[sup]).run()
        rep = metrics.control_delay(rec, exp.geometry)
        delay_hours = rep.vehicle_mean_delay * rep.n_vehicles / 3600.0
        stops = rep.stops_per_vehicle * rep.n_vehicles
        pis.append(performance_index(delay_hours, stops))
    return sum(pis) / len(pis)


def generate_ca_plan(
    exp: ExperimentConfig,
    scenario_name: str,
    budget: int = 120,
    skip_hill_climb: bool = False,
) -> tuple[TimingPlan, float]:
    net = build_network(exp.geometry)
    ratios = phase_flow_ratios(net, exp.scenarios[scenario_name])
    v = exp.geometry.free_flow_speed
    travel_times = [
        (pos - exp.geometry.intersection_positions[0]) / v
        for pos in exp.geometry.intersection_positions
    ]
    # real lost time per critical phase: startup plus clearance
    clearance = exp.phase_configs[2].clearance
    startup = exp.defaults.startup_lost_time
    lost_time = 4 * (startup + clearance)
    seed_plan = webster_initial(
        ratios, lost_time, travel_times,
        clearance=clearance, startup=startup,
    )
    if skip_hill_climb or budget < 1:
        return seed_plan, evaluate_plan(exp, scenario_name, seed_plan)

    def evaluator(plan: TimingPlan) -> float:
        return evaluate_plan(exp, scenario_name, plan)

    best = hill_climb(seed_plan, evaluator, budget=budget)
    return best, evaluate_plan(exp, scenario_name, best)
