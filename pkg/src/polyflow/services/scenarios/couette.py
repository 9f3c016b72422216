"""Start-up Couette runs: Hookean accuracy test and FENE shear."""

import logging

import numpy as np

from polyflow.core.config import settings
from polyflow.schemas.config import FlowParams, ScenarioKind, SimConfig
from polyflow.schemas.series import TimeSeries
from polyflow.services.fem.couette import Couette1DState, CouetteSolver
from polyflow.services.micro_stepper import EnergyLedger, node_stream, sample_initial_ensemble
from polyflow.services.scenarios.defaults import COUETTE_PROBES, SHEAR_PROBES, scenario_config
from polyflow.services.scenarios.outputs import RunResult, probe_column
from polyflow.services.stress import TAU12, normal_stress_difference

logger = logging.getLogger(__name__)

STANDARD_ERROR_PROBE = 0.8


def _probe_row(state: Couette1DState, probes: tuple[float, ...], with_stress: bool) -> tuple[float, ...]:
    row = list(np.interp(probes, state.y, state.u))
    if with_stress:
        row += list(np.interp(probes, state.y, state.tau[:, TAU12]))
        row += list(np.interp(probes, state.y, normal_stress_difference(state.tau)))
    return (state.t, *row)


def run_couette(cfg: SimConfig, probes: tuple[float, ...], with_stress: bool, workers: int | None = None) -> RunResult:
    solver = CouetteSolver(
        cfg.M,
        FlowParams.from_sim(cfg),
        cfg.potential,
        cfg.bandwidth,
        cfg.micro_step_config(),
        U=cfg.U,
        workers=workers or settings.workers,
    )
    state = solver.initial_state(sample_initial_ensemble(cfg.N, cfg.potential, node_stream(cfg.seed, 0, 0)))
    ledger = EnergyLedger(slack=cfg.micro_step_config().stability_slack)
    quantities = ("u", "tau12", "n1") if with_stress else ("u",)
    names = [probe_column(q, y) for q in quantities for y in probes]
    rows = [_probe_row(state, probes, with_stress)]
    logger.info("couette run (%s): %d steps, M=%d, N=%d, seed=%d", cfg.scenario.value, cfg.n_steps, cfg.M, cfg.N, cfg.seed)
    for _ in range(cfg.n_steps):
        state = solver.step(state, ledger)
        if state.step % cfg.output_every == 0:
            rows.append(_probe_row(state, probes, with_stress))
    logger.info("couette run finished at t=%.4f; energy violations=%d", state.t, ledger.violations)
    return RunResult(
        config=cfg,
        series=TimeSeries.from_rows(names, rows),
        ledger=ledger,
        probes=probes,
        probe_quantities=quantities,
        summary={"t_end": state.t, **ledger.summary()},
    )


def run_couette_hookean(workers: int | None = None, **overrides) -> RunResult:
    cfg = scenario_config(ScenarioKind.couette_hookean, **overrides)
    return run_couette(cfg, COUETTE_PROBES, with_stress=False, workers=workers)


def run_fene_shear(workers: int | None = None, **overrides) -> RunResult:
    cfg = scenario_config(ScenarioKind.fene_shear, **overrides)
    result = run_couette(cfg, SHEAR_PROBES, with_stress=True, workers=workers)
    series = result.series
    tau_wall = np.abs(series.column(probe_column("tau12", 1.0)))
    n1_wall = series.column(probe_column("n1", 1.0))
    u_near = series.column(probe_column("u", 0.2))
    result.summary.update(
        {
            "shear_stress_peak_t": float(series.t[int(np.argmax(tau_wall))]),
            "normal_stress_peak_t": float(series.t[int(np.argmax(n1_wall))]),
            "velocity_overshoot": float(np.max(u_near) / u_near[-1] - 1.0) if u_near[-1] != 0.0 else 0.0,
        }
    )
    return result


def seed_ensemble_statistics(
    seeds: list[int], probe: float = STANDARD_ERROR_PROBE, workers: int | None = None, **overrides
) -> TimeSeries:
    """Mean and standard error of u(probe, t) across independent Hookean Couette runs."""
    if len(seeds) < 2:
        raise ValueError("at least two seeds are needed for a standard error")
    runs = [run_couette_hookean(workers=workers, seed=s, **overrides) for s in seeds]
    name = probe_column("u", probe)
    values = np.stack([r.series.column(name) for r in runs])  # (seeds, times)
    mean = values.mean(axis=0)
    stderr = values.std(axis=0, ddof=1) / np.sqrt(len(seeds))
    return TimeSeries(t=runs[0].series.t, columns={"mean": mean.tolist(), "stderr": stderr.tolist()})
