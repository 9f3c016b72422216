"""Quick invariant suite behind ``polyflow verify``.

Each check is small enough to run in seconds and reports a pass flag with
the measured quantity; nothing here writes files.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from polyflow.schemas.config import FlowParams, MicroStepConfig, Potential, PotentialKind, ProjectionKind
from polyflow.schemas.series import TimeSeries
from polyflow.services.fem.mesh import build_mesh_pair
from polyflow.services.fem.navier_stokes import FlowSolver, cavity_dirichlet, initial_state, pressure_mean
from polyflow.services.micro_energy import discrete_free_energy, free_energy_gradient
from polyflow.services.micro_stepper import implicit_gradient_step_batch, node_stream, sample_initial_ensemble
from polyflow.services.potentials import Kernel
from polyflow.services.scenarios.analysis import hysteresis_loop
from polyflow.services.scenarios.defaults import self_test
from polyflow.services.scenarios.oldroyd_b import newtonian_couette_series, oldroyd_b_reference
from polyflow.services.scenarios.outputs import probe_column

logger = logging.getLogger(__name__)

FD_STEP = 1e-6
GRADIENT_TOL = 1e-5
DIVERGENCE_TOL = 1e-8


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    detail: str = ""


def finite_difference_gradient(ens: np.ndarray, pot: Potential, k: Kernel, step: float = FD_STEP) -> np.ndarray:
    grad = np.zeros_like(ens)
    for idx in np.ndindex(*ens.shape):
        plus = ens.copy()
        minus = ens.copy()
        plus[idx] += step
        minus[idx] -= step
        grad[idx] = (discrete_free_energy(plus, pot, k) - discrete_free_energy(minus, pot, k)) / (2.0 * step)
    return grad


def check_defaults() -> CheckResult:
    problems = self_test()
    return CheckResult("scenario defaults", not problems, float(len(problems)), "; ".join(problems))


def check_gradients(trials: int = 20, seed: int = 0) -> CheckResult:
    worst = 0.0
    potentials = [Potential(kind=PotentialKind.hookean), Potential(kind=PotentialKind.fene)]
    for trial in range(trials):
        rng = node_stream(seed, trial, 0)
        n = (1, 2, 5, 20)[trial % 4]
        pot = potentials[trial % 2]
        ens = rng.standard_normal((n, 2))
        if pot.is_fene:
            ens *= 0.3 * np.sqrt(pot.b) / max(1.0, float(np.max(np.linalg.norm(ens, axis=1))))
        k = Kernel(h=float(rng.uniform(0.3, 1.5)))
        exact = free_energy_gradient(ens, pot, k)
        approx = finite_difference_gradient(ens, pot, k)
        scale = max(float(np.linalg.norm(exact)), 1e-12)
        worst = max(worst, float(np.linalg.norm(exact - approx)) / scale)
    return CheckResult("free energy gradient", worst < GRADIENT_TOL, worst)


def check_energy_stability(trials: int = 10, seed: int = 1) -> CheckResult:
    cfg = MicroStepConfig(dt=1e-2, Wi=1.0)
    pot = Potential(kind=PotentialKind.fene)
    q = np.stack([sample_initial_ensemble(30, pot, node_stream(seed, k, 0)) for k in range(trials)])
    res = implicit_gradient_step_batch(q, pot, np.full(trials, 0.5), cfg)
    worst = float(np.max(res.stability_residual))
    return CheckResult("energy stability", res.violations == 0, worst)


def check_projection(nx: int = 4, ny: int = 4) -> CheckResult:
    mesh = build_mesh_pair(nx, ny)
    params = FlowParams(Re=1.0, eta_s=1.0, dt=1e-2)
    solver = FlowSolver(mesh, params, cavity_dirichlet(mesh), ProjectionKind.consistent)
    state = solver.step(initial_state(mesh, solver.bc))
    div = float(np.max(np.abs(solver.divergence_functional(state.u))))
    again, _ = solver.pressure_correction(state.u, state)
    drift = float(np.max(np.abs(again - state.u)))
    mean = abs(pressure_mean(state.p, mesh))
    ok = div <= DIVERGENCE_TOL and drift < 1e-10 and mean < 1e-12
    return CheckResult("projection", ok, div, f"idempotence drift {drift:.2e}, pressure mean {mean:.2e}")


def check_mesh(nx: int = 3, ny: int = 2) -> CheckResult:
    mesh = build_mesh_pair(nx, ny, 1.5, 0.7)
    area = float(mesh.fine.areas.sum())

    def affine(p: np.ndarray) -> np.ndarray:
        return 2.0 * p[:, 0] - 3.0 * p[:, 1] + 0.5

    rng = node_stream(0, 0, 0)
    pts = np.column_stack([rng.uniform(0, 1.5, 50), rng.uniform(0, 0.7, 50)])
    err = float(np.max(np.abs(mesh.fine.interpolate(affine(mesh.fine.nodes), pts) - affine(pts))))
    ok = abs(area - 1.5 * 0.7) < 1e-12 and err < 1e-12 and bool(np.all(mesh.fine.areas > 0))
    return CheckResult("mesh", ok, err, f"area {area!r}")


def check_oldroyd_oracle() -> CheckResult:
    series = oldroyd_b_reference(1.0, 1.0, 1.0, 0.0, M_fine=400, dt_fine=1e-4, t_end=0.2, record_dt=0.05)
    worst = 0.0
    for y in (0.2, 0.4, 0.6, 0.8):
        for t in series.t[1:]:
            exact = float(newtonian_couette_series(np.array([y]), t, 1.0, 1.0)[0])
            worst = max(worst, abs(float(series.at(probe_column("u", y), t)) - exact))
    return CheckResult("oldroyd-b newtonian limit", worst < 1e-4, worst)


def check_loop_area() -> CheckResult:
    x = [0.0, 2.0, 3.0, 1.0, 0.0]
    y = [0.0, 0.0, 1.0, 1.0, 0.0]
    series = TimeSeries(t=[0.0, 1.0, 2.0, 3.0, 4.0], columns={"mean_sq_ext_over_b": x, "normal_stress_diff": y})
    area = hysteresis_loop(series).area
    return CheckResult("shoelace area", abs(area - 2.0) < 1e-12, area)


CHECKS: list[Callable[[], CheckResult]] = [
    check_defaults,
    check_mesh,
    check_gradients,
    check_energy_stability,
    check_projection,
    check_oldroyd_oracle,
    check_loop_area,
]


def run_checks() -> list[CheckResult]:
    results = []
    for check in CHECKS:
        result = check()
        (logger.info if result.passed else logger.error)(
            "%s: %s (%.3e) %s", result.name, "ok" if result.passed else "FAILED", result.value, result.detail
        )
        results.append(result)
    return results
