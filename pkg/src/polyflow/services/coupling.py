"""Operator splitting for the coupled micro-macro step.

One step: momentum solve with the old stress, projection, implicit micro step
at every fine node, deformation by the new velocity gradient, semi-Lagrangian
transport of the ensembles, and a stress refresh from the new ensembles.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, replace

import numpy as np

from polyflow.core.config import settings
from polyflow.core.errors import AppError, SizeMismatch
from polyflow.schemas.config import FlowParams, SimConfig
from polyflow.services.fem.mesh import MeshPair
from polyflow.services.fem.navier_stokes import DirichletData, FlowSolver, MacroState, initial_state
from polyflow.services.micro_stepper import (
    EnergyLedger,
    deformation_update,
    implicit_gradient_step_nodes,
    node_stream,
    sample_initial_ensemble,
)
from polyflow.services.stress import node_stress, project_stress

logger = logging.getLogger(__name__)


@dataclass
class ParticleField:
    """One ensemble per fine-mesh node, all sharing the particle index labelling."""

    ensembles: np.ndarray  # (n_nodes, N, 2)
    coords: np.ndarray  # (n_nodes, 2)

    @property
    def n_nodes(self) -> int:
        return self.ensembles.shape[0]

    @property
    def N(self) -> int:
        return self.ensembles.shape[1]

    @classmethod
    def broadcast(cls, ensemble: np.ndarray, coords: np.ndarray) -> "ParticleField":
        ensemble = np.asarray(ensemble, dtype=float)
        field = np.broadcast_to(ensemble, (coords.shape[0], *ensemble.shape)).copy()
        return cls(ensembles=field, coords=np.asarray(coords, dtype=float))

    def with_ensembles(self, ensembles: np.ndarray) -> "ParticleField":
        if ensembles.shape != self.ensembles.shape:
            raise SizeMismatch(
                "every node must keep exactly N particles",
                details={"expected": list(self.ensembles.shape), "got": list(ensembles.shape)},
            )
        return ParticleField(ensembles=ensembles, coords=self.coords)


def velocity_gradient_at_nodes(u: np.ndarray, mesh: MeshPair) -> np.ndarray:
    """(n, 2, 2) with [a, b] = du_a/dx_b, area-weighted over incident fine triangles."""
    fine = mesh.fine
    per_element = fine.element_gradients(np.asarray(u, dtype=float))  # (m, 2, 2)
    nodal = fine.node_element_average @ per_element.reshape(fine.n_triangles, 4)
    return np.asarray(nodal).reshape(fine.n_nodes, 2, 2)


def advect_and_interpolate(particles: ParticleField, u: np.ndarray, mesh: MeshPair, dt: float) -> ParticleField:
    """Semi-Lagrangian pullback of every ensemble, particle index by particle index.

    Reads only the incoming field and returns a new one.
    """
    fine = mesh.fine
    departure = particles.coords - dt * np.asarray(u, dtype=float)
    tri, weights = fine.locate(departure)
    corners = particles.ensembles[fine.triangles[tri]]  # (n, 3, N, 2)
    return particles.with_ensembles(np.einsum("na,nakd->nkd", weights, corners))


def micro_update(
    particles: ParticleField,
    u: np.ndarray,
    mesh: MeshPair,
    cfg: SimConfig,
    ledger: EnergyLedger | None = None,
    step: int = 0,
    t: float = 0.0,
    workers: int | None = None,
) -> ParticleField:
    """Implicit gradient step, deformation and transport for a given u^{n+1}."""
    micro = cfg.micro_step_config()
    result = implicit_gradient_step_nodes(particles.ensembles, cfg.potential, cfg.bandwidth, micro, workers)
    if ledger is not None:
        ledger.record(step, t, result)
    grad_u = velocity_gradient_at_nodes(u, mesh)
    deformed = deformation_update(result.ensembles_out, grad_u, cfg.dt, cfg.potential, micro.projection_margin)
    return advect_and_interpolate(particles.with_ensembles(deformed), u, mesh, cfg.dt)


def full_time_step(
    macro: MacroState,
    particles: ParticleField,
    solver: FlowSolver,
    cfg: SimConfig,
    ledger: EnergyLedger | None = None,
    workers: int | None = None,
) -> tuple[MacroState, ParticleField]:
    step = macro.step + 1
    t = macro.t + cfg.dt
    try:
        u_tilde = solver.momentum_step(macro)
        u, p = solver.pressure_correction(u_tilde, macro)
        new_particles = micro_update(particles, u, solver.mesh, cfg, ledger, step, t, workers)
        tau = project_stress(
            node_stress(new_particles.ensembles, cfg.potential, cfg.eps_p, cfg.Wi), solver.mesh
        )
    except AppError as e:
        raise e.annotate(step=step, t=t)
    return replace(macro, u=u, p=p, tau=tau, t=t, step=step), new_particles


class Simulation:
    """A coupled run on one mesh pair: state, solver, ledger and the stepping loop."""

    def __init__(
        self,
        mesh: MeshPair,
        cfg: SimConfig,
        bc: DirichletData,
        workers: int | None = None,
    ):
        self.mesh = mesh
        self.cfg = cfg
        self.workers = workers or settings.workers
        self.solver = FlowSolver(mesh, FlowParams.from_sim(cfg), bc, cfg.projection)
        self.ledger = EnergyLedger(slack=cfg.micro_step_config().stability_slack)
        self.max_divergence = 0.0
        ensemble = sample_initial_ensemble(cfg.N, cfg.potential, node_stream(cfg.seed, 0, 0))
        self.particles = ParticleField.broadcast(ensemble, mesh.fine.nodes)
        self.macro = initial_state(mesh, bc)
        self.macro.tau = project_stress(
            node_stress(self.particles.ensembles, cfg.potential, cfg.eps_p, cfg.Wi), mesh
        )

    def step(self) -> None:
        self.macro, self.particles = full_time_step(
            self.macro, self.particles, self.solver, self.cfg, self.ledger, self.workers
        )
        div = float(np.max(np.abs(self.solver.divergence_functional(self.macro.u))))
        self.max_divergence = max(self.max_divergence, div)
        logger.debug("step %d t=%.4f divergence=%.3e", self.macro.step, self.macro.t, div)

    def run(self, n_steps: int, on_output: Callable[["Simulation"], None] | None = None) -> None:
        every = self.cfg.output_every
        if on_output is not None and self.macro.step == 0:
            on_output(self)
        for _ in range(n_steps):
            self.step()
            if on_output is not None and self.macro.step % every == 0:
                on_output(self)
        logger.info(
            "coupled run reached t=%.4f after %d steps; energy violations=%d, max divergence=%.3e",
            self.macro.t, self.macro.step, self.ledger.violations, self.max_divergence,
        )
