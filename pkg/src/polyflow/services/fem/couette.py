"""Plane Couette flow between a moving lower plane (y=0) and a fixed upper plane (y=1).

By symmetry only u(y) and the shear stress enter the momentum balance and the
Lagrangian transport of the configurations vanishes, so the coupled system
reduces to a 1D diffusion equation with an explicit polymer stress source and
a shear deformation of every nodal ensemble.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse

from polyflow.core.errors import AppError, SizeMismatch
from polyflow.schemas.config import BandwidthPolicy, FlowParams, MicroStepConfig, Potential
from polyflow.services.fem.linalg import FactorizedSolver
from polyflow.services.micro_stepper import EnergyLedger, deformation_update, implicit_gradient_step_nodes
from polyflow.services.stress import TAU12, node_stress

logger = logging.getLogger(__name__)


@dataclass
class Couette1DState:
    y: np.ndarray  # (M+1,)
    u: np.ndarray  # (M+1,)
    particles: np.ndarray  # (M+1, N, 2)
    tau: np.ndarray  # (M+1, 3)
    t: float = 0.0
    step: int = 0

    @property
    def tau21(self) -> np.ndarray:
        return self.tau[:, TAU12]


def uniform_grid(M: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, M + 1)


def mass_1d(y: np.ndarray) -> sparse.csr_matrix:
    h = np.diff(y)
    main = np.zeros(y.size)
    main[:-1] += h / 3.0
    main[1:] += h / 3.0
    return sparse.diags([h / 6.0, main, h / 6.0], [-1, 0, 1], format="csr")


def stiffness_1d(y: np.ndarray) -> sparse.csr_matrix:
    inv = 1.0 / np.diff(y)
    main = np.zeros(y.size)
    main[:-1] += inv
    main[1:] += inv
    return sparse.diags([-inv, main, -inv], [-1, 0, 1], format="csr")


def stress_source(tau21: np.ndarray) -> np.ndarray:
    """(d tau21 / dy, phi_i) for P1 stress: half the jump over each adjacent element."""
    jump = 0.5 * np.diff(tau21)
    load = np.zeros(tau21.size)
    load[:-1] += jump
    load[1:] += jump
    return load


def nodal_shear_rate(y: np.ndarray, u: np.ndarray) -> np.ndarray:
    """du/dy per node: mean of the adjacent element slopes."""
    slope = np.diff(u) / np.diff(y)
    rate = np.empty(y.size)
    rate[0], rate[-1] = slope[0], slope[-1]
    rate[1:-1] = 0.5 * (slope[:-1] + slope[1:])
    return rate


def shear_gradients(rate: np.ndarray) -> np.ndarray:
    grad = np.zeros((rate.size, 2, 2))
    grad[:, 0, 1] = rate
    return grad


class CouetteSolver:
    """Backward Euler for Re du/dt = eta_s u'' + d tau21/dy with u(0)=U, u(1)=0.

    The matrix is factorised once; the stress enters explicitly from the
    previous step.
    """

    def __init__(
        self,
        M: int,
        params: FlowParams,
        pot: Potential,
        policy: BandwidthPolicy,
        micro: MicroStepConfig | None = None,
        U: float = 1.0,
        workers: int | None = None,
    ):
        self.y = uniform_grid(M)
        self.params = params
        self.pot = pot
        self.policy = policy
        self.micro = micro or MicroStepConfig(dt=params.dt, Wi=params.Wi)
        self.U = U
        self.workers = workers
        self.M_mat = mass_1d(self.y)
        A = (params.Re / params.dt) * self.M_mat + params.eta_s * stiffness_1d(self.y)
        A = A.tolil()
        for row in (0, M):
            A.rows[row] = [row]
            A.data[row] = [1.0]
        self._solver = FactorizedSolver(A.tocsr(), symmetric=False, label="couette")

    def initial_state(self, ensemble: np.ndarray) -> Couette1DState:
        """Fluid at rest except the moving plane; the same ensemble at every node."""
        n_nodes = self.y.size
        particles = np.broadcast_to(ensemble, (n_nodes, *ensemble.shape)).copy()
        u = np.zeros(n_nodes)
        u[0] = self.U
        tau = node_stress(particles, self.pot, self.params.eps_p, self.params.Wi)
        return Couette1DState(y=self.y, u=u, particles=particles, tau=tau)

    def macro_step(self, state: Couette1DState) -> np.ndarray:
        p = self.params
        if state.u.shape != self.y.shape:
            raise SizeMismatch("velocity does not match the grid", details={"nodes": self.y.size})
        rhs = (p.Re / p.dt) * (self.M_mat @ state.u) + stress_source(state.tau21)
        rhs[0], rhs[-1] = self.U, 0.0
        return self._solver(rhs)

    def step(self, state: Couette1DState, ledger: EnergyLedger | None = None) -> Couette1DState:
        try:
            u = self.macro_step(state)
            result = implicit_gradient_step_nodes(state.particles, self.pot, self.policy, self.micro, self.workers)
            if ledger is not None:
                ledger.record(state.step + 1, state.t + self.params.dt, result)
            grad_u = shear_gradients(nodal_shear_rate(self.y, u))
            particles = deformation_update(
                result.ensembles_out, grad_u, self.params.dt, self.pot, self.micro.projection_margin
            )
            tau = node_stress(particles, self.pot, self.params.eps_p, self.params.Wi)
        except AppError as e:
            raise e.annotate(step=state.step + 1)
        return replace(state, u=u, particles=particles, tau=tau, t=state.t + self.params.dt, step=state.step + 1)


def couette_step(
    state: Couette1DState, solver: CouetteSolver, ledger: EnergyLedger | None = None
) -> Couette1DState:
    return solver.step(state, ledger)
