"""Incremental pressure-correction solver on the isoP2/P1 pair.

Velocity lives on the fine mesh, pressure on the coarse mesh. One step is a
semi-implicit momentum solve with lagged pressure and explicit polymer stress,
followed by a projection onto the discretely divergence-free fields.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from polyflow.core.errors import SizeMismatch
from polyflow.schemas.config import FlowParams, ProjectionKind
from polyflow.services.fem.assembly import (
    convection_matrix,
    derivative_load_matrices,
    divergence_operator,
    element_load,
    mass_matrix,
    stiffness_matrix,
)
from polyflow.services.fem.linalg import FactorizedSolver, solve
from polyflow.services.fem.mesh import LID, WALLS, MeshPair
from polyflow.services.stress import StressField

logger = logging.getLogger(__name__)


@dataclass
class MacroState:
    u: np.ndarray  # (n_fine, 2)
    p: np.ndarray  # (n_coarse,), zero lumped-mass mean
    tau: StressField
    t: float = 0.0
    step: int = 0


@dataclass
class DirichletData:
    """Prescribed velocity at fine boundary nodes."""

    nodes: np.ndarray
    values: np.ndarray  # (k, 2)

    def apply(self, u: np.ndarray) -> np.ndarray:
        out = np.array(u, dtype=float, copy=True)
        out[self.nodes] = self.values
        return out


def lid_profile(x: np.ndarray, Lx: float, U: float = 1.0) -> np.ndarray:
    s = np.asarray(x, dtype=float) / Lx
    return 16.0 * U * s**2 * (1.0 - s) ** 2


def no_slip(mesh: MeshPair) -> DirichletData:
    nodes = mesh.fine.boundary_nodes()
    return DirichletData(nodes=nodes, values=np.zeros((nodes.size, 2)))


def cavity_dirichlet(mesh: MeshPair, U: float = 1.0) -> DirichletData:
    """No slip on the walls, the smooth lid profile on top; lid corners are zero either way."""
    fine = mesh.fine
    nodes = fine.boundary_nodes()
    values = np.zeros((nodes.size, 2))
    on_lid = np.isin(nodes, fine.boundary_nodes(LID)) & ~np.isin(nodes, fine.boundary_nodes(*WALLS))
    values[on_lid, 0] = lid_profile(fine.nodes[nodes[on_lid], 0], mesh.Lx, U)
    return DirichletData(nodes=nodes, values=values)


def dirichlet_from_function(mesh: MeshPair, fn: Callable[[np.ndarray], np.ndarray]) -> DirichletData:
    nodes = mesh.fine.boundary_nodes()
    return DirichletData(nodes=nodes, values=np.asarray(fn(mesh.fine.nodes[nodes]), dtype=float))


def initial_state(mesh: MeshPair, bc: DirichletData) -> MacroState:
    u = bc.apply(np.zeros((mesh.fine.n_nodes, 2)))
    return MacroState(u=u, p=np.zeros(mesh.coarse.n_nodes), tau=StressField.zeros(mesh))


@dataclass
class FlowSolver:
    """Matrices and factorisations for one mesh pair and one parameter set.

    Everything that does not depend on u^n is built once; the momentum matrix
    is rebuilt every step because the convection term is linearised about u^n.
    """

    mesh: MeshPair
    params: FlowParams
    bc: DirichletData
    projection: ProjectionKind = ProjectionKind.consistent
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        fine = self.mesh.fine
        self.M = mass_matrix(fine)
        self.K = stiffness_matrix(fine)
        self.Dx, self.Dy = derivative_load_matrices(fine)
        self.Bx, self.By = divergence_operator(self.mesh)
        interior = np.ones(fine.n_nodes, dtype=bool)
        interior[self.bc.nodes] = False
        self.interior = interior
        self._keep_rows = sparse.diags(interior.astype(float))
        self._fix_rows = sparse.diags((~interior).astype(float))
        self._inv_lumped = 1.0 / fine.lumped_mass
        self._pressure = self._pressure_solver()
        logger.debug(
            "flow solver ready: %d velocity nodes, %d pressure nodes, projection=%s",
            fine.n_nodes, self.mesh.coarse.n_nodes, self.projection.value,
        )

    # ------------------------------------------------------------------
    # Step 1.1: momentum
    # ------------------------------------------------------------------

    def momentum_matrix(self, u_n: np.ndarray) -> sparse.csr_matrix:
        p = self.params
        A = (p.Re / p.dt) * self.M + p.Re * convection_matrix(self.mesh.fine, u_n) + p.eta_s * self.K
        return (self._keep_rows @ A + self._fix_rows).tocsr()

    def pressure_load(self, p: np.ndarray) -> np.ndarray:
        """-(grad p, v) for each velocity component, shape (n_fine, 2)."""
        grad_c = self.mesh.coarse.element_gradients(p)  # (m_coarse, 2)
        per_fine = grad_c[self.mesh.parent]
        fine = self.mesh.fine
        return -np.column_stack([element_load(fine, per_fine[:, 0]), element_load(fine, per_fine[:, 1])])

    def stress_load(self, tau: StressField) -> np.ndarray:
        """(div tau, v) for each velocity component, shape (n_fine, 2)."""
        div = tau.divergence_per_element()
        fine = self.mesh.fine
        return np.column_stack([element_load(fine, div[:, 0]), element_load(fine, div[:, 1])])

    def momentum_step(self, state: MacroState, body_force: np.ndarray | None = None) -> np.ndarray:
        """Intermediate velocity u~; ``body_force`` is an optional nodal P1 force (n_fine, 2)."""
        p = self.params
        u_n = self._check_velocity(state.u)
        rhs = (p.Re / p.dt) * (self.M @ u_n) + self.pressure_load(state.p) + self.stress_load(state.tau)
        if body_force is not None:
            rhs = rhs + self.M @ self._check_velocity(body_force)
        rhs[self.bc.nodes] = self.bc.values
        solver = FactorizedSolver(self.momentum_matrix(u_n), symmetric=False, label="momentum")
        return np.column_stack([solver(rhs[:, 0]), solver(rhs[:, 1])])

    # ------------------------------------------------------------------
    # Step 1.2: projection
    # ------------------------------------------------------------------

    def _pressure_solver(self) -> FactorizedSolver:
        coarse = self.mesh.coarse
        if self.projection == ProjectionKind.laplacian:
            S = stiffness_matrix(coarse)
        else:
            Bx = self.Bx[:, self.interior]
            By = self.By[:, self.interior]
            W = sparse.diags(self._inv_lumped[self.interior])
            S = Bx @ W @ Bx.T + By @ W @ By.T
        # bordered with the lumped mass to pin the zero-mean gauge
        m = coarse.lumped_mass[:, None]
        bordered = sparse.bmat([[S, sparse.csr_matrix(m)], [sparse.csr_matrix(m.T), None]], format="csc")
        return FactorizedSolver(bordered, symmetric=False, label="pressure")

    def divergence_functional(self, u: np.ndarray) -> np.ndarray:
        """(div u, psi_c) for every coarse basis function."""
        return self.Bx @ u[:, 0] + self.By @ u[:, 1]

    def pressure_correction(self, u_tilde: np.ndarray, state: MacroState) -> tuple[np.ndarray, np.ndarray]:
        u_tilde = self._check_velocity(u_tilde)
        rhs = -self.divergence_functional(u_tilde) / self.params.dt
        rhs = rhs - rhs.mean()
        phi = self._pressure(np.append(rhs, 0.0))[:-1]
        u = u_tilde.copy()
        dt = self.params.dt
        # lumped-mass nodal gradient of the coarse increment: -(grad phi, v) = B^T phi
        u[self.interior, 0] += dt * self._inv_lumped[self.interior] * (self.Bx.T @ phi)[self.interior]
        u[self.interior, 1] += dt * self._inv_lumped[self.interior] * (self.By.T @ phi)[self.interior]
        return u, state.p + phi

    # ------------------------------------------------------------------

    def step(self, state: MacroState, body_force: np.ndarray | None = None) -> MacroState:
        u_tilde = self.momentum_step(state, body_force)
        u, p = self.pressure_correction(u_tilde, state)
        return replace(state, u=u, p=p, t=state.t + self.params.dt, step=state.step + 1)

    def kinetic_energy(self, u: np.ndarray) -> float:
        return 0.5 * self.params.Re * float(u[:, 0] @ (self.M @ u[:, 0]) + u[:, 1] @ (self.M @ u[:, 1]))

    def streamfunction(self, u: np.ndarray) -> np.ndarray:
        return streamfunction(u, self.mesh)

    def _check_velocity(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.mesh.fine.n_nodes, 2):
            raise SizeMismatch(
                "velocity must have one vector per fine-mesh node",
                details={"expected": [self.mesh.fine.n_nodes, 2], "got": list(u.shape)},
            )
        return u


def momentum_step(
    state: MacroState, mesh: MeshPair, params: FlowParams, bc: DirichletData, body_force: np.ndarray | None = None
) -> np.ndarray:
    return FlowSolver(mesh, params, bc).momentum_step(state, body_force)


def pressure_correction(
    u_tilde: np.ndarray,
    state: MacroState,
    mesh: MeshPair,
    params: FlowParams,
    bc: DirichletData,
    projection: ProjectionKind = ProjectionKind.consistent,
) -> tuple[np.ndarray, np.ndarray]:
    return FlowSolver(mesh, params, bc, projection).pressure_correction(u_tilde, state)


def pressure_mean(p: np.ndarray, mesh: MeshPair) -> float:
    return float(mesh.coarse.lumped_mass @ p)


def streamfunction(u: np.ndarray, mesh: MeshPair) -> np.ndarray:
    """P1 solve of -lap psi = omega with psi = 0 on the boundary; omega = dv/dx - du/dy weakly."""
    fine = mesh.fine
    Dx, Dy = derivative_load_matrices(fine)
    load = Dx @ u[:, 1] - Dy @ u[:, 0]
    interior = np.ones(fine.n_nodes, dtype=bool)
    interior[fine.boundary_nodes()] = False
    K = stiffness_matrix(fine)[interior][:, interior]
    psi = np.zeros(fine.n_nodes)
    psi[interior] = solve(K, load[interior], symmetric=True, label="streamfunction")
    return psi
