"""Kramers stress from particle ensembles and its P1 nodal representation.

Stress tensors are stored once per node as the components (tau11, tau12, tau22).
"""

from dataclasses import dataclass

import numpy as np

from polyflow.core.errors import SizeMismatch
from polyflow.schemas.config import Potential
from polyflow.services.fem.mesh import MeshPair
from polyflow.services.micro_energy import validate_ensemble
from polyflow.services.potentials import potential_grad

TAU11, TAU12, TAU22 = 0, 1, 2


def node_stress(ens: np.ndarray, pot: Potential, eps_p: float, Wi: float) -> np.ndarray:
    """(eps_p / Wi) (1/N) sum_i grad Psi(q_i) (x) q_i for one ensemble or a stack."""
    q = validate_ensemble(ens, pot)
    g = potential_grad(pot, q)
    scale = eps_p / Wi
    t11 = np.mean(g[..., 0] * q[..., 0], axis=-1)
    t12 = np.mean(g[..., 0] * q[..., 1], axis=-1)
    t22 = np.mean(g[..., 1] * q[..., 1], axis=-1)
    return scale * np.stack([t11, t12, t22], axis=-1)


def as_matrix(components: np.ndarray) -> np.ndarray:
    c = np.asarray(components, dtype=float)
    return np.stack(
        [np.stack([c[..., TAU11], c[..., TAU12]], axis=-1), np.stack([c[..., TAU12], c[..., TAU22]], axis=-1)],
        axis=-2,
    )


def normal_stress_difference(components: np.ndarray) -> np.ndarray:
    return components[..., TAU11] - components[..., TAU22]


@dataclass
class StressField:
    """P1 stress on the fine mesh; nodal values are the interpolation coefficients."""

    mesh: MeshPair
    values: np.ndarray  # (n_fine, 3)

    def at_nodes(self) -> np.ndarray:
        return self.values

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.mesh.fine.interpolate(self.values, np.atleast_2d(points))

    def divergence_per_element(self) -> np.ndarray:
        """(m, 2): div tau on each fine triangle (constant for P1 stress)."""
        grads = self.mesh.fine.element_gradients(self.values)  # (m, 3, 2)
        return np.column_stack(
            [grads[:, TAU11, 0] + grads[:, TAU12, 1], grads[:, TAU12, 0] + grads[:, TAU22, 1]]
        )

    @classmethod
    def zeros(cls, mesh: MeshPair) -> "StressField":
        return cls(mesh=mesh, values=np.zeros((mesh.fine.n_nodes, 3)))


def project_stress(nodal_values: np.ndarray, mesh: MeshPair) -> StressField:
    values = np.asarray(nodal_values, dtype=float)
    if values.shape != (mesh.fine.n_nodes, 3):
        raise SizeMismatch(
            "one stress tensor per fine-mesh node is required",
            details={"expected": [mesh.fine.n_nodes, 3], "got": list(values.shape)},
        )
    return StressField(mesh=mesh, values=values.copy())
