"""Vectorised P1 assembly on triangles."""

import numpy as np
from scipy import sparse

from polyflow.services.fem.mesh import MeshPair, TriMesh

_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble(mesh: TriMesh, local: np.ndarray) -> sparse.csr_matrix:
    """Scatter (m, 3, 3) element matrices into an (n, n) sparse matrix."""
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    return sparse.csr_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))


def local_mass(mesh: TriMesh) -> np.ndarray:
    return mesh.areas[:, None, None] * _LOCAL_MASS[None]


def mass_matrix(mesh: TriMesh) -> sparse.csr_matrix:
    return assemble(mesh, local_mass(mesh))


def stiffness_matrix(mesh: TriMesh) -> sparse.csr_matrix:
    g = mesh.basis_gradients
    return assemble(mesh, mesh.areas[:, None, None] * np.einsum("mik,mjk->mij", g, g))


def convection_matrix(mesh: TriMesh, w: np.ndarray) -> sparse.csr_matrix:
    """C_ij = (w . grad phi_j, phi_i) with w a P1 vector field (n, 2)."""
    wl = w[mesh.triangles]  # (m, 3, 2)
    w_dot_grad = np.einsum("mkd,mjd->mkj", wl, mesh.basis_gradients)  # w_k . grad phi_j
    return assemble(mesh, np.einsum("mik,mkj->mij", local_mass(mesh), w_dot_grad))


def _incidence(mesh: TriMesh, values: np.ndarray) -> sparse.csr_matrix:
    """(m, n) matrix with ``values[e, a]`` at (e, triangles[e, a])."""
    rows = np.repeat(np.arange(mesh.n_triangles), 3)
    return sparse.csr_matrix((values.ravel(), (rows, mesh.triangles.ravel())), shape=(mesh.n_triangles, mesh.n_nodes))


def derivative_load_matrices(mesh: TriMesh) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Dx, Dy with (Dx f)_i = (d f / dx, phi_i) for P1 fields f."""
    weight = _incidence(mesh, np.repeat(mesh.areas[:, None] / 3.0, 3, axis=1))
    gx = _incidence(mesh, mesh.basis_gradients[..., 0])
    gy = _incidence(mesh, mesh.basis_gradients[..., 1])
    return (weight.T @ gx).tocsr(), (weight.T @ gy).tocsr()


def element_load(mesh: TriMesh, values: np.ndarray) -> np.ndarray:
    """(f, phi_i) for an element-constant f."""
    load = np.zeros(mesh.n_nodes)
    np.add.at(load, mesh.triangles, np.repeat(mesh.areas[:, None] * values[:, None] / 3.0, 3, axis=1))
    return load


def divergence_operator(pair: MeshPair) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Bx, By (n_coarse, n_fine): (div u, psi_c) = Bx u_x + By u_y for coarse P1 test functions."""
    dx, dy = derivative_load_matrices(pair.fine)
    pt = pair.prolongation.T
    return (pt @ dx).tocsr(), (pt @ dy).tocsr()
