"""Triangulations for the isoP2/P1 pair.

The coarse mesh carries the P1 pressure; its uniform midpoint refinement
carries the P1 velocity, the nodal stress and the particle ensembles.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import matplotlib.tri as mtri
import numpy as np
from scipy import sparse

logger = logging.getLogger(__name__)

LID = "lid"
WALLS = ("bottom", "left", "right")
BOUNDARY_TAGS = ("bottom", "right", LID, "left")


@dataclass
class TriMesh:
    nodes: np.ndarray  # (n, 2)
    triangles: np.ndarray  # (m, 3), counter-clockwise
    boundary_edges: dict[str, np.ndarray] = field(default_factory=dict)  # tag -> (k, 2)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """(m, 3, 2): constant gradient of each barycentric basis function per triangle."""
        p = self.nodes[self.triangles]
        x, y = p[..., 0], p[..., 1]
        two_a = 2.0 * self.areas
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        return np.stack([gx, gy], axis=2) / two_a[:, None, None]

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        mass = np.zeros(self.n_nodes)
        np.add.at(mass, self.triangles, np.repeat(self.areas[:, None] / 3.0, 3, axis=1))
        return mass

    @cached_property
    def node_element_average(self) -> sparse.csr_matrix:
        """(n, m) area-weighted averaging of element-constant fields to nodes."""
        rows = self.triangles.ravel()
        cols = np.repeat(np.arange(self.n_triangles), 3)
        vals = np.repeat(self.areas, 3)
        mat = sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_nodes, self.n_triangles))
        weight = np.asarray(mat.sum(axis=1)).ravel()
        return sparse.diags(1.0 / weight) @ mat

    @cached_property
    def first_triangle_of_node(self) -> np.ndarray:
        owner = np.full(self.n_nodes, -1, dtype=int)
        flat = self.triangles.ravel()
        elems = np.repeat(np.arange(self.n_triangles), 3)
        # reversed so the lowest triangle index wins
        owner[flat[::-1]] = elems[::-1]
        return owner

    @cached_property
    def _triangulation(self) -> mtri.Triangulation:
        return mtri.Triangulation(self.nodes[:, 0], self.nodes[:, 1], self.triangles)

    @cached_property
    def _trifinder(self):
        return self._triangulation.get_trifinder()

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        lo = self.nodes.min(axis=0)
        hi = self.nodes.max(axis=0)
        return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])

    def boundary_nodes(self, *tags: str) -> np.ndarray:
        tags = tags or tuple(self.boundary_edges)
        parts = [self.boundary_edges[t].ravel() for t in tags if t in self.boundary_edges]
        if not parts:
            return np.zeros(0, dtype=int)
        return np.unique(np.concatenate(parts))

    def element_gradients(self, values: np.ndarray) -> np.ndarray:
        """Gradient of a P1 field per triangle: (m, 2) for scalars, (m, c, 2) for (n, c) fields."""
        local = values[self.triangles]  # (m, 3) or (m, 3, c)
        if local.ndim == 2:
            return np.einsum("ma,mak->mk", local, self.basis_gradients)
        return np.einsum("mac,mak->mck", local, self.basis_gradients)

    def barycentric(self, tri: np.ndarray, points: np.ndarray) -> np.ndarray:
        p = self.nodes[self.triangles[tri]]
        v0 = p[:, 1] - p[:, 0]
        v1 = p[:, 2] - p[:, 0]
        v2 = points - p[:, 0]
        det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
        l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / det
        l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=1)

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Containing triangle and barycentric weights for each point.

        Points outside the mesh are clamped to its bounding box first; points
        the finder still misses (round-off on edges) fall back to the triangle
        of the nearest node with weights clipped to the simplex.
        """
        xmin, xmax, ymin, ymax = self.bounds
        pts = np.column_stack([np.clip(points[:, 0], xmin, xmax), np.clip(points[:, 1], ymin, ymax)])
        tri = np.asarray(self._trifinder(pts[:, 0], pts[:, 1]), dtype=int)
        missing = np.flatnonzero(tri < 0)
        if missing.size:
            offsets = pts[missing, None, :] - self.nodes[None]
            nearest = np.argmin(np.einsum("pnk,pnk->pn", offsets, offsets), axis=1)
            tri[missing] = self.first_triangle_of_node[nearest]
        weights = self.barycentric(tri, pts)
        if missing.size:
            w = np.clip(weights[missing], 0.0, None)
            weights[missing] = w / w.sum(axis=1, keepdims=True)
        return tri, weights

    def interpolate(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        tri, w = self.locate(points)
        local = values[self.triangles[tri]]
        return np.einsum("pa,pa...->p...", w, local)


@dataclass
class MeshPair:
    coarse: TriMesh
    fine: TriMesh
    parent: np.ndarray  # fine triangle -> coarse triangle
    prolongation: sparse.csr_matrix  # (n_fine, n_coarse): coarse P1 basis at fine nodes
    Lx: float
    Ly: float


def structured_mesh(nx: int, ny: int, Lx: float, Ly: float) -> TriMesh:
    xs = np.linspace(0.0, Lx, nx + 1)
    ys = np.linspace(0.0, Ly, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    # one diagonal direction for every cell
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * nx * ny, 3), dtype=int)
    triangles[0::2] = lower
    triangles[1::2] = upper

    bottom = np.arange(nx)
    top = ny * (nx + 1) + np.arange(nx)
    left = np.arange(ny) * (nx + 1)
    right = left + nx
    boundary = {
        "bottom": np.column_stack([bottom, bottom + 1]),
        "right": np.column_stack([right, right + nx + 1]),
        LID: np.column_stack([top + 1, top]),
        "left": np.column_stack([left + nx + 1, left]),
    }
    return TriMesh(nodes=nodes, triangles=triangles, boundary_edges=boundary)


def refine(coarse: TriMesh) -> tuple[TriMesh, np.ndarray, sparse.csr_matrix]:
    """Uniform midpoint refinement: every triangle splits into four."""
    tris = coarse.triangles
    local_edges = np.stack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=1)  # (m, 3, 2)
    keys = np.sort(local_edges.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1, 3)
    n0 = coarse.n_nodes
    mid = n0 + inverse  # (m, 3): midpoints of edges (01, 12, 20)

    nodes = np.vstack([coarse.nodes, 0.5 * (coarse.nodes[edges[:, 0]] + coarse.nodes[edges[:, 1]])])
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    mab, mbc, mca = mid[:, 0], mid[:, 1], mid[:, 2]
    children = np.stack(
        [
            np.column_stack([a, mab, mca]),
            np.column_stack([mab, b, mbc]),
            np.column_stack([mca, mbc, c]),
            np.column_stack([mab, mbc, mca]),
        ],
        axis=1,
    )
    triangles = children.reshape(-1, 3)
    parent = np.repeat(np.arange(coarse.n_triangles), 4)

    edge_index = {tuple(e): n0 + k for k, e in enumerate(edges.tolist())}
    boundary: dict[str, np.ndarray] = {}
    for tag, bedges in coarse.boundary_edges.items():
        split = []
        for p, q in bedges.tolist():
            m = edge_index[(min(p, q), max(p, q))]
            split.extend([(p, m), (m, q)])
        boundary[tag] = np.array(split, dtype=int).reshape(-1, 2)

    n_fine = nodes.shape[0]
    rows = np.concatenate([np.arange(n0), n0 + np.arange(edges.shape[0]), n0 + np.arange(edges.shape[0])])
    cols = np.concatenate([np.arange(n0), edges[:, 0], edges[:, 1]])
    vals = np.concatenate([np.ones(n0), np.full(2 * edges.shape[0], 0.5)])
    prolongation = sparse.csr_matrix((vals, (rows, cols)), shape=(n_fine, n0))
    return TriMesh(nodes=nodes, triangles=triangles, boundary_edges=boundary), parent, prolongation


def build_mesh_pair(nx: int, ny: int, Lx: float = 1.0, Ly: float = 1.0) -> MeshPair:
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be positive")
    coarse = structured_mesh(nx, ny, Lx, Ly)
    fine, parent, prolongation = refine(coarse)
    logger.debug(
        "mesh pair %dx%d: %d coarse nodes, %d fine nodes, %d fine triangles",
        nx, ny, coarse.n_nodes, fine.n_nodes, fine.n_triangles,
    )
    return MeshPair(coarse=coarse, fine=fine, parent=parent, prolongation=prolongation, Lx=Lx, Ly=Ly)


def export_mesh(mesh: TriMesh, path: Path) -> Path:
    """Plain-text listing: nodes, elements, boundary tag table."""
    path = Path(path)
    with path.open("w") as f:
        f.write(f"# nodes {mesh.n_nodes}\n")
        for k, (x, y) in enumerate(mesh.nodes.tolist()):
            f.write(f"{k} {x!r} {y!r}\n")
        f.write(f"# elements {mesh.n_triangles}\n")
        for k, (a, b, c) in enumerate(mesh.triangles.tolist()):
            f.write(f"{k} {a} {b} {c}\n")
        f.write("# boundary\n")
        for tag, edges in mesh.boundary_edges.items():
            for a, b in edges.tolist():
                f.write(f"{tag} {a} {b}\n")
    return path
