"""Post-processing of run outputs: densities, loops and vortex metrics."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from polyflow.core.errors import DegenerateLoop
from polyflow.schemas.series import TimeSeries
from polyflow.services.fem.mesh import TriMesh

logger = logging.getLogger(__name__)

MODE_FRACTION = 0.2
RETURN_TOLERANCE = 0.05
WIDTH_SAMPLES = 256


# ----------------------------------------------------------------------
# densities
# ----------------------------------------------------------------------


def default_kde_bandwidth(ensemble: np.ndarray) -> float:
    """N^(-1/6) times the pooled per-axis standard deviation."""
    q = np.asarray(ensemble, dtype=float)
    std = float(np.sqrt(np.mean(np.var(q, axis=0))))
    return q.shape[0] ** (-1.0 / 6.0) * std


def kde_density(
    ensemble: np.ndarray, xs: np.ndarray, ys: np.ndarray, h_kde: float | None = None
) -> np.ndarray:
    """Gaussian KDE on the lattice xs x ys, indexed [ix, iy], summing to one over the cells."""
    q = np.asarray(ensemble, dtype=float)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    dx = float(xs[1] - xs[0])
    dy = float(ys[1] - ys[0])
    h = default_kde_bandwidth(q) if h_kde is None else float(h_kde)
    if h <= 0.0:
        h = max(dx, dy)
    wx = np.exp(-0.5 * ((xs[:, None] - q[None, :, 0]) / h) ** 2)  # (nx, N)
    wy = np.exp(-0.5 * ((ys[:, None] - q[None, :, 1]) / h) ** 2)  # (ny, N)
    density = np.einsum("in,jn->ij", wx, wy)
    total = float(density.sum()) * dx * dy
    return density / total


def detect_modes(
    density: np.ndarray, xs: np.ndarray, ys: np.ndarray, min_fraction: float = MODE_FRACTION
) -> np.ndarray:
    """Lattice local maxima above ``min_fraction`` of the global maximum, strongest first; (k, 2)."""
    peak = ndimage.maximum_filter(density, size=3, mode="nearest") == density
    strong = density >= min_fraction * density.max()
    ix, iy = np.nonzero(peak & strong)
    order = np.argsort(-density[ix, iy], kind="stable")
    return np.column_stack([np.asarray(xs)[ix[order]], np.asarray(ys)[iy[order]]])


def is_bimodal(modes: np.ndarray, separation: float) -> bool:
    if modes.shape[0] < 2:
        return False
    gaps = np.linalg.norm(modes[:, None, :] - modes[None, :, :], axis=-1)
    return bool(np.max(gaps) > separation)


def feasible_lattice(b: float, cells: int = 121) -> tuple[np.ndarray, np.ndarray]:
    """Square lattice covering the FENE ball of radius sqrt(b)."""
    r = np.sqrt(b)
    axis = np.linspace(-r, r, cells)
    return axis, axis.copy()


# ----------------------------------------------------------------------
# hysteresis
# ----------------------------------------------------------------------


@dataclass
class LoopMetrics:
    area: float  # signed; negative when the loop runs clockwise
    width: float
    peak_index: int

    @property
    def abs_area(self) -> float:
        return abs(self.area)


def shoelace_area(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _returns_to_start(x: np.ndarray, peak: int) -> bool:
    x0 = x[0]
    tail = x[peak:]
    if (tail.min() - x0) * (tail.max() - x0) <= 0.0:
        return True
    scale = abs(x0) if x0 != 0.0 else float(np.max(np.abs(x)))
    return bool(np.min(np.abs(tail - x0)) <= RETURN_TOLERANCE * scale)


def _branch(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(x, kind="stable")
    return x[order], y[order]


def hysteresis_loop(
    series: TimeSeries, x_name: str = "mean_sq_ext_over_b", y_name: str = "normal_stress_diff"
) -> LoopMetrics:
    """Signed shoelace area of the ordered trajectory and the widest vertical gap between branches.

    The loading branch runs up to the largest extension, the relaxation
    branch from there on.
    """
    x = series.column(x_name)
    y = series.column(y_name)
    if x.size < 3:
        raise DegenerateLoop("loop needs at least three samples", details={"samples": int(x.size)})
    peak = int(np.argmax(x))
    if peak == x.size - 1 or not _returns_to_start(x, peak):
        raise DegenerateLoop(
            "trajectory never returns near its starting extension",
            details={"x0": float(x[0]), "x_end": float(x[-1]), "tolerance": RETURN_TOLERANCE},
        )
    xl, yl = _branch(x[: peak + 1], y[: peak + 1])
    xr, yr = _branch(x[peak:], y[peak:])
    lo, hi = max(xl[0], xr[0]), min(xl[-1], xr[-1])
    width = 0.0
    if hi > lo:
        grid = np.linspace(lo, hi, WIDTH_SAMPLES)
        width = float(np.max(np.abs(np.interp(grid, xl, yl) - np.interp(grid, xr, yr))))
    return LoopMetrics(area=shoelace_area(x, y), width=width, peak_index=peak)


# ----------------------------------------------------------------------
# cavity
# ----------------------------------------------------------------------


@dataclass
class VortexMetrics:
    x: float
    y: float
    strength: float
    asymmetry: float


def mirror_map(mesh: TriMesh, Lx: float) -> np.ndarray:
    """Index of the node at (Lx - x, y) for every node."""
    mirrored = mesh.nodes.copy()
    mirrored[:, 0] = Lx - mirrored[:, 0]
    dist, idx = cKDTree(mesh.nodes).query(mirrored)
    if np.max(dist) > 1e-9 * max(Lx, 1.0):
        logger.warning("mesh is not mirror symmetric (max offset %.3e)", float(np.max(dist)))
    return idx


def vortex_center(psi: np.ndarray, mesh: TriMesh, k: int) -> tuple[float, float]:
    """Minimum of a least-squares quadratic fitted to psi on node k and its neighbours.

    Falls back to node k when the fit is not a minimum inside that patch.
    """
    x0, y0 = (float(v) for v in mesh.nodes[k])
    patch = np.unique(mesh.triangles[np.any(mesh.triangles == k, axis=1)])
    if patch.size < 6:
        return x0, y0
    dx, dy = (mesh.nodes[patch] - mesh.nodes[k]).T
    design = np.column_stack([np.ones_like(dx), dx, dy, dx * dx, dx * dy, dy * dy])
    coef, _, rank, _ = np.linalg.lstsq(design, psi[patch], rcond=None)
    _, b, c, d, e, f = coef
    hess = np.array([[2.0 * d, e], [e, 2.0 * f]])
    if rank < 6 or d <= 0.0 or np.linalg.det(hess) <= 0.0:
        return x0, y0
    sx, sy = np.linalg.solve(hess, [-b, -c])
    if not (dx.min() <= sx <= dx.max() and dy.min() <= sy <= dy.max()):
        return x0, y0
    return x0 + float(sx), y0 + float(sy)


def vortex_metrics(psi: np.ndarray, mesh: TriMesh, Lx: float, mirror: np.ndarray | None = None) -> VortexMetrics:
    k = int(np.argmin(psi))
    scale = float(np.max(np.abs(psi)))
    mirror = mirror_map(mesh, Lx) if mirror is None else mirror
    asym = float(np.max(np.abs(psi - psi[mirror]))) / scale if scale > 0.0 else 0.0
    x, y = vortex_center(psi, mesh, k) if scale > 0.0 else (float(mesh.nodes[k, 0]), float(mesh.nodes[k, 1]))
    return VortexMetrics(x=x, y=y, strength=abs(float(psi[k])), asymmetry=asym)


def midline_profile(u: np.ndarray, mesh: TriMesh, Lx: float) -> tuple[np.ndarray, np.ndarray]:
    """(y, u) along x = Lx/2, sorted by y."""
    on_line = np.flatnonzero(np.abs(mesh.nodes[:, 0] - 0.5 * Lx) <= 1e-12 * max(Lx, 1.0))
    if on_line.size == 0:
        ys = np.unique(mesh.nodes[:, 1])
        pts = np.column_stack([np.full(ys.size, 0.5 * Lx), ys])
        return ys, mesh.interpolate(u[:, 0], pts)
    order = np.argsort(mesh.nodes[on_line, 1], kind="stable")
    nodes = on_line[order]
    return mesh.nodes[nodes, 1], u[nodes, 0]
