"""Closed Oldroyd-B start-up Couette flow, used as the oracle for the Hookean runs.

Velocity sits on the nodes of a uniform grid of [0, 1] and the shear stress on
the cell midpoints. The linear system is advanced with Crank-Nicolson after
four half-size implicit Euler steps, which damp the impulsive start of the
moving plane. Both stages share one factorised matrix.
"""

import logging

import numpy as np
from scipy import sparse

from polyflow.schemas.series import TimeSeries
from polyflow.services.fem.linalg import FactorizedSolver
from polyflow.services.scenarios.defaults import COUETTE_PROBES
from polyflow.services.scenarios.outputs import probe_column

logger = logging.getLogger(__name__)

STARTUP_HALF_STEPS = 4
FOURIER_TERMS = 4000


def _operator(M: int, Re: float, Wi: float, eta_s: float, eps_p: float, U: float) -> tuple[sparse.csr_matrix, np.ndarray]:
    """dx/dt = L x + g for x = [u_1 .. u_{M-1}, tau_0 .. tau_{M-1}]."""
    h = 1.0 / M
    nu = M - 1
    # velocity rows
    lap = sparse.diags([np.ones(nu - 1), -2.0 * np.ones(nu), np.ones(nu - 1)], [-1, 0, 1]) * (eta_s / (Re * h * h))
    div = sparse.diags([-np.ones(nu), np.ones(nu)], [0, 1], shape=(nu, M)) * (1.0 / (Re * h))
    # stress rows: (u_{j+1} - u_j) / h with u_0 = U, u_M = 0
    grad = sparse.diags([-np.ones(nu), np.ones(nu)], [-1, 0], shape=(M, nu)) * (eps_p / (Wi * h))
    relax = sparse.identity(M) * (-1.0 / Wi)
    L = sparse.bmat([[lap, div], [grad, relax]], format="csr")
    g = np.zeros(nu + M)
    g[0] = eta_s * U / (Re * h * h)
    g[nu] = -eps_p * U / (Wi * h)
    return L, g


def oldroyd_b_reference(
    Re: float,
    Wi: float,
    eta_s: float,
    eps_p: float,
    M_fine: int = 400,
    dt_fine: float = 1e-4,
    t_end: float = 1.0,
    record_dt: float = 1e-2,
    probes: tuple[float, ...] = COUETTE_PROBES,
    U: float = 1.0,
) -> TimeSeries:
    """u and tau12 at the probes every ``record_dt``, starting from rest at t=0."""
    if min(Re, Wi, dt_fine, t_end) <= 0.0 or eta_s < 0.0 or eps_p < 0.0 or M_fine < 2:
        raise ValueError("Oldroyd-B reference needs positive parameters")
    L, g = _operator(M_fine, Re, Wi, eta_s, eps_p, U)
    half = 0.5 * dt_fine
    eye = sparse.identity(L.shape[0], format="csr")
    lhs = FactorizedSolver(eye - half * L, label="oldroyd-b")
    explicit = (eye + half * L).tocsr()

    n_steps = int(round(t_end / dt_fine))
    every = max(1, int(round(record_dt / dt_fine)))
    y_nodes = np.linspace(0.0, 1.0, M_fine + 1)
    y_mid = 0.5 * (y_nodes[:-1] + y_nodes[1:])
    names = [probe_column("u", y) for y in probes] + [probe_column("tau12", y) for y in probes]

    def row(t: float, x: np.ndarray) -> tuple[float, ...]:
        u = np.concatenate([[U], x[: M_fine - 1], [0.0]])
        tau = x[M_fine - 1 :]
        return (t, *np.interp(probes, y_nodes, u), *np.interp(probes, y_mid, tau))

    x = np.zeros(L.shape[0])
    rows = [row(0.0, x)]
    # the first step is covered by the half-size implicit steps
    startup = min(STARTUP_HALF_STEPS // 2, n_steps)
    for k in range(1, n_steps + 1):
        if k <= startup:
            for _ in range(2):
                x = lhs(x + half * g)
        else:
            x = lhs(explicit @ x + dt_fine * g)
        if k % every == 0:
            rows.append(row(k * dt_fine, x))
    logger.debug("oldroyd-b reference: %d steps on %d cells", n_steps, M_fine)
    return TimeSeries.from_rows(names, rows)


def newtonian_couette_series(y: np.ndarray, t: float, Re: float, eta_s: float, n_terms: int = FOURIER_TERMS) -> np.ndarray:
    """Start-up Couette flow of a Newtonian fluid with the plane y=0 moving at unit speed."""
    y = np.asarray(y, dtype=float)
    if t <= 0.0:
        return np.where(y == 0.0, 1.0, 0.0)
    n = np.arange(1, n_terms + 1)[:, None]
    decay = np.exp(-(n * np.pi) ** 2 * eta_s * t / Re)
    return (1.0 - y) - np.sum(2.0 / (n * np.pi) * np.sin(n * np.pi * y[None]) * decay, axis=0)


def steady_shear_stress(eps_p: float, U: float = 1.0) -> float:
    """tau12 of steady Couette flow: eps_p times the uniform shear rate -U."""
    return -eps_p * U
