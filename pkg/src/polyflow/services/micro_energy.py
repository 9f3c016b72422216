"""Kernel-regularised discrete free energy of particle ensembles.

An ensemble is an ``(N, 2)`` array of equally weighted configuration vectors;
stacks of ensembles ``(B, N, 2)`` (one per mesh node) are handled in one call,
with one bandwidth per ensemble. The nondimensional per-node energy is

    F(q) = (1/N) sum_i [ ln((1/N) sum_j K_h(q_i - q_j)) + Psi(q_i) ]

and the self term j = i is kept inside the logarithm.
"""

import math

import numpy as np

from polyflow.core.errors import FeasibilityViolation, SizeMismatch
from polyflow.schemas.config import FEASIBILITY_MARGIN, Potential
from polyflow.services.potentials import (
    Kernel,
    fene_feasible,
    gaussian,
    pairwise_sq_dists,
    potential_grad,
    potential_value,
)


def validate_ensemble(q: np.ndarray, pot: Potential, margin: float = FEASIBILITY_MARGIN) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim < 2 or q.shape[-1] != 2 or q.shape[-2] < 1:
        raise SizeMismatch("ensemble must have shape (..., N, 2) with N >= 1", details={"shape": list(q.shape)})
    if not np.all(np.isfinite(q)):
        raise FeasibilityViolation("ensemble contains non-finite particles")
    if pot.is_fene and not np.all(fene_feasible(q, pot.b, margin)):
        raise FeasibilityViolation(
            "ensemble violates the FENE feasibility constraint",
            details={"b": pot.b, "max_sq_norm": float(np.max(np.einsum("...k,...k->...", q, q)))},
        )
    return q


def _bandwidth_column(h: np.ndarray | float, lead: tuple[int, ...]) -> np.ndarray:
    return np.broadcast_to(np.asarray(h, dtype=float), lead)[..., None, None]


def kernel_matrix(q: np.ndarray, h: np.ndarray | float) -> np.ndarray:
    """K_ij = K_h(q_i, q_j) for each ensemble in the stack."""
    return gaussian(pairwise_sq_dists(q), _bandwidth_column(h, q.shape[:-2]))


def free_energy_batch(q: np.ndarray, pot: Potential, h: np.ndarray | float) -> np.ndarray:
    """Free energy of each ensemble; infeasible FENE ensembles evaluate to +inf."""
    n = q.shape[-2]
    row_sums = kernel_matrix(q, h).sum(axis=-1)
    psi = potential_value(pot, q, checked=False)
    return np.mean(np.log(row_sums / n) + psi, axis=-1)


def free_energy_and_gradient_batch(
    q: np.ndarray, pot: Potential, h: np.ndarray | float
) -> tuple[np.ndarray, np.ndarray]:
    """Energy (B,) and its literal gradient (B, N, 2), including the 1/N factor."""
    n = q.shape[-2]
    hh = _bandwidth_column(h, q.shape[:-2])
    kmat = gaussian(pairwise_sq_dists(q), hh)
    row_sums = kmat.sum(axis=-1)
    psi = potential_value(pot, q, checked=False)
    energy = np.mean(np.log(row_sums / n) + psi, axis=-1)

    inv = 1.0 / row_sums
    weights = kmat * (inv[..., :, None] + inv[..., None, :])
    # sum_j (q_i - q_j) W_ij, accumulated in index order
    pull = q * weights.sum(axis=-1)[..., None] - np.einsum("...ij,...jk->...ik", weights, q)
    entropic = -pull / (hh * hh)
    grad = (entropic + potential_grad(pot, q, checked=False)) / n
    return energy, grad


def discrete_free_energy(ens: np.ndarray, pot: Potential, k: Kernel) -> float:
    q = validate_ensemble(ens, pot)
    return float(free_energy_batch(q, pot, k.h))


def free_energy_gradient(ens: np.ndarray, pot: Potential, k: Kernel) -> np.ndarray:
    q = validate_ensemble(ens, pot)
    return free_energy_and_gradient_batch(q, pot, k.h)[1]


def energy_lower_bound(n: int, h: float) -> float:
    """ln(1 / (N 2 pi h^2)): the kernel sum is at least the self term and Psi >= 0."""
    return math.log(1.0 / (n * 2.0 * math.pi * h * h))


def proximal_term(q: np.ndarray, q_prev: np.ndarray, dt: float) -> np.ndarray:
    diff = q - q_prev
    return np.mean(np.einsum("...k,...k->...", diff, diff), axis=-1) / (2.0 * dt)


def step_objective(
    ens_trial: np.ndarray, ens_prev: np.ndarray, pot: Potential, k: Kernel, dt: float
) -> float:
    """J_n = (1/N) sum_i |q_i - q_i^n|^2 / (2 dt) + F(q)."""
    trial = np.asarray(ens_trial, dtype=float)
    prev = np.asarray(ens_prev, dtype=float)
    if trial.shape != prev.shape:
        raise SizeMismatch(
            "trial and previous ensembles differ in size",
            details={"trial": list(trial.shape), "prev": list(prev.shape)},
        )
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    validate_ensemble(trial, pot)
    return float(proximal_term(trial, prev, dt) + free_energy_batch(trial, pot, k.h))
