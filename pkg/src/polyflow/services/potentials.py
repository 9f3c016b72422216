"""Spring potentials, the Gaussian mollifier and bandwidth selection.

Every function accepts a single configuration vector of shape ``(2,)`` or any
stack of them ``(..., 2)``; scalar outputs keep the leading shape.
"""

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from polyflow.core.errors import DegenerateEnsemble, FeasibilityViolation
from polyflow.schemas.config import (
    FEASIBILITY_MARGIN,
    BandwidthKind,
    BandwidthPolicy,
    Potential,
    PotentialKind,
)

DIM = 2


class Kernel(BaseModel):
    """Gaussian kernel K_h(q1, q2) = (2 pi h^2)^(-1) exp(-|q1 - q2|^2 / (2 h^2)) in 2D."""

    model_config = ConfigDict(frozen=True)

    h: float = Field(..., gt=0.0)
    dim: int = DIM

    @field_validator("dim")
    @classmethod
    def only_two_dimensions(cls, v: int) -> int:
        if v != DIM:
            raise ValueError("only two-dimensional configuration space is supported")
        return v


def squared_norm(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.einsum("...k,...k->...", q, q)


def fene_feasible(q: np.ndarray, b: float, margin: float = FEASIBILITY_MARGIN) -> np.ndarray:
    """Boolean mask of vectors inside the closed guard ball |q|^2 <= b (1 - margin)."""
    return squared_norm(q) <= b * (1.0 - margin)


def _check_feasible(pot: Potential, q: np.ndarray, margin: float) -> None:
    if not pot.is_fene:
        return
    sq = squared_norm(q)
    bad = sq > pot.b * (1.0 - margin)
    if np.any(bad):
        raise FeasibilityViolation(
            "FENE configuration outside the feasible ball",
            details={"b": pot.b, "max_sq_norm": float(np.max(sq)), "violations": int(np.sum(bad))},
        )


def potential_value(
    pot: Potential, q: np.ndarray, *, checked: bool = True, margin: float = FEASIBILITY_MARGIN
) -> np.ndarray | float:
    """Psi(q): |q|^2/2 (Hookean) or -(b/2) ln(1 - |q|^2/b) (FENE).

    With ``checked=False`` infeasible FENE inputs evaluate to +inf instead of raising,
    which is what the line search of the micro step relies on.
    """
    sq = squared_norm(q)
    if pot.kind == PotentialKind.hookean:
        value = 0.5 * sq
    else:
        if checked:
            _check_feasible(pot, q, margin)
        inside = sq <= pot.b * (1.0 - margin)
        with np.errstate(invalid="ignore", divide="ignore"):
            value = np.where(inside, -0.5 * pot.b * np.log1p(-np.where(inside, sq, 0.0) / pot.b), np.inf)
    return float(value) if np.ndim(value) == 0 else value


def potential_grad(
    pot: Potential, q: np.ndarray, *, checked: bool = True, margin: float = FEASIBILITY_MARGIN
) -> np.ndarray:
    """grad Psi(q): q (Hookean) or q / (1 - |q|^2/b) (FENE)."""
    q = np.asarray(q, dtype=float)
    if pot.kind == PotentialKind.hookean:
        return q.copy()
    if checked:
        _check_feasible(pot, q, margin)
    sq = squared_norm(q)
    inside = sq <= pot.b * (1.0 - margin)
    factor = np.where(inside, 1.0 / (1.0 - np.where(inside, sq, 0.0) / pot.b), np.inf)
    return q * factor[..., None]


def potential_hessian_coefficients(pot: Potential, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(a, c) with Hess Psi(q) = a I + c q q^T per vector; q must be feasible."""
    sq = squared_norm(q)
    if pot.kind == PotentialKind.hookean:
        return np.ones_like(sq), np.zeros_like(sq)
    slack = 1.0 - sq / pot.b
    return 1.0 / slack, 2.0 / (pot.b * slack * slack)


def gaussian(sq_dist: np.ndarray, h: np.ndarray | float) -> np.ndarray:
    """Kernel value from squared distances; ``h`` broadcasts against ``sq_dist``."""
    h = np.asarray(h, dtype=float)
    return np.exp(-sq_dist / (2.0 * h * h)) / (2.0 * math.pi * h * h)


def kernel_value(k: Kernel, q1: np.ndarray, q2: np.ndarray) -> np.ndarray | float:
    diff = np.asarray(q1, dtype=float) - np.asarray(q2, dtype=float)
    value = gaussian(squared_norm(diff), k.h)
    return float(value) if np.ndim(value) == 0 else value


def kernel_grad(k: Kernel, q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Gradient of K_h with respect to its first argument."""
    diff = np.asarray(q1, dtype=float) - np.asarray(q2, dtype=float)
    value = gaussian(squared_norm(diff), k.h)
    return -diff / (k.h * k.h) * np.asarray(value)[..., None]


def pairwise_sq_dists(ensembles: np.ndarray) -> np.ndarray:
    """(..., N, 2) -> (..., N, N) squared distances, summed in index order."""
    diff = ensembles[..., :, None, :] - ensembles[..., None, :, :]
    return np.einsum("...k,...k->...", diff, diff)


def median_pairwise_distance(ensembles: np.ndarray) -> np.ndarray:
    """Lower median of the N(N-1)/2 pairwise distances for each ensemble in the stack."""
    ensembles = np.asarray(ensembles, dtype=float)
    n = ensembles.shape[-2]
    if n < 2:
        raise DegenerateEnsemble("median rule needs at least two particles", details={"N": n})
    iu = np.triu_indices(n, k=1)
    dists = np.sqrt(pairwise_sq_dists(ensembles)[..., iu[0], iu[1]])
    m = dists.shape[-1]
    k = (m - 1) // 2
    return np.partition(dists, k, axis=-1)[..., k]


def select_bandwidths(policy: BandwidthPolicy, ensembles: np.ndarray) -> np.ndarray:
    """Bandwidth for every ensemble in a (..., N, 2) stack."""
    ensembles = np.asarray(ensembles, dtype=float)
    lead = ensembles.shape[:-2]
    if policy.kind == BandwidthKind.fixed:
        return np.full(lead, float(policy.h))
    med = median_pairwise_distance(ensembles)
    if np.any(med <= 0.0):
        raise DegenerateEnsemble(
            "all particles coincide; the median rule gives a zero bandwidth",
            details={"degenerate_ensembles": int(np.sum(med <= 0.0))},
        )
    n = ensembles.shape[-2]
    return med * med / math.log(n)


def select_bandwidth(policy: BandwidthPolicy, ensemble: np.ndarray) -> float:
    return float(select_bandwidths(policy, np.asarray(ensemble, dtype=float)))
