"""One micro time step per mesh node.

The implicit gradient step minimises the proximal objective

    Phi(q) = (Wi/dt) (1/N) sum_i |q_i - q_i^n|^2 + F(q)

whose stationarity condition is the implicit Euler step
q^{n+1} = q^n - dt/(2 Wi) [kernel quotients + grad Psi](q^{n+1}).
The effective proximal step is therefore dt_eff = dt / (2 Wi), and the
energy-stability residual uses that same coefficient.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from polyflow.core.config import settings
from polyflow.core.errors import FeasibilityViolation, OptimizerDivergence, RejectionOverflow
from polyflow.schemas.config import BandwidthPolicy, MicroStepConfig, Potential
from polyflow.services.micro_energy import (
    free_energy_and_gradient_batch,
    free_energy_batch,
    proximal_term,
    validate_ensemble,
)
from polyflow.services.potentials import (
    fene_feasible,
    potential_grad,
    potential_hessian_coefficients,
    select_bandwidths,
    squared_norm,
)

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
BB_CURVATURE_EPS = 1e-300
STEP_MIN = 1e-12
STEP_MAX = 1e3
STALL_TOL = 4.0 * np.finfo(float).eps
MAX_RESAMPLES = 1000


@dataclass
class StepResult:
    ensemble_out: np.ndarray
    energy_before: float
    energy_after: float
    optimizer_iters: int
    stability_ok: bool
    stability_residual: float
    grad_norm: float
    bandwidth_used: float
    hit_max_iters: bool = False


@dataclass
class BatchStepResult:
    """Per-node outcome of a batched implicit step; arrays are indexed by node."""

    ensembles_out: np.ndarray
    energy_before: np.ndarray
    energy_after: np.ndarray
    optimizer_iters: np.ndarray
    stability_residual: np.ndarray
    stability_ok: np.ndarray
    grad_norm: np.ndarray
    bandwidth_used: np.ndarray
    hit_max_iters: np.ndarray

    @property
    def violations(self) -> int:
        return int(np.sum(~self.stability_ok))

    @staticmethod
    def concatenate(parts: list["BatchStepResult"]) -> "BatchStepResult":
        return BatchStepResult(
            *(np.concatenate([getattr(p, f) for p in parts]) for f in BatchStepResult.__dataclass_fields__)
        )


def effective_dt(cfg: MicroStepConfig) -> float:
    return cfg.dt / (2.0 * cfg.Wi)


def _norms(g: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("bnk,bnk->b", g, g))


def _dot(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.einsum("bnk,bnk->b", a, c)


def _separable_hessian(x: np.ndarray, pot: Potential, prox_step: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-particle blocks alpha I + beta q q^T of the proximal plus spring Hessian of Phi."""
    a, c = potential_hessian_coefficients(pot, x)
    n = x.shape[-2]
    return 1.0 / prox_step + a / n, c / n


def _apply_blocks(alpha: np.ndarray, beta: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    return alpha[..., None] * v + (beta * np.einsum("...k,...k->...", x, v))[..., None] * x


def _solve_blocks(alpha: np.ndarray, beta: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    # Sherman-Morrison on each 2x2 block
    xv = np.einsum("...k,...k->...", x, v)
    shift = beta * xv / (alpha + beta * squared_norm(x))
    return (v - shift[..., None] * x) / alpha[..., None]


def implicit_gradient_step_batch(
    q0: np.ndarray, pot: Potential, h: np.ndarray, cfg: MicroStepConfig
) -> BatchStepResult:
    """Preconditioned Barzilai-Borwein descent on Phi for a stack of ensembles (B, N, 2).

    Search directions are the gradient scaled by the inverse of the separable
    part of the Hessian (proximal term plus spring potential, one 2x2 block per
    particle), so the first trial is the explicit gradient step in that metric
    and BB only has to resolve the kernel coupling. A trial point is accepted
    when every FENE particle stays feasible and Phi falls below the largest of
    the last ``nonmonotone_memory`` accepted values (Armijo); otherwise the
    step is halved. The lowest-Phi iterate is returned, so Phi never
    increases over the whole step.
    """
    q0 = np.asarray(q0, dtype=float)
    batch, n, _ = q0.shape
    h = np.broadcast_to(np.asarray(h, dtype=float), (batch,)).copy()
    opt = cfg.optimizer
    dt_eff = effective_dt(cfg)
    prox_step = n * dt_eff  # inverse Hessian of the proximal term

    def evaluate(x: np.ndarray, x0: np.ndarray, hb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        value = np.full(x.shape[0], np.inf)
        grad = np.zeros_like(x)
        ok = np.ones(x.shape[0], dtype=bool)
        if pot.is_fene:
            ok = np.all(fene_feasible(x, pot.b, cfg.feasibility_margin), axis=-1)
        if np.any(ok):
            energy, grad_f = free_energy_and_gradient_batch(x[ok], pot, hb[ok])
            value[ok] = energy + proximal_term(x[ok], x0[ok], dt_eff)
            grad[ok] = grad_f + (x[ok] - x0[ok]) / prox_step
        return value, grad

    energy_before, g = free_energy_and_gradient_batch(q0, pot, h)
    x = q0.copy()
    phi = energy_before.copy()
    block_a, block_b = _separable_hessian(x, pot, prox_step)
    best_x, best_phi, best_g = x.copy(), phi.copy(), g.copy()
    history = np.full((batch, opt.nonmonotone_memory), -np.inf)
    history[:, 0] = phi
    alpha = np.full(batch, opt.step_init)
    iters = np.zeros(batch, dtype=int)
    infeasible_stall = np.zeros(batch, dtype=bool)
    active = _norms(g) > opt.grad_tol

    for _ in range(opt.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        direction = _solve_blocks(block_a[idx], block_b[idx], x[idx], g[idx])
        slope = _dot(g[idx], direction)
        reference = history[idx].max(axis=1)
        step = alpha[idx].copy()
        pending = np.arange(idx.size)
        accepted = np.zeros(idx.size, dtype=bool)
        saw_infeasible = np.zeros(idx.size, dtype=bool)
        x_new = x[idx].copy()
        phi_new = phi[idx].copy()
        g_new = g[idx].copy()
        for _halving in range(opt.max_halvings):
            if pending.size == 0:
                break
            sel = idx[pending]
            trial = x[sel] - step[pending, None, None] * direction[pending]
            value, grad = evaluate(trial, q0[sel], h[sel])
            saw_infeasible[pending] |= ~np.isfinite(value)
            ok = np.isfinite(value) & (value <= reference[pending] - ARMIJO * step[pending] * slope[pending])
            good = pending[ok]
            x_new[good] = trial[ok]
            phi_new[good] = value[ok]
            g_new[good] = grad[ok]
            accepted[good] = True
            pending = pending[~ok]
            step[pending] *= 0.5

        stalled = idx[~accepted]
        if stalled.size:
            infeasible_stall[stalled] = saw_infeasible[~accepted]
            active[stalled] = False

        moved = idx[accepted]
        if moved.size == 0:
            continue
        xm = x_new[accepted]
        s = xm - x[moved]
        y = g_new[accepted] - g[moved]
        block_a[moved], block_b[moved] = _separable_hessian(xm, pot, prox_step)
        s_hs = _dot(s, _apply_blocks(block_a[moved], block_b[moved], xm, s))
        sy = _dot(s, y)
        bb = np.where(sy > BB_CURVATURE_EPS, s_hs / np.where(sy > BB_CURVATURE_EPS, sy, 1.0), 1.0)
        alpha[moved] = np.clip(bb, STEP_MIN, STEP_MAX)
        scale = 1.0 + np.max(np.abs(x[moved]), axis=(1, 2))
        settled = np.max(np.abs(s), axis=(1, 2)) <= STALL_TOL * scale

        x[moved] = xm
        phi[moved] = phi_new[accepted]
        g[moved] = g_new[accepted]
        iters[moved] += 1
        history[moved, iters[moved] % opt.nonmonotone_memory] = phi[moved]
        better = moved[phi[moved] < best_phi[moved]]
        best_x[better], best_phi[better], best_g[better] = x[better], phi[better], g[better]
        active[moved] = (_norms(g[moved]) > opt.grad_tol) & ~settled

    hit_max_iters = active.copy()
    grad_norm = _norms(best_g)
    unconverged = grad_norm > opt.grad_tol
    no_decrease = best_phi >= energy_before
    bad_feasible = unconverged & no_decrease & infeasible_stall
    if np.any(bad_feasible):
        raise FeasibilityViolation(
            "line search could not keep FENE particles feasible",
            details={"nodes": np.flatnonzero(bad_feasible).tolist()},
        )
    diverged = unconverged & no_decrease & hit_max_iters
    if np.any(diverged):
        raise OptimizerDivergence(
            "optimizer reached max_iters without decreasing the objective",
            details={"nodes": np.flatnonzero(diverged).tolist(), "grad_norm": float(np.max(grad_norm))},
        )
    if np.any(hit_max_iters):
        logger.warning(
            "implicit step: %d/%d ensembles hit max_iters=%d above grad_tol (max grad norm %.3e)",
            int(np.sum(hit_max_iters)), batch, opt.max_iters, float(np.max(grad_norm[hit_max_iters])),
        )

    x = best_x
    energy_after = free_energy_batch(x, pot, h)
    moved_sq = np.mean(np.einsum("bnk,bnk->bn", x - q0, x - q0), axis=-1)
    residual = energy_after - energy_before + moved_sq / (2.0 * dt_eff)
    return BatchStepResult(
        ensembles_out=x,
        energy_before=energy_before,
        energy_after=energy_after,
        optimizer_iters=iters,
        stability_residual=residual,
        stability_ok=residual <= cfg.stability_slack,
        grad_norm=grad_norm,
        bandwidth_used=h,
        hit_max_iters=hit_max_iters,
    )


def implicit_gradient_step(
    ens: np.ndarray, pot: Potential, policy: BandwidthPolicy, cfg: MicroStepConfig
) -> StepResult:
    q = validate_ensemble(ens, pot, cfg.feasibility_margin)
    h = select_bandwidths(policy, q)
    res = implicit_gradient_step_batch(q[None], pot, np.atleast_1d(h), cfg)
    return StepResult(
        ensemble_out=res.ensembles_out[0],
        energy_before=float(res.energy_before[0]),
        energy_after=float(res.energy_after[0]),
        optimizer_iters=int(res.optimizer_iters[0]),
        stability_ok=bool(res.stability_ok[0]),
        stability_residual=float(res.stability_residual[0]),
        grad_norm=float(res.grad_norm[0]),
        bandwidth_used=float(res.bandwidth_used[0]),
        hit_max_iters=bool(res.hit_max_iters[0]),
    )


def implicit_gradient_step_nodes(
    particles: np.ndarray,
    pot: Potential,
    policy: BandwidthPolicy,
    cfg: MicroStepConfig,
    workers: int | None = None,
    chunk: int | None = None,
) -> BatchStepResult:
    """Implicit step at every node of a (nodes, N, 2) field.

    Nodes are split into fixed chunks; chunks may run on a thread pool but
    results are reassembled in node order, so the output does not depend on
    the worker count.
    """
    workers = workers or settings.workers
    chunk = chunk or settings.node_chunk
    bandwidths = select_bandwidths(policy, particles)
    bounds = [(s, min(s + chunk, particles.shape[0])) for s in range(0, particles.shape[0], chunk)]

    def run(bound: tuple[int, int]) -> BatchStepResult:
        lo, hi = bound
        try:
            return implicit_gradient_step_batch(particles[lo:hi], pot, bandwidths[lo:hi], cfg)
        except (FeasibilityViolation, OptimizerDivergence) as e:
            local = e.details.get("nodes", [])
            e.details["nodes"] = [lo + i for i in local]
            raise

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    return BatchStepResult.concatenate(parts)


def deformation_update(
    ens: np.ndarray,
    grad_u: np.ndarray,
    dt: float,
    pot: Potential,
    projection_margin: float = 1e-6,
) -> np.ndarray:
    """q <- (I + dt grad_u) q; FENE particles pushed out of the ball are projected radially.

    ``grad_u`` is a single (2, 2) matrix or one matrix per ensemble in the stack.
    """
    q = np.asarray(ens, dtype=float)
    step = np.eye(2) + dt * np.asarray(grad_u, dtype=float)
    if step.ndim == 2:
        out = np.einsum("ij,...nj->...ni", step, q)
    else:
        out = np.einsum("...ij,...nj->...ni", step, q)
    if pot.is_fene:
        limit = pot.b * (1.0 - projection_margin)
        sq = squared_norm(out)
        outside = sq > limit
        if np.any(outside):
            scale = np.ones_like(sq)
            scale[outside] = np.sqrt(limit / sq[outside])
            out = out * scale[..., None]
    return out


def node_stream(seed: int, node_id: int, step: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, node, step)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, node_id, step])))


def sample_initial_ensemble(
    n: int, pot: Potential, rng: np.random.Generator, margin: float = 1e-10
) -> np.ndarray:
    """Standard-normal sample; FENE draws outside the feasible ball are redrawn."""
    q = rng.standard_normal((n, 2))
    if not pot.is_fene:
        return q
    for _ in range(MAX_RESAMPLES):
        bad = ~fene_feasible(q, pot.b, margin)
        if not np.any(bad):
            return q
        q[bad] = rng.standard_normal((int(np.sum(bad)), 2))
    raise RejectionOverflow("initial FENE sampling did not terminate", details={"b": pot.b})


def sde_oracle_step(
    ens: np.ndarray,
    grad_u: np.ndarray,
    pot: Potential,
    Wi: float,
    dt: float,
    rng: np.random.Generator,
    sigma: float | None = None,
) -> np.ndarray:
    """Euler-Maruyama step of dq = [(grad u) q - grad Psi(q) / (2 Wi)] dt + sqrt(1/Wi) dW.

    FENE proposals outside the ball are redrawn particle by particle.
    """
    q = np.asarray(ens, dtype=float)
    drift = np.einsum("ij,...j->...i", np.asarray(grad_u, dtype=float), q) - potential_grad(pot, q) / (2.0 * Wi)
    sigma = np.sqrt(1.0 / Wi) if sigma is None else sigma
    base = q + dt * drift
    scale = sigma * np.sqrt(dt)
    proposal = base + scale * rng.standard_normal(q.shape)
    if not pot.is_fene:
        return proposal
    for _ in range(MAX_RESAMPLES):
        bad = ~fene_feasible(proposal, pot.b)
        if not np.any(bad):
            return proposal
        proposal[bad] = base[bad] + scale * rng.standard_normal((int(np.sum(bad)), 2))
    raise RejectionOverflow(
        "FENE rejection sampling exceeded the resample cap",
        details={"cap": MAX_RESAMPLES, "dt": dt},
    )


@dataclass
class EnergyLedger:
    """Per-step maximum free energy and stability residual across nodes.

    ``unconverged`` counts node steps that stopped at max_iters.
    """

    slack: float = 1e-8
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)
    violations: int = 0
    unconverged: int = 0

    def record(self, step: int, t: float, result: BatchStepResult) -> None:
        worst = float(np.max(result.stability_residual))
        self.rows.append((step, t, float(np.max(result.energy_after)), worst))
        self.unconverged += int(np.sum(result.hit_max_iters))
        bad = int(np.sum(result.stability_residual > self.slack))
        if bad:
            self.violations += bad
            logger.warning("step %d: %d nodes violate the energy inequality (worst residual %.3e)", step, bad, worst)

    def summary(self) -> dict:
        return {
            "steps": len(self.rows),
            "violations": self.violations,
            "max_residual": max((r[3] for r in self.rows), default=0.0),
            "unconverged": self.unconverged,
        }
