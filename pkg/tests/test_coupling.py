"""Tests for the operator-split coupled step and whole-simulation driver."""

import numpy as np
import pytest

from polyflow.core.errors import SizeMismatch
from polyflow.schemas.config import ScenarioKind
from polyflow.services.coupling import (
    ParticleField,
    Simulation,
    advect_and_interpolate,
    full_time_step,
    velocity_gradient_at_nodes,
)
from polyflow.services.fem.mesh import build_mesh_pair
from polyflow.services.fem.navier_stokes import cavity_dirichlet, no_slip
from polyflow.services.scenarios.defaults import HOOKEAN, scenario_config


def _cavity_cfg(**overrides):
    params = {"nx": 2, "ny": 2, "N": 6, "dt": 1e-2, "t_end": 3e-2, "output_every": 1, **overrides}
    return scenario_config(ScenarioKind.cavity, **params)


# ---------------------------------------------------------------------------
# velocity gradient
# ---------------------------------------------------------------------------


class TestVelocityGradient:
    def test_linear_shear_is_exact(self, small_mesh):
        y = small_mesh.fine.nodes[:, 1]
        grads = velocity_gradient_at_nodes(np.column_stack([y, 0 * y]), small_mesh)
        np.testing.assert_allclose(grads, np.tile([[0.0, 1.0], [0.0, 0.0]], (small_mesh.fine.n_nodes, 1, 1)), atol=1e-12)

    def test_zero_velocity(self, small_mesh):
        grads = velocity_gradient_at_nodes(np.zeros((small_mesh.fine.n_nodes, 2)), small_mesh)
        assert grads.shape == (small_mesh.fine.n_nodes, 2, 2)
        assert not np.any(grads)

    def test_general_affine_field(self, small_mesh):
        x, y = small_mesh.fine.nodes.T
        u = np.column_stack([2 * x - y, 3 * x + 0.5 * y])
        grads = velocity_gradient_at_nodes(u, small_mesh)
        np.testing.assert_allclose(grads[7], [[2.0, -1.0], [3.0, 0.5]], atol=1e-12)


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------


class TestAdvection:
    def _field(self, mesh, rng, n=4):
        return ParticleField(ensembles=rng.standard_normal((mesh.fine.n_nodes, n, 2)), coords=mesh.fine.nodes.copy())

    def test_zero_velocity_is_identity(self, small_mesh, rng):
        field = self._field(small_mesh, rng)
        out = advect_and_interpolate(field, np.zeros((small_mesh.fine.n_nodes, 2)), small_mesh, 0.1)
        np.testing.assert_allclose(out.ensembles, field.ensembles, atol=1e-12)

    def test_constant_field_unchanged(self, small_mesh, rng):
        field = ParticleField.broadcast(rng.standard_normal((5, 2)), small_mesh.fine.nodes)
        u = rng.standard_normal((small_mesh.fine.n_nodes, 2))
        out = advect_and_interpolate(field, u, small_mesh, 0.05)
        np.testing.assert_allclose(out.ensembles, field.ensembles, atol=1e-12)

    def test_reads_only_the_old_field(self, small_mesh, rng):
        field = self._field(small_mesh, rng)
        before = field.ensembles.copy()
        advect_and_interpolate(field, np.ones((small_mesh.fine.n_nodes, 2)), small_mesh, 0.1)
        np.testing.assert_array_equal(field.ensembles, before)

    def test_affine_field_is_shifted(self, small_mesh):
        # every particle coordinate equals the node x; transport by u=(c, 0) shifts it by -c dt
        x = small_mesh.fine.nodes[:, 0]
        ens = np.repeat(np.stack([x, x], axis=-1)[:, None, :], 3, axis=1)
        field = ParticleField(ensembles=ens, coords=small_mesh.fine.nodes.copy())
        u = np.tile([0.5, 0.0], (small_mesh.fine.n_nodes, 1))
        out = advect_and_interpolate(field, u, small_mesh, 0.1)
        inside = x >= 0.05
        np.testing.assert_allclose(out.ensembles[inside, :, 0], (x[inside] - 0.05)[:, None] * np.ones(3), atol=1e-12)

    def test_with_ensembles_checks_size(self, small_mesh, rng):
        field = self._field(small_mesh, rng)
        with pytest.raises(SizeMismatch):
            field.with_ensembles(np.zeros((3, 4, 2)))


# ---------------------------------------------------------------------------
# full step and the driver
# ---------------------------------------------------------------------------


class TestFullStep:
    def test_rest_state_stays_at_rest(self):
        cfg = _cavity_cfg(potential=HOOKEAN, bandwidth=1.0, Wi=10.0)
        mesh = build_mesh_pair(cfg.nx, cfg.ny)
        sim = Simulation(mesh, cfg, no_slip(mesh), workers=1)
        tau0 = sim.macro.tau.values.copy()
        sim.run(2)
        np.testing.assert_allclose(sim.macro.u, 0.0, atol=1e-12)
        # the same ensemble everywhere keeps the stress uniform
        np.testing.assert_allclose(sim.macro.tau.values, sim.macro.tau.values[0], atol=1e-14)
        np.testing.assert_allclose(sim.macro.tau.values, tau0, rtol=0.1, atol=0.05)

    def test_cavity_step(self):
        cfg = _cavity_cfg()
        mesh = build_mesh_pair(cfg.nx, cfg.ny)
        sim = Simulation(mesh, cfg, cavity_dirichlet(mesh), workers=1)
        macro, particles = full_time_step(sim.macro, sim.particles, sim.solver, cfg, sim.ledger)
        assert macro.step == 1
        assert macro.t == pytest.approx(cfg.dt)
        assert particles.ensembles.shape == sim.particles.ensembles.shape
        assert np.max(np.abs(sim.solver.divergence_functional(macro.u))) <= 1e-8
        assert sim.ledger.violations == 0

    def test_run_calls_output_hook(self):
        cfg = _cavity_cfg()
        mesh = build_mesh_pair(cfg.nx, cfg.ny)
        sim = Simulation(mesh, cfg, cavity_dirichlet(mesh), workers=1)
        seen = []
        sim.run(cfg.n_steps, on_output=lambda s: seen.append(s.macro.step))
        assert seen == [0, 1, 2, 3]
        assert sim.max_divergence <= 1e-8

    def test_seed_reproducibility(self):
        cfg = _cavity_cfg()
        mesh = build_mesh_pair(cfg.nx, cfg.ny)
        runs = []
        for _ in range(2):
            sim = Simulation(mesh, cfg, cavity_dirichlet(mesh), workers=1)
            sim.run(cfg.n_steps)
            runs.append((sim.macro.u, sim.particles.ensembles))
        np.testing.assert_array_equal(runs[0][0], runs[1][0])
        np.testing.assert_array_equal(runs[0][1], runs[1][1])

    def test_worker_count_does_not_change_results(self, monkeypatch):
        from polyflow.core.config import settings

        monkeypatch.setattr(settings, "node_chunk", 4)
        cfg = _cavity_cfg(t_end=2e-2)
        mesh = build_mesh_pair(cfg.nx, cfg.ny)
        results = []
        for workers in (1, 3):
            sim = Simulation(mesh, cfg, cavity_dirichlet(mesh), workers=workers)
            sim.run(cfg.n_steps)
            results.append(sim.particles.ensembles)
        np.testing.assert_array_equal(results[0], results[1])
