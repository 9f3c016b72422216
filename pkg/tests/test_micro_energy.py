"""Tests for the discrete free energy, its gradient and the proximal objective."""

import math

import numpy as np
import pytest

from polyflow.core.errors import FeasibilityViolation, SizeMismatch
from polyflow.services.micro_energy import (
    discrete_free_energy,
    energy_lower_bound,
    free_energy_and_gradient_batch,
    free_energy_batch,
    free_energy_gradient,
    step_objective,
)
from polyflow.services.micro_stepper import node_stream
from polyflow.services.potentials import Kernel
from polyflow.services.scenarios.verify import finite_difference_gradient


# ---------------------------------------------------------------------------
# discrete_free_energy
# ---------------------------------------------------------------------------


class TestFreeEnergy:
    def test_single_particle_at_origin(self, hookean):
        value = discrete_free_energy(np.zeros((1, 2)), hookean, Kernel(h=1.0))
        assert value == pytest.approx(math.log(1.0 / (2.0 * math.pi)))
        assert value == pytest.approx(-1.837877, abs=1e-6)

    def test_single_particle_adds_potential(self, hookean):
        value = discrete_free_energy(np.array([[2.0, 0.0]]), hookean, Kernel(h=1.0))
        assert value == pytest.approx(0.162123, abs=1e-6)

    def test_two_particles_by_hand(self, hookean):
        ens = np.array([[0.0, 0.0], [1.0, 0.0]])
        arg = 0.5 * (1.0 + math.exp(-0.5)) / (2.0 * math.pi)
        expected = math.log(arg) + 0.5 * (0.0 + 0.5)
        assert discrete_free_energy(ens, hookean, Kernel(h=1.0)) == pytest.approx(expected, rel=1e-14)

    def test_invariant_under_particle_permutation(self, hookean, rng):
        ens = rng.standard_normal((12, 2))
        k = Kernel(h=0.6)
        perm = rng.permutation(12)
        assert discrete_free_energy(ens[perm], hookean, k) == pytest.approx(discrete_free_energy(ens, hookean, k), rel=1e-13)

    def test_bounded_below(self, hookean, rng):
        ens = rng.standard_normal((20, 2))
        assert discrete_free_energy(ens, hookean, Kernel(h=0.5)) >= energy_lower_bound(20, 0.5)

    def test_fene_infeasible_raises(self, fene):
        with pytest.raises(FeasibilityViolation):
            discrete_free_energy(np.array([[3.0, 0.0], [0.0, 0.0]]), fene, Kernel(h=0.1))

    def test_batch_infeasible_is_infinite(self, fene):
        q = np.array([[[3.0, 0.0], [0.0, 0.0]]])
        assert free_energy_batch(q, fene, 0.1)[0] == math.inf

    def test_rejects_bad_shape(self, hookean):
        with pytest.raises(SizeMismatch):
            discrete_free_energy(np.zeros((3, 3)), hookean, Kernel(h=1.0))

    def test_rejects_non_finite(self, hookean):
        with pytest.raises(FeasibilityViolation):
            discrete_free_energy(np.array([[np.nan, 0.0]]), hookean, Kernel(h=1.0))


# ---------------------------------------------------------------------------
# free_energy_gradient
# ---------------------------------------------------------------------------


class TestGradient:
    @pytest.mark.parametrize("n", [1, 2, 5, 20])
    def test_matches_finite_differences_hookean(self, hookean, n):
        ens = node_stream(7, n, 0).standard_normal((n, 2))
        k = Kernel(h=0.8)
        exact = free_energy_gradient(ens, hookean, k)
        approx = finite_difference_gradient(ens, hookean, k)
        assert np.linalg.norm(exact - approx) / np.linalg.norm(exact) < 1e-5

    @pytest.mark.parametrize("n", [1, 2, 5, 20])
    def test_matches_finite_differences_fene(self, fene, n):
        ens = 0.8 * node_stream(8, n, 0).standard_normal((n, 2))
        k = Kernel(h=0.5)
        exact = free_energy_gradient(ens, fene, k)
        approx = finite_difference_gradient(ens, fene, k)
        assert np.linalg.norm(exact - approx) / np.linalg.norm(exact) < 1e-5

    def test_single_particle_has_no_kernel_term(self, hookean):
        q = np.array([[0.4, -0.2]])
        np.testing.assert_allclose(free_energy_gradient(q, hookean, Kernel(h=1.0)), q)

    def test_kernel_terms_sum_to_zero(self, hookean, rng):
        # translation invariance of the entropic part: gradients minus the spring force cancel
        ens = rng.standard_normal((9, 2))
        g = free_energy_gradient(ens, hookean, Kernel(h=0.4))
        entropic = g - ens / 9.0
        np.testing.assert_allclose(entropic.sum(axis=0), 0.0, atol=1e-12)

    def test_batch_matches_single(self, hookean, rng):
        q = rng.standard_normal((3, 6, 2))
        h = np.array([0.3, 0.6, 0.9])
        energy, grad = free_energy_and_gradient_batch(q, hookean, h)
        for b in range(3):
            k = Kernel(h=float(h[b]))
            assert energy[b] == pytest.approx(discrete_free_energy(q[b], hookean, k), rel=1e-14)
            np.testing.assert_allclose(grad[b], free_energy_gradient(q[b], hookean, k), rtol=1e-13)


# ---------------------------------------------------------------------------
# step_objective
# ---------------------------------------------------------------------------


class TestStepObjective:
    def test_no_movement_equals_energy(self, hookean, rng):
        ens = rng.standard_normal((8, 2))
        k = Kernel(h=0.5)
        assert step_objective(ens, ens, hookean, k, 0.1) == pytest.approx(discrete_free_energy(ens, hookean, k))

    def test_movement_penalty(self, hookean):
        prev = np.zeros((1, 2))
        trial = np.array([[1.0, 0.0]])
        k = Kernel(h=1.0)
        expected = 1.0 / (2 * 0.5) + discrete_free_energy(trial, hookean, k)
        assert step_objective(trial, prev, hookean, k, 0.5) == pytest.approx(expected)

    def test_size_mismatch(self, hookean):
        with pytest.raises(SizeMismatch):
            step_objective(np.zeros((2, 2)), np.zeros((3, 2)), hookean, Kernel(h=1.0), 0.1)

    def test_nonpositive_dt(self, hookean):
        with pytest.raises(ValueError):
            step_objective(np.zeros((2, 2)), np.zeros((2, 2)), hookean, Kernel(h=1.0), 0.0)
