"""Tests for densities, hysteresis loops and cavity vortex metrics."""

import numpy as np
import pytest

from polyflow.core.errors import DegenerateLoop
from polyflow.schemas.series import TimeSeries
from polyflow.services.scenarios.analysis import (
    detect_modes,
    feasible_lattice,
    hysteresis_loop,
    is_bimodal,
    kde_density,
    midline_profile,
    mirror_map,
    shoelace_area,
    vortex_center,
    vortex_metrics,
)


def _loop(x, y):
    return TimeSeries(t=list(range(len(x))), columns={"mean_sq_ext_over_b": list(x), "normal_stress_diff": list(y)})


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------


class TestDensity:
    def test_single_particle_peaks_at_origin(self):
        axis = np.linspace(-1.0, 1.0, 21)
        density = kde_density(np.zeros((1, 2)), axis, axis)
        assert np.unravel_index(np.argmax(density), density.shape) == (10, 10)
        assert density.sum() * 0.1 * 0.1 == pytest.approx(1.0)

    def test_two_clusters_are_bimodal(self, rng):
        cloud = np.concatenate([rng.normal([-2.0, 0.0], 0.2, (100, 2)), rng.normal([2.0, 0.0], 0.2, (100, 2))])
        axis = np.linspace(-4.0, 4.0, 81)
        modes = detect_modes(kde_density(cloud, axis, axis, h_kde=0.3), axis, axis)
        assert is_bimodal(modes, separation=1.0)
        assert np.all(np.abs(np.abs(modes[:2, 0]) - 2.0) < 0.3)

    def test_one_cluster_is_unimodal(self, rng):
        axis = np.linspace(-4.0, 4.0, 81)
        modes = detect_modes(kde_density(rng.normal(0.0, 0.5, (200, 2)), axis, axis, h_kde=0.5), axis, axis)
        assert not is_bimodal(modes, separation=1.0)

    def test_single_mode_is_not_bimodal(self):
        assert not is_bimodal(np.array([[0.0, 0.0]]), separation=0.1)

    def test_feasible_lattice(self):
        xs, ys = feasible_lattice(50.0, cells=11)
        assert xs[0] == pytest.approx(-np.sqrt(50.0))
        assert xs[-1] == pytest.approx(np.sqrt(50.0))
        np.testing.assert_array_equal(xs, ys)


# ---------------------------------------------------------------------------
# hysteresis
# ---------------------------------------------------------------------------


class TestHysteresis:
    def test_shoelace_orientation(self):
        x = np.array([0.0, 1.0, 1.0, 0.0])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        assert shoelace_area(x, y) == pytest.approx(1.0)
        assert shoelace_area(x[::-1], y[::-1]) == pytest.approx(-1.0)

    def test_open_loop(self):
        metrics = hysteresis_loop(_loop([0.0, 0.5, 1.0, 0.5, 0.0], [0.0, 0.2, 1.0, 0.8, 0.0]))
        assert metrics.area == pytest.approx(0.3)
        assert metrics.width == pytest.approx(0.6, abs=0.01)
        assert metrics.peak_index == 2

    def test_retraced_loop_has_no_area(self):
        metrics = hysteresis_loop(_loop([0.0, 0.5, 1.0, 0.5, 0.0], [0.0, 0.5, 1.0, 0.5, 0.0]))
        assert metrics.abs_area == pytest.approx(0.0, abs=1e-15)
        assert metrics.width == pytest.approx(0.0, abs=1e-15)

    def test_too_few_samples(self):
        with pytest.raises(DegenerateLoop) as exc:
            hysteresis_loop(_loop([0.0, 1.0], [0.0, 1.0]))
        assert exc.value.details["samples"] == 2

    def test_still_loading_at_the_end(self):
        with pytest.raises(DegenerateLoop):
            hysteresis_loop(_loop([0.0, 0.5, 1.0], [0.0, 0.5, 1.0]))

    def test_never_returns(self):
        with pytest.raises(DegenerateLoop):
            hysteresis_loop(_loop([0.0, 1.0, 0.9, 0.8], [0.0, 1.0, 0.9, 0.8]))


# ---------------------------------------------------------------------------
# cavity metrics
# ---------------------------------------------------------------------------


class TestVortex:
    def test_mirror_map_is_an_involution(self, small_mesh):
        fine = small_mesh.fine
        mirror = mirror_map(fine, 1.0)
        np.testing.assert_array_equal(mirror[mirror], np.arange(fine.n_nodes))
        np.testing.assert_allclose(fine.nodes[mirror, 0], 1.0 - fine.nodes[:, 0], atol=1e-14)

    def test_symmetric_vortex(self, small_mesh):
        fine = small_mesh.fine
        x, y = fine.nodes.T
        metrics = vortex_metrics(-np.sin(np.pi * x) * np.sin(np.pi * y), fine, 1.0)
        assert (metrics.x, metrics.y) == pytest.approx((0.5, 0.5))
        assert metrics.strength == pytest.approx(1.0)
        assert metrics.asymmetry < 1e-12

    def test_shifted_vortex_is_asymmetric(self, small_mesh):
        fine = small_mesh.fine
        x, y = fine.nodes.T
        metrics = vortex_metrics(-np.sin(np.pi * x) ** 3 * np.sin(np.pi * y) * (1.0 + x), fine, 1.0)
        assert metrics.asymmetry > 0.05

    def test_center_between_nodes(self, small_mesh):
        fine = small_mesh.fine
        x, y = fine.nodes.T
        psi = (x - 0.53) ** 2 + (y - 0.46) ** 2 - 1.0
        k = int(np.argmin(psi))
        np.testing.assert_allclose(fine.nodes[k], [0.5, 0.5])
        assert vortex_center(psi, fine, k) == pytest.approx((0.53, 0.46))
        assert vortex_metrics(psi, fine, 1.0).strength == pytest.approx(abs(psi[k]))

    def test_center_falls_back_to_the_node(self, small_mesh):
        fine = small_mesh.fine
        x, y = fine.nodes.T
        k = int(np.argmin(x + y))
        assert vortex_center(x + y, fine, k) == (0.0, 0.0)

    def test_flat_streamfunction(self, small_mesh):
        metrics = vortex_metrics(np.zeros(small_mesh.fine.n_nodes), small_mesh.fine, 1.0)
        assert metrics.strength == 0.0
        assert metrics.asymmetry == 0.0

    def test_midline_profile(self, small_mesh):
        fine = small_mesh.fine
        u = np.column_stack([fine.nodes[:, 1] ** 2, np.zeros(fine.n_nodes)])
        ys, ux = midline_profile(u, fine, 1.0)
        np.testing.assert_allclose(ys, np.linspace(0.0, 1.0, 9))
        np.testing.assert_allclose(ux, ys**2)
