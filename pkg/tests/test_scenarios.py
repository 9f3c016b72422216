"""Tests for the four benchmark scenarios and their output files.

The quick tests shrink every run; the full-size acceptance runs are marked slow.
"""

import csv

import numpy as np
import pytest

from polyflow.core.errors import ConfigError
from polyflow.schemas.config import ExtensionMode, ScenarioKind
from polyflow.services.potentials import squared_norm
from polyflow.services.scenarios.analysis import detect_modes, feasible_lattice, hysteresis_loop, is_bimodal, kde_density
from polyflow.services.scenarios.cavity import run_cavity
from polyflow.services.scenarios.couette import run_couette_hookean, run_fene_shear, seed_ensemble_statistics
from polyflow.services.scenarios.defaults import CAVITY_HEIGHTS, CAVITY_MESHES, COUETTE_PROBES, FENE, scenario_config
from polyflow.services.scenarios.extension import extension_rate, run_fene_extension, sde_extension_reference
from polyflow.services.scenarios.oldroyd_b import oldroyd_b_reference
from polyflow.services.scenarios.outputs import write_run
from polyflow.services.scenarios.registry import run_scenario, scenario_defaults

TINY_COUETTE = {"N": 5, "M": 4, "dt": 1e-2, "t_end": 5e-2, "output_every": 1}
TINY_CAVITY = {"nx": 2, "ny": 2, "N": 5, "dt": 1e-2, "t_end": 2e-2, "output_every": 1}


def _header(path):
    with path.open() as f:
        return next(csv.reader(f))


def _rows(path):
    with path.open() as f:
        return list(csv.reader(f))[1:]


# ---------------------------------------------------------------------------
# quick runs
# ---------------------------------------------------------------------------


class TestCouetteRuns:
    def test_hookean_probes(self):
        result = run_couette_hookean(workers=1, **TINY_COUETTE)
        assert list(result.series.columns) == [f"u@{y:g}" for y in COUETTE_PROBES]
        assert len(result.series) == 6
        assert result.summary["t_end"] == pytest.approx(5e-2)
        assert result.summary["violations"] == 0
        assert result.summary["steps"] == 5

    def test_fene_shear_summary(self):
        result = run_fene_shear(workers=1, **TINY_COUETTE)
        assert {"shear_stress_peak_t", "normal_stress_peak_t", "velocity_overshoot"} <= result.summary.keys()
        assert result.probe_quantities == ("u", "tau12", "n1")
        assert "tau12@1" in result.series.columns

    def test_seed_reproducibility(self, tmp_path):
        a = write_run(run_couette_hookean(workers=1, seed=3, **TINY_COUETTE), tmp_path / "a")
        b = write_run(run_couette_hookean(workers=1, seed=3, **TINY_COUETTE), tmp_path / "b")
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_seeds_differ(self):
        a = run_couette_hookean(workers=1, seed=1, **TINY_COUETTE)
        b = run_couette_hookean(workers=1, seed=2, **TINY_COUETTE)
        assert a.ledger.rows != b.ledger.rows

    def test_seed_statistics(self):
        stats = seed_ensemble_statistics([0, 1, 2], workers=1, **TINY_COUETTE)
        assert set(stats.columns) == {"mean", "stderr"}
        assert np.all(stats.column("stderr") >= 0.0)

    def test_seed_statistics_needs_two_seeds(self):
        with pytest.raises(ValueError):
            seed_ensemble_statistics([0])

    def test_probe_file(self, tmp_path):
        paths = write_run(run_couette_hookean(workers=1, **TINY_COUETTE), tmp_path)
        names = [p.name for p in paths]
        assert names == ["config.env", "probes.csv", "energy.csv"]
        probes = tmp_path / "probes.csv"
        assert _header(probes) == ["t", "location", "u"]
        assert len(_rows(probes)) == 6 * len(COUETTE_PROBES)
        assert _header(tmp_path / "energy.csv") == ["step", "t", "free_energy", "stability_residual"]
        assert len(_rows(tmp_path / "energy.csv")) == 5


class TestExtensionRuns:
    def test_rate_schedule(self):
        assert extension_rate(2.25, ExtensionMode.startup, 4.0) == 4.0
        assert extension_rate(2.3, ExtensionMode.startup, 4.0) == 0.0
        assert extension_rate(100.0, ExtensionMode.constant, 4.0) == 4.0

    def test_short_startup_run(self, tmp_path):
        result = run_fene_extension(r=4.0, N=8, dt=1e-2, t_end=0.2, output_every=2)
        assert len(result.series) == 11
        ext = result.series.column("mean_sq_ext_over_b")
        assert np.all(ext < 1.0)
        assert ext[-1] > ext[0]
        # still loading at t_end, so no loop metrics
        assert "loop_area" not in result.summary
        paths = write_run(result, tmp_path)
        assert _header(tmp_path / "hysteresis.csv") == ["t", "mean_sq_ext_over_b", "normal_stress_diff", "eps_rate"]
        assert tmp_path / "hysteresis.csv" in paths

    def test_snapshots_are_written(self, tmp_path):
        result = run_fene_extension(mode="constant", r=4.0, N=6, dt=0.25, t_end=3.0)
        assert list(result.particles) == [3.0]
        assert np.all(squared_norm(result.particles[3.0]) < FENE.b)
        write_run(result, tmp_path)
        assert _header(tmp_path / "particles_t3.csv") == ["particle_index", "q1", "q2"]
        assert len(_rows(tmp_path / "particles_t3.csv")) == 6

    def test_sde_reference_shape(self):
        cfg = scenario_config(ScenarioKind.fene_extension, N=4, dt=1e-2, t_end=5e-2, output_every=1)
        series = sde_extension_reference(cfg, paths=500)
        assert len(series) == 6
        assert np.all(series.column("mean_sq_ext_over_b") < 1.0)


class TestCavityRuns:
    def test_short_run(self, tmp_path):
        result = run_cavity(workers=1, **TINY_CAVITY)
        assert result.summary["max_divergence"] <= 1e-8
        assert result.summary["vortex_strength"] > 0.0
        assert list(result.fields) == [pytest.approx(2e-2)]
        write_run(result, tmp_path)
        field = tmp_path / "field_t0.02.csv"
        assert _header(field) == ["node_id", "x", "y", "u", "v", "psi", "tau11", "tau12", "tau22"]
        assert len(_rows(field)) == 25
        assert _header(tmp_path / "metrics.csv") == ["t", "vortex_x", "vortex_y", "vortex_strength", "asymmetry"]
        assert _header(tmp_path / "midline.csv") == ["y", "u"]
        mesh_lines = (tmp_path / "mesh.txt").read_text().splitlines()
        assert mesh_lines[0] == "# nodes 25"
        assert "# elements 32" in mesh_lines

    def test_quarter_resolution_cavity(self):
        nx, ny = (round(n / 4) for n in CAVITY_MESHES[0.5])
        quick = {"nx": nx, "ny": ny, "N": 25, "dt": 1e-2, "t_end": 0.1, "output_every": 5}
        newtonian = run_cavity(Ly=0.5, Wi=0.1, workers=1, **quick)
        elastic = run_cavity(Ly=0.5, Wi=1.0, workers=1, **quick)
        for result in (newtonian, elastic):
            assert result.summary["max_divergence"] <= 1e-8
            assert result.summary["violations"] == 0
            assert 0.0 < result.summary["vortex_x"] < 1.0
            assert 0.0 < result.summary["vortex_y"] < 0.5
            assert result.summary["vortex_strength"] > 0.0
        assert elastic.summary["asymmetry"] != newtonian.summary["asymmetry"]


class TestRegistry:
    def test_dispatch(self):
        result = run_scenario("couette-hookean", workers=1, **TINY_COUETTE)
        assert result.config.scenario == ScenarioKind.couette_hookean

    def test_checkpoint_only_for_cavity(self, tmp_path):
        with pytest.raises(ConfigError):
            run_scenario("fene-shear", checkpoint=tmp_path / "x.npz", **TINY_COUETTE)

    def test_defaults_listing(self):
        listing = scenario_defaults()
        assert set(listing) == {k.value for k in ScenarioKind}
        assert listing["cavity"]["potential"]["kind"] == "fene"


# ---------------------------------------------------------------------------
# full-size acceptance runs
# ---------------------------------------------------------------------------


@pytest.mark.slow
class TestAcceptance:
    def test_hookean_matches_oldroyd_b(self):
        runs = [run_couette_hookean(seed=s) for s in range(10)]
        ref = oldroyd_b_reference(0.11, 0.1, 0.11, 0.89)
        t = runs[0].series.times
        window = (t >= 0.05) & (t <= 1.0)
        for y in COUETTE_PROBES:
            name = f"u@{y:g}"
            mean = np.mean([r.series.column(name) for r in runs], axis=0)
            assert np.max(np.abs(mean[window] - ref.at(name, t[window]))) <= 0.03

    def test_loop_areas_grow_with_rate(self):
        areas = [abs(hysteresis_loop(run_fene_extension(r=r).series).area) for r in (4.0, 5.0, 6.0)]
        assert 0.0 < areas[0] < areas[1] < areas[2]

    def test_constant_extension_is_bimodal(self):
        result = run_fene_extension(mode="constant", r=4.0)
        xs, ys = feasible_lattice(FENE.b)
        modes = detect_modes(kde_density(result.particles[8.0], xs, ys), xs, ys)
        assert is_bimodal(modes, np.sqrt(FENE.b))
        radii = np.linalg.norm(modes[:2], axis=1) / np.sqrt(FENE.b)
        assert np.all((radii >= 0.9) & (radii <= 1.1))

    def test_seed_stderr_shrinks_with_particle_count(self):
        seeds = list(range(10))
        errors = [seed_ensemble_statistics(seeds, N=n, t_end=0.5).at("stderr", 0.5) for n in (50, 100, 200, 500)]
        assert np.all(np.diff(errors) < 0.0)

    def test_startup_extension_relaxes_to_the_origin(self):
        result = run_fene_extension(r=4.0)
        assert result.summary["t_end"] >= 12.0
        xs, ys = feasible_lattice(FENE.b)
        modes = detect_modes(kde_density(result.particles[12.0], xs, ys, h_kde=0.5), xs, ys)
        assert not is_bimodal(modes, np.sqrt(FENE.b))
        assert np.linalg.norm(modes[0]) <= 0.25 * np.sqrt(FENE.b)
        t = result.series.times
        n1 = np.abs(result.series.column("normal_stress_diff"))
        assert np.all(n1[t > 12.25] <= 0.05 * np.max(n1))

    def test_constant_extension_matches_sde(self):
        result = run_fene_extension(mode="constant", r=4.0)
        ref = sde_extension_reference(result.config)
        t = result.series.times
        late = t > 2.0
        np.testing.assert_allclose(
            result.series.column("mean_sq_ext_over_b")[late], ref.at("mean_sq_ext_over_b", t[late]), rtol=0.05
        )

    def test_shear_peaks(self):
        result = run_fene_shear()
        assert 4.5 <= result.summary["shear_stress_peak_t"] <= 7.5
        assert 8.0 <= result.summary["normal_stress_peak_t"] <= 12.0
        assert result.summary["normal_stress_peak_t"] > result.summary["shear_stress_peak_t"]
        assert result.summary["velocity_overshoot"] >= 0.02

    @pytest.mark.parametrize("Ly", CAVITY_HEIGHTS)
    def test_elastic_cavity_breaks_symmetry(self, Ly):
        newtonian = run_cavity(Ly=Ly, Wi=0.1, t_end=1.0)
        elastic = run_cavity(Ly=Ly, Wi=1.0, t_end=1.0)
        assert elastic.summary["asymmetry"] > newtonian.summary["asymmetry"]
        # the lid moves toward +x; elasticity pulls the vortex upstream and weakens it
        assert elastic.summary["vortex_x"] < newtonian.summary["vortex_x"]
        assert elastic.summary["vortex_strength"] < newtonian.summary["vortex_strength"]
        assert elastic.summary["max_divergence"] <= 1e-8
