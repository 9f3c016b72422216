"""Run results and their CSV files.

Every file has a header row, comma separators and floats in round-trip
precision so repeated runs can be compared byte for byte.
"""

import csv
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from polyflow.schemas.config import SimConfig
from polyflow.schemas.series import TimeSeries
from polyflow.services.fem.mesh import TriMesh, export_mesh
from polyflow.services.micro_stepper import EnergyLedger

logger = logging.getLogger(__name__)


@dataclass
class FieldSnapshot:
    nodes: np.ndarray  # (n, 2)
    u: np.ndarray  # (n, 2)
    psi: np.ndarray  # (n,)
    tau: np.ndarray  # (n, 3)


@dataclass
class RunResult:
    config: SimConfig
    series: TimeSeries
    ledger: EnergyLedger
    probes: tuple[float, ...] = ()
    probe_quantities: tuple[str, ...] = ()
    particles: dict[float, np.ndarray] = field(default_factory=dict)  # (N, 2) or (nodes, N, 2)
    fields: dict[float, FieldSnapshot] = field(default_factory=dict)
    metrics: TimeSeries | None = None
    midline: tuple[np.ndarray, np.ndarray] | None = None  # (y, u) along x = Lx/2
    mesh: TriMesh | None = None
    summary: dict[str, Any] = field(default_factory=dict)


def probe_column(quantity: str, y: float) -> str:
    return f"{quantity}@{y:g}"


def fmt(value: float | int) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def time_label(t: float) -> str:
    return f"{t:g}"


def _write(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    logger.debug("wrote %s", path)
    return path


def write_probes(path: Path, series: TimeSeries, probes: tuple[float, ...], quantities: tuple[str, ...]) -> Path:
    """Long format: one row per (t, location)."""
    cols = {(q, y): series.column(probe_column(q, y)) for q in quantities for y in probes}

    def rows():
        for k, t in enumerate(series.t):
            for y in probes:
                yield (t, y, *(cols[(q, y)][k] for q in quantities))

    return _write(path, ["t", "location", *quantities], rows())


def write_series(path: Path, series: TimeSeries, names: list[str] | None = None) -> Path:
    names = names or list(series.columns)
    data = [series.column(n) for n in names]
    return _write(path, ["t", *names], ((t, *(d[k] for d in data)) for k, t in enumerate(series.t)))


def write_particles(path: Path, ensemble: np.ndarray) -> Path:
    q = np.asarray(ensemble)
    if q.ndim == 2:
        return _write(path, ["particle_index", "q1", "q2"], ((i, q1, q2) for i, (q1, q2) in enumerate(q.tolist())))

    def rows():
        for node, ens in enumerate(q):
            for i, (q1, q2) in enumerate(ens.tolist()):
                yield (i, q1, q2, node)

    return _write(path, ["particle_index", "q1", "q2", "node_id"], rows())


def write_field(path: Path, snap: FieldSnapshot) -> Path:
    header = ["node_id", "x", "y", "u", "v", "psi", "tau11", "tau12", "tau22"]
    return _write(
        path,
        header,
        (
            (k, *snap.nodes[k], *snap.u[k], snap.psi[k], *snap.tau[k])
            for k in range(snap.nodes.shape[0])
        ),
    )


def write_energy(path: Path, ledger: EnergyLedger) -> Path:
    return _write(path, ["step", "t", "free_energy", "stability_residual"], ledger.rows)


def config_document(cfg: SimConfig) -> str:
    """Flat KEY=VALUE rendering, readable back through the config loader."""
    flat = cfg.model_dump(mode="json")
    lines = []
    for key, value in sorted(flat.items()):
        if isinstance(value, dict):
            for sub, inner in sorted(value.items()):
                lines.append(f"{key.upper()}_{sub.upper()}={'' if inner is None else inner}")
        else:
            lines.append(f"{key.upper()}={value}")
    return "\n".join(lines) + "\n"


def write_config(out_dir: Path, cfg: SimConfig) -> Path:
    text = config_document(cfg)
    path = Path(out_dir) / "config.env"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    (Path(out_dir) / "config.sha256").write_text(hashlib.sha256(text.encode()).hexdigest() + "\n")
    return path


def write_run(result: RunResult, out_dir: Path) -> list[Path]:
    out = Path(out_dir)
    written = [write_config(out, result.config)]
    if result.probes:
        written.append(write_probes(out / "probes.csv", result.series, result.probes, result.probe_quantities))
    elif "mean_sq_ext_over_b" in result.series.columns:
        written.append(
            write_series(
                out / "hysteresis.csv",
                result.series,
                ["mean_sq_ext_over_b", "normal_stress_diff", "eps_rate"],
            )
        )
    for t, ens in sorted(result.particles.items()):
        written.append(write_particles(out / f"particles_t{time_label(t)}.csv", ens))
    for t, snap in sorted(result.fields.items()):
        written.append(write_field(out / f"field_t{time_label(t)}.csv", snap))
    if result.metrics is not None:
        written.append(
            write_series(out / "metrics.csv", result.metrics, ["vortex_x", "vortex_y", "vortex_strength", "asymmetry"])
        )
    if result.midline is not None:
        ys, us = result.midline
        written.append(_write(out / "midline.csv", ["y", "u"], zip(ys.tolist(), us.tolist())))
    if result.mesh is not None:
        written.append(export_mesh(result.mesh, out / "mesh.txt"))
    written.append(write_energy(out / "energy.csv", result.ledger))
    logger.info("wrote %d files to %s", len(written), out)
    return written
