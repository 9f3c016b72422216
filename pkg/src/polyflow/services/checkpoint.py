"""Snapshot and restart of a coupled simulation."""

import json
import logging
from pathlib import Path

import numpy as np

from polyflow.core.errors import ConfigError
from polyflow.services.coupling import Simulation
from polyflow.services.stress import project_stress

logger = logging.getLogger(__name__)

FORMAT_VERSION = 2


def save_checkpoint(sim: Simulation, path: Path) -> Path:
    path = Path(path)
    meta = {
        "format": FORMAT_VERSION,
        "step": sim.macro.step,
        "t": sim.macro.t,
        "config_hash": sim.cfg.restart_hash(),
        "config": sim.cfg.model_dump(mode="json"),
        "ledger": {"violations": sim.ledger.violations, "unconverged": sim.ledger.unconverged},
        "max_divergence": sim.max_divergence,
    }
    rows = sim.ledger.rows
    with path.open("wb") as f:
        np.savez(
            f,
            meta=np.array(json.dumps(meta)),
            u=sim.macro.u,
            p=sim.macro.p,
            tau=sim.macro.tau.values,
            particles=sim.particles.ensembles,
            ledger_steps=np.array([r[0] for r in rows], dtype=np.int64),
            ledger_values=np.array([r[1:] for r in rows], dtype=float).reshape(len(rows), 3),
        )
    logger.info("checkpoint written to %s at step %d", path, sim.macro.step)
    return path


def load_checkpoint(sim: Simulation, path: Path) -> Simulation:
    """Restore ``sim`` in place; its config must hash to the stored one."""
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != FORMAT_VERSION:
            raise ConfigError("unsupported checkpoint format", details={"format": meta.get("format")})
        if meta["config_hash"] != sim.cfg.restart_hash():
            raise ConfigError(
                "checkpoint was written with a different configuration",
                details={"stored": meta["config_hash"], "current": sim.cfg.restart_hash()},
            )
        sim.macro.u = data["u"].copy()
        sim.macro.p = data["p"].copy()
        sim.macro.tau = project_stress(data["tau"], sim.mesh)
        sim.particles = sim.particles.with_ensembles(data["particles"].copy())
        sim.ledger.rows = [
            (int(s), *map(float, v)) for s, v in zip(data["ledger_steps"], data["ledger_values"])
        ]
    sim.ledger.violations = int(meta["ledger"]["violations"])
    sim.ledger.unconverged = int(meta["ledger"]["unconverged"])
    sim.max_divergence = float(meta["max_divergence"])
    sim.macro.step = int(meta["step"])
    sim.macro.t = float(meta["t"])
    logger.info("restarted from %s at step %d", path, sim.macro.step)
    return sim
