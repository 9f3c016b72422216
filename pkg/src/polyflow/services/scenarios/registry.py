"""Scenario name to runner dispatch for the CLI and the HTTP API."""

from pathlib import Path
from typing import Any

from polyflow.core.errors import ConfigError
from polyflow.schemas.config import ScenarioKind
from polyflow.services.scenarios.cavity import run_cavity
from polyflow.services.scenarios.couette import run_couette_hookean, run_fene_shear
from polyflow.services.scenarios.defaults import scenario_config
from polyflow.services.scenarios.extension import run_fene_extension
from polyflow.services.scenarios.outputs import RunResult


def run_scenario(
    kind: ScenarioKind | str,
    workers: int | None = None,
    resume: Path | None = None,
    checkpoint: Path | None = None,
    **overrides: Any,
) -> RunResult:
    cfg = scenario_config(kind, **overrides)
    if (resume or checkpoint) and cfg.scenario != ScenarioKind.cavity:
        raise ConfigError("checkpoints are only supported for the cavity scenario", details={"scenario": cfg.scenario.value})
    if cfg.scenario == ScenarioKind.couette_hookean:
        return run_couette_hookean(workers=workers, **overrides)
    if cfg.scenario == ScenarioKind.fene_shear:
        return run_fene_shear(workers=workers, **overrides)
    if cfg.scenario == ScenarioKind.fene_extension:
        return run_fene_extension(**overrides)
    return run_cavity(workers=workers, resume=resume, checkpoint=checkpoint, **overrides)


def scenario_defaults() -> dict[str, dict[str, Any]]:
    return {kind.value: scenario_config(kind).model_dump(mode="json") for kind in ScenarioKind}
