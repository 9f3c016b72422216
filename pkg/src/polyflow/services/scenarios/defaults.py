"""Published parameter sets of the four benchmark runs and config construction."""

import logging
from pathlib import Path
from typing import Any

from dotenv import dotenv_values
from pydantic import ValidationError

from polyflow.core.errors import ConfigError
from polyflow.schemas.config import (
    FENE_B,
    BandwidthPolicy,
    ExtensionMode,
    OptimizerConfig,
    Potential,
    PotentialKind,
    ScenarioKind,
    SimConfig,
)

logger = logging.getLogger(__name__)

FENE_BANDWIDTH = 0.01
N_PARTICLES = 200

COUETTE_HOOKEAN = {
    "Re": 0.11,
    "Wi": 0.1,
    "eta_s": 0.11,
    "eps_p": 0.89,
    "M": 40,
    "dt": 1e-3,
    "N": N_PARTICLES,
    "t_end": 1.0,
}
COUETTE_PROBES = (0.2, 0.4, 0.6, 0.8)

FENE_EXTENSION = {
    "Re": 1.0,
    "Wi": 1.0,
    "eta_s": 0.0,
    "eps_p": 1.0,
    "dt": 1e-3,
    "N": N_PARTICLES,
    "rate": 4.0,
}
EXTENSION_SNAPSHOTS = (3.0, 8.0, 12.0)
CONSTANT_EXTENSION_T_END = 8.0
EXTENSION_RATES = (4.0, 5.0, 6.0)

FENE_SHEAR = {
    "Re": 1.2757,
    "Wi": 49.62,
    "eta_s": 0.0521,
    "eps_p": 0.9479,
    "M": 20,
    "dt": 1e-3,
    "N": N_PARTICLES,
    "t_end": 50.0,
}
SHEAR_PROBES = (0.2, 0.5, 0.8, 1.0)

CAVITY = {
    "Re": 1.0,
    "Wi": 0.1,
    "eta_s": 0.11,
    "eps_p": 0.889,
    "dt": 1e-3,
    "N": N_PARTICLES,
    "t_end": 1.0,
    "Lx": 1.0,
    "Ly": 1.0,
    "U": 1.0,
}
# coarse mesh per cavity height
CAVITY_MESHES = {0.2: (50, 20), 0.5: (50, 25), 1.0: (50, 50)}
CAVITY_HEIGHTS = (0.2, 0.5, 1.0)
CAVITY_WEISSENBERG = (0.1, 1.0)

FENE = Potential(kind=PotentialKind.fene, b=FENE_B)
HOOKEAN = Potential(kind=PotentialKind.hookean)


def extension_t_end(mode: ExtensionMode, rate: float, Wi: float = 1.0) -> float:
    """Startup runs relax for 10 Wi plus 2 after the flow stops at 9/r."""
    if mode == ExtensionMode.startup:
        return 9.0 / rate + 10.0 * Wi + 2.0
    return CONSTANT_EXTENSION_T_END


def cavity_mesh(Ly: float, nx: int = 50) -> tuple[int, int]:
    """Tabulated mesh for the published heights; otherwise square-ish cells with nx columns."""
    for height, shape in CAVITY_MESHES.items():
        if abs(Ly - height) < 1e-12 and nx == shape[0]:
            return shape
    return nx, max(2, int(round(nx * Ly)))


def base_parameters(kind: ScenarioKind) -> dict[str, Any]:
    if kind == ScenarioKind.couette_hookean:
        return {**COUETTE_HOOKEAN, "potential": HOOKEAN, "bandwidth": BandwidthPolicy.median_rule()}
    if kind == ScenarioKind.fene_extension:
        return {**FENE_EXTENSION, "potential": FENE, "bandwidth": BandwidthPolicy.fixed(FENE_BANDWIDTH)}
    if kind == ScenarioKind.fene_shear:
        return {**FENE_SHEAR, "potential": FENE, "bandwidth": BandwidthPolicy.fixed(FENE_BANDWIDTH)}
    nx, ny = cavity_mesh(CAVITY["Ly"])
    return {
        **CAVITY,
        "nx": nx,
        "ny": ny,
        "potential": FENE,
        "bandwidth": BandwidthPolicy.fixed(FENE_BANDWIDTH),
    }


def scenario_config(kind: ScenarioKind | str, **overrides: Any) -> SimConfig:
    """Published defaults for ``kind`` with ``overrides`` applied; None values are ignored.

    Derived defaults (extension t_end, cavity mesh) follow the overridden
    rate, mode and height unless they are overridden themselves.
    """
    try:
        kind = ScenarioKind(kind)
    except ValueError as e:
        raise ConfigError(f"unknown scenario {kind!r}", details={"known": [k.value for k in ScenarioKind]}) from e
    given = {k: v for k, v in overrides.items() if v is not None}
    params = {**base_parameters(kind), **given, "scenario": kind}
    if kind == ScenarioKind.fene_extension and "t_end" not in given:
        mode = ExtensionMode(params.get("mode", ExtensionMode.startup))
        params["t_end"] = extension_t_end(mode, float(params["rate"]), float(params["Wi"]))
    if kind == ScenarioKind.cavity and "Ly" in given and not {"nx", "ny"} & given.keys():
        params["nx"], params["ny"] = cavity_mesh(float(params["Ly"]))
    try:
        return SimConfig(**params)
    except ValidationError as e:
        raise ConfigError(
            "invalid scenario configuration",
            details={"errors": [f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()]},
        ) from e


def self_test() -> list[str]:
    """Compare every scenario's defaults with the published tables; returns mismatches."""
    problems: list[str] = []
    tables = {
        ScenarioKind.couette_hookean: COUETTE_HOOKEAN,
        ScenarioKind.fene_extension: FENE_EXTENSION,
        ScenarioKind.fene_shear: FENE_SHEAR,
        ScenarioKind.cavity: CAVITY,
    }
    for kind, table in tables.items():
        cfg = scenario_config(kind)
        for key, expected in table.items():
            actual = getattr(cfg, key)
            if actual != expected:
                problems.append(f"{kind.value}.{key}: {actual!r} != {expected!r}")
        fene = kind != ScenarioKind.couette_hookean
        if cfg.potential.is_fene != fene or (fene and cfg.potential.b != FENE_B):
            problems.append(f"{kind.value}.potential: {cfg.potential!r}")
        if fene and cfg.bandwidth.h != FENE_BANDWIDTH:
            problems.append(f"{kind.value}.bandwidth: {cfg.bandwidth!r}")
    for problem in problems:
        logger.error("scenario default mismatch: %s", problem)
    return problems


_NESTED = {"potential": ("kind", "b"), "bandwidth": ("kind", "h"), "optimizer": tuple(OptimizerConfig.model_fields)}


def load_config_file(path: Path) -> dict[str, Any]:
    """Overrides from a flat KEY=VALUE file; keys mirror SimConfig fields, case-insensitive.

    Nested models are addressed with a prefix (``POTENTIAL_KIND=fene``,
    ``OPTIMIZER_MAX_ITERS=200``); ``BANDWIDTH=median`` and ``BANDWIDTH=0.01``
    are accepted as shorthands.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config file not found", details={"path": str(path)})
    fields = {name.lower(): name for name in SimConfig.model_fields}
    flat: dict[str, Any] = {}
    nested: dict[str, dict[str, Any]] = {}
    unknown: list[str] = []
    for raw_key, value in dotenv_values(path).items():
        if value is None or value == "":
            continue
        key = raw_key.strip().lower()
        if key in fields:
            flat[fields[key]] = value
            continue
        for parent, subs in _NESTED.items():
            prefix = parent + "_"
            if key.startswith(prefix) and key[len(prefix):] in subs:
                nested.setdefault(parent, {})[key[len(prefix):]] = value
                break
        else:
            unknown.append(raw_key)
    if unknown:
        raise ConfigError("unknown configuration keys", details={"keys": unknown, "path": str(path)})
    for parent, values in nested.items():
        if parent in flat:
            raise ConfigError(f"{parent} given both as a shorthand and field by field", details={"path": str(path)})
        flat[parent] = values
    logger.debug("loaded %d config keys from %s", len(flat), path)
    return flat
