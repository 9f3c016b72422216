import hashlib
import json
import math
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

FENE_B = math.sqrt(50.0)
# fields that only set how long a run lasts or how often it reports
RUN_LENGTH_FIELDS = {"t_end", "output_every"}
FEASIBILITY_MARGIN = 1e-10
PROJECTION_MARGIN = 1e-6


class PotentialKind(str, Enum):
    hookean = "hookean"
    fene = "fene"


class Potential(BaseModel):
    """Spring law. ``b`` is the FENE extensibility and is ignored for Hookean springs."""

    model_config = ConfigDict(frozen=True)

    kind: PotentialKind = PotentialKind.hookean
    b: float = Field(FENE_B, gt=0.0)

    @property
    def is_fene(self) -> bool:
        return self.kind == PotentialKind.fene


class BandwidthKind(str, Enum):
    median_rule = "median_rule"
    fixed = "fixed"


class BandwidthPolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: BandwidthKind = BandwidthKind.median_rule
    h: float | None = Field(None, gt=0.0)

    @model_validator(mode="after")
    def fixed_needs_h(self) -> "BandwidthPolicy":
        if self.kind == BandwidthKind.fixed and self.h is None:
            raise ValueError("fixed bandwidth policy requires h")
        return self

    @classmethod
    def median_rule(cls) -> "BandwidthPolicy":
        return cls(kind=BandwidthKind.median_rule)

    @classmethod
    def fixed(cls, h: float) -> "BandwidthPolicy":
        return cls(kind=BandwidthKind.fixed, h=h)


class OptimizerConfig(BaseModel):
    """Barzilai-Borwein settings for the proximal micro step.

    ``step_init`` is the first trial step along the gradient scaled by the
    inverse of the proximal plus spring Hessian; 1.0 takes the full explicit
    step in that metric. Backtracking compares against the worst of the last
    ``nonmonotone_memory`` accepted objective values.
    """

    model_config = ConfigDict(frozen=True)

    max_iters: int = Field(500, ge=1)
    grad_tol: float = Field(1e-8, gt=0.0)
    step_init: float = Field(1.0, gt=0.0)
    max_halvings: int = Field(60, ge=1)
    nonmonotone_memory: int = Field(10, ge=1)


class MicroStepConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    dt: float = Field(..., gt=0.0)
    Wi: float = Field(..., gt=0.0)
    optimizer: OptimizerConfig = OptimizerConfig()
    feasibility_margin: float = Field(FEASIBILITY_MARGIN, gt=0.0, lt=1.0)
    projection_margin: float = Field(PROJECTION_MARGIN, gt=0.0, lt=1.0)
    stability_slack: float = Field(1e-8, ge=0.0)


class ScenarioKind(str, Enum):
    couette_hookean = "couette-hookean"
    fene_extension = "fene-extension"
    fene_shear = "fene-shear"
    cavity = "cavity"


class ExtensionMode(str, Enum):
    startup = "startup"
    constant = "constant"


class ProjectionKind(str, Enum):
    consistent = "consistent"
    laplacian = "laplacian"


class SimConfig(BaseModel):
    """Nondimensional parameter set of one simulation.

    ``eps_p + eta_s`` is stored as given and not forced to one.
    """

    model_config = ConfigDict(extra="forbid")

    Re: float = Field(..., gt=0.0)
    Wi: float = Field(..., gt=0.0)
    eta_s: float = Field(..., ge=0.0)
    eps_p: float = Field(..., ge=0.0)
    potential: Potential = Potential()
    N: int = Field(200, ge=1)
    dt: float = Field(1e-3, gt=0.0)
    t_end: float = Field(1.0, gt=0.0)
    bandwidth: BandwidthPolicy = BandwidthPolicy()
    seed: int = Field(0, ge=0, lt=2**64)
    scenario: ScenarioKind = ScenarioKind.couette_hookean
    optimizer: OptimizerConfig = OptimizerConfig()
    output_every: int = Field(10, ge=1)
    projection: ProjectionKind = ProjectionKind.consistent

    # scenario geometry / forcing
    M: int = Field(40, ge=1)
    rate: float = Field(4.0, gt=0.0)
    mode: ExtensionMode = ExtensionMode.startup
    Lx: float = Field(1.0, gt=0.0)
    Ly: float = Field(1.0, gt=0.0)
    nx: int = Field(50, ge=1)
    ny: int = Field(50, ge=1)
    U: float = 1.0

    @field_validator("bandwidth", mode="before")
    @classmethod
    def bandwidth_shorthand(cls, v: object) -> object:
        # "median" or a bare number are accepted from flat config files
        if isinstance(v, str):
            text = v.strip().lower()
            if text in ("median", "median_rule", "med"):
                return BandwidthPolicy.median_rule()
            try:
                return BandwidthPolicy.fixed(float(text))
            except ValueError as e:
                raise ValueError(f"bandwidth must be 'median' or a positive number, got {v!r}") from e
        if isinstance(v, (int, float)):
            return BandwidthPolicy.fixed(float(v))
        return v

    def micro_step_config(self) -> MicroStepConfig:
        return MicroStepConfig(dt=self.dt, Wi=self.Wi, optimizer=self.optimizer)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def restart_hash(self) -> str:
        """Hash of everything but the run length; a checkpoint may be continued past its t_end."""
        payload = json.dumps(self.model_dump(mode="json", exclude=RUN_LENGTH_FIELDS), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


class FlowParams(BaseModel):
    """Macro solver parameters shared by the 2D and the 1D Couette solvers."""

    model_config = ConfigDict(frozen=True)

    Re: float = Field(..., gt=0.0)
    eta_s: float = Field(..., ge=0.0)
    dt: float = Field(..., gt=0.0)
    Wi: float = Field(1.0, gt=0.0)
    eps_p: float = Field(0.0, ge=0.0)

    @classmethod
    def from_sim(cls, cfg: "SimConfig") -> "FlowParams":
        return cls(Re=cfg.Re, eta_s=cfg.eta_s, dt=cfg.dt, Wi=cfg.Wi, eps_p=cfg.eps_p)
