"""Run configuration shared by the CLI and the harnesses.

A :class:`RunConfig` is read from the JSON file named by the environment
variable ``RESURGENCE_CONFIG`` (if set); command-line flags override it.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

from .convflow import OdeParams, QuadParams
from .germs import DEFAULT_N, StepPolicy

ENV_VAR = "RESURGENCE_CONFIG"


@dataclass(frozen=True)
class RunConfig:
    truncation: int = DEFAULT_N
    ode_h_max: float = OdeParams.h_max
    ode_tol: float = OdeParams.tol
    quad_m: int | None = None
    quad_q: int | None = None
    quad_tol: float = QuadParams.tol
    quad_method: str = QuadParams.method
    mc_samples: int = QuadParams.samples
    sampler_density: int = 1
    seed: int = 0
    step_fraction: float = StepPolicy.step_fraction
    continuation_tol: float = StepPolicy.tol
    out_dir: str = "."
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("ode_h_max", "ode_tol", "quad_tol", "continuation_tol", "step_fraction"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.truncation < 0:
            raise ValueError("truncation must be nonnegative")
        if self.quad_method not in ("lattice", "montecarlo", "auto"):
            raise ValueError("quad_method must be lattice, montecarlo or auto")

    def ode(self) -> OdeParams:
        return OdeParams(h_max=self.ode_h_max, tol=self.ode_tol)

    def quad(self) -> QuadParams:
        return QuadParams(m=self.quad_m, q=self.quad_q, tol=self.quad_tol, method=self.quad_method,
                          samples=self.mc_samples, seed=self.seed)

    def policy(self) -> StepPolicy:
        return StepPolicy(step_fraction=self.step_fraction, tol=self.continuation_tol)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown RunConfig keys: {sorted(unknown)}")
        return cls(**data)

    def override(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def load(path: str | None = None) -> RunConfig:
    """Config from ``path`` or ``$RESURGENCE_CONFIG``; defaults otherwise."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return RunConfig()
    with open(path) as fh:
        return RunConfig.from_json(json.load(fh))
