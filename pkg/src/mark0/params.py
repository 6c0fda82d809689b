"""Model and policy parameter sets.

Rates (rho_star, pi_star, the gammas) are per time step. The defaults are the
baseline calibration used throughout the natural-state and policy runs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Any


class ParameterError(ValueError):
    """Raised when a parameter set violates its invariants."""


@dataclass(frozen=True)
class ModelParams:
    """Behavioral and structural knobs of the economy.

    ``R`` is the hiring/firing ratio ``eta_plus0 / eta_minus0``. ``theta`` is the
    bankruptcy threshold on debt over payroll; ``math.inf`` disables defaults.
    """

    n_firms: int = 2000
    c0: float = 0.5
    beta: float = 2.0
    gamma_p: float = 0.05
    gamma_w: float = 0.05
    R: float = 2.0
    eta_minus: float = 0.1
    delta: float = 0.02
    theta: float = 3.0
    phi: float = 0.1
    f: float = 0.5
    alpha_c: float = 4.0
    alpha_gamma: float = 50.0
    gamma0: float = 0.0
    seed: int = 0

    @property
    def eta_plus(self) -> float:
        return self.R * self.eta_minus

    def validate(self) -> "ModelParams":
        if int(self.n_firms) != self.n_firms or self.n_firms <= 0:
            raise ParameterError("n_firms must be a positive integer")
        if not self.R > 0:
            raise ParameterError("R must be > 0")
        if not 0 < self.eta_minus <= 1:
            raise ParameterError("eta_minus must be in (0, 1]")
        for name in ("c0", "gamma_p", "gamma_w", "delta", "phi", "f"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ParameterError(f"{name} must be in [0, 1]")
        if self.gamma_p >= 1 or self.gamma_w >= 1:
            raise ParameterError("gamma_p and gamma_w must be < 1")
        if not self.theta > 0:
            raise ParameterError("theta must be > 0 (use inf for no bankruptcy)")
        for name in ("beta", "alpha_c", "alpha_gamma", "gamma0"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ParameterError(f"{name} must be finite and >= 0")
        if self.seed < 0:
            raise ParameterError("seed must be >= 0")
        return self


@dataclass(frozen=True)
class PolicyParams:
    """Central Bank knobs of the Taylor rule and the EMA weight."""

    rho_star: float = 0.02
    phi_pi: float = 0.0
    phi_eps: float = 0.0
    pi_star: float = 0.002
    eps_star: float = 0.95
    omega: float = 0.2

    def validate(self) -> "PolicyParams":
        if self.phi_pi < 0 or self.phi_eps < 0:
            raise ParameterError("phi_pi and phi_eps must be >= 0")
        if not 0 < self.eps_star <= 1:
            raise ParameterError("eps_star must be in (0, 1]")
        if not 0 < self.omega <= 1:
            raise ParameterError("omega must be in (0, 1]")
        if not math.isfinite(self.rho_star) or not math.isfinite(self.pi_star):
            raise ParameterError("rho_star and pi_star must be finite")
        return self


MODEL_FIELDS = tuple(f.name for f in fields(ModelParams))
POLICY_FIELDS = tuple(f.name for f in fields(PolicyParams))


def split_overrides(overrides: dict[str, Any]) -> tuple[dict[str, Any], dict[str, Any]]:
    """Partition a flat mapping into model and policy keyword sets."""
    model, policy = {}, {}
    for key, value in overrides.items():
        if key in MODEL_FIELDS:
            model[key] = value
        elif key in POLICY_FIELDS:
            policy[key] = value
        else:
            raise ParameterError(f"unknown parameter {key!r}")
    return model, policy


def with_overrides(
    params: ModelParams, policy: PolicyParams, overrides: dict[str, Any]
) -> tuple[ModelParams, PolicyParams]:
    model_kw, policy_kw = split_overrides(overrides)
    if "n_firms" in model_kw:
        model_kw["n_firms"] = int(model_kw["n_firms"])
    if "seed" in model_kw:
        model_kw["seed"] = int(model_kw["seed"])
    return (
        replace(params, **model_kw).validate(),
        replace(policy, **policy_kw).validate(),
    )


def as_dict(params: ModelParams, policy: PolicyParams) -> dict[str, Any]:
    out = asdict(params)
    out.update(asdict(policy))
    return out
