"""Agent-based macroeconomy with interest rates and a Taylor-rule Central Bank.

``economy`` holds the state and the step kernel, ``banking`` the rate rules,
``observables`` the summaries and spectral fits, ``experiments`` the run,
ensemble, sweep and shock drivers, and ``io`` / ``cli`` the file formats and
command line.
"""

from .economy import ConsistencyError, EconomyState, init_economy, step
from .experiments import (
    Axis,
    ShockSpec,
    SweepSpec,
    ensemble,
    monetary_shock,
    run_simulation,
    sweep,
)
from .observables import RunRecord, RunSummary, classify_phase, fit_ou, power_spectrum, summarize
from .params import ModelParams, ParameterError, PolicyParams

__version__ = "0.1.0"

__all__ = [
    "Axis", "ConsistencyError", "EconomyState", "ModelParams", "ParameterError",
    "PolicyParams", "RunRecord", "RunSummary", "ShockSpec", "SweepSpec",
    "classify_phase", "ensemble", "fit_ou", "init_economy", "monetary_shock",
    "power_spectrum", "run_simulation", "step", "summarize", "sweep",
]
