"""Release-gate checks: accounting identities, the residual-employment oracle
and the spectral fit on a synthetic series.

Each check returns a :class:`Check`; :func:`run_checks` runs them all. The
runs are short so the gate finishes in about a minute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .experiments import run_simulation
from .observables import fit_ou, power_spectrum, residual_employment_oracle
from .params import ModelParams, PolicyParams

MONEY_TOL = 1e-6
BANK_TOL = 1e-12

# One short run per phase of the no-channel model, keyed by label.
PHASE_POINTS = {
    "FE": dict(R=2.0, theta=10.0),
    "FU": dict(R=0.5, theta=math.inf),
    "EC": dict(R=2.0, theta=1.0),
    "RU": dict(R=2.0, theta=0.5),
}
NO_CHANNELS = dict(gamma0=0.0, alpha_gamma=0.0, alpha_c=0.0)

# Constant-wage setting with fragility-driven hiring.
CONSTANT_WAGE = dict(gamma_w=0.0, beta=0.0, theta=5.0, c0=0.5, alpha_c=0.0,
                     alpha_gamma=0.0, delta=0.02, phi=0.1, eta_minus=0.1)


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}: {self.detail}"


def check_accounting(n_firms: int = 200, T: int = 3000, seed: int = 0) -> Check:
    """Money drift and the bank's zero-profit residual in every phase."""
    worst_drift = worst_bank = 0.0
    for label, point in PHASE_POINTS.items():
        params = ModelParams(n_firms=n_firms, seed=seed, **NO_CHANNELS, **point)
        rec = run_simulation(params, PolicyParams(rho_star=0.0), T)
        worst_drift = max(worst_drift, float(np.abs(rec.drift).max()) / n_firms)
        worst_bank = max(worst_bank, float(np.abs(rec.bank_residual).max()))
    params = ModelParams(n_firms=n_firms, seed=seed, theta=2.0)
    rec = run_simulation(params, PolicyParams(phi_pi=0.5, phi_eps=0.5), T)
    worst_drift = max(worst_drift, float(np.abs(rec.drift).max()) / n_firms)
    worst_bank = max(worst_bank, float(np.abs(rec.bank_residual).max()))
    ok = worst_drift < MONEY_TOL and worst_bank < BANK_TOL
    return Check("accounting", ok,
                 f"max |drift|/N_F = {worst_drift:.2e}, max bank residual/X = {worst_bank:.2e}")


def check_residual_employment(n_firms: int = 100, T: int = 150_000, R: float = 0.5) -> Check:
    """Scaling with gamma0 and a plausible critical ratio implied by the oracle."""
    eps = {}
    for g0 in (1e-3, 1e-4):
        params = ModelParams(n_firms=n_firms, R=R, gamma0=g0, **CONSTANT_WAGE)
        rec = run_simulation(params, PolicyParams(rho_star=0.0), T)
        eps[g0] = float(rec.epsilon[T // 2:].mean())
    ratios = {g0: g0 / e for g0, e in eps.items()}
    spread = abs(ratios[1e-3] - ratios[1e-4]) / ratios[1e-3]
    # invert the oracle for the critical ratio implied at gamma0 = 1e-3
    a = ratios[1e-3] - 1e-3
    r_c = R * (1 + a) / (1 - a)
    pred = residual_employment_oracle(R, r_c, 1e-4)
    ok = spread < 0.1 and 0.6 < r_c < 1.2 and abs(eps[1e-4] / pred - 1) < 0.15
    return Check("residual employment", ok,
                 f"gamma0/eps = {ratios[1e-3]:.4f}, {ratios[1e-4]:.4f} "
                 f"(spread {spread:.1%}), implied R_c = {r_c:.3f}")


def check_spectral_fit(omega0: float = 0.01, n: int = 2**18, seed: int = 0,
                       replicas: int = 4) -> Check:
    """AR(1) series with known decay; the fitted corner must land within 10%.

    Periodograms of ``replicas`` independent series are averaged first.
    """
    a = math.exp(-omega0)
    spectra = [power_spectrum(ar1_series(a, n, seed + k)) for k in range(replicas)]
    w = spectra[0][0]
    p = np.mean([s[1] for s in spectra], axis=0)
    fit = fit_ou(w, p)
    err = abs(fit.omega0 / omega0 - 1)
    return Check("spectral fit", fit.ok and err < 0.1,
                 f"omega0 = {fit.omega0:.4g} for true {omega0:.4g} ({err:.1%})")


def ar1_series(a: float, n: int, seed: int = 0) -> np.ndarray:
    """``x[t] = a x[t-1] + noise`` with unit Gaussian noise, from zero."""
    noise = np.random.default_rng(seed).standard_normal(n)
    return lfilter([1.0], [1.0, -a], noise)


def run_checks(quick: bool = False) -> list[Check]:
    checks = [check_accounting(), check_spectral_fit()]
    if not quick:
        checks.append(check_residual_employment())
    return checks
