"""Macro observables, run summaries, spectral diagnostics and phase labels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.optimize import least_squares

from .economy import (
    COL_BANK,
    COL_DRIFT,
    M_S,
    M_SLO,
    RECORD_COLUMNS,
    EconomyState,
    money_drift,
)

# Phase thresholds; the labels are a proxy for visual identification.
FE_MAX_U = 0.1
EC_MIN_AMPLITUDE = 0.25
FU_MIN_U = 0.6
PHASES = ("EC", "FU", "FE", "RU")  # tie-break order, strongest first

MIN_SPECTRUM_LENGTH = 2**10
SKIP_LOW_BINS = 3
LOG_WINDOW = 100
OMEGA_MAX = 1.0  # upper edge of the fitted band, radians per step
BINS_PER_DECADE = 20


class ObservableError(ValueError):
    """Raised when a series is too short or otherwise unusable."""


@dataclass
class RunRecord:
    """Per-step macro series of one run, in CSV column order."""

    t: np.ndarray
    u: np.ndarray
    epsilon: np.ndarray
    pi: np.ndarray
    rho0: np.ndarray
    rho_l: np.ndarray
    rho_d: np.ndarray
    pbar: np.ndarray
    wbar: np.ndarray
    S: np.ndarray
    Eplus: np.ndarray
    Eminus: np.ndarray
    defaults: np.ndarray
    bankruptcies: np.ndarray
    Gamma: np.ndarray
    c: np.ndarray
    drift: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bank_residual: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def from_array(cls, rows: np.ndarray) -> "RunRecord":
        rows = np.asarray(rows, dtype=np.float64)
        cols = {name: rows[:, j].copy() for j, name in enumerate(RECORD_COLUMNS)}
        extra = {}
        for name, j in (("drift", COL_DRIFT), ("bank_residual", COL_BANK)):
            extra[name] = rows[:, j].copy() if rows.shape[1] > j else np.zeros(rows.shape[0])
        return cls(**cols, **extra)

    def as_array(self) -> np.ndarray:
        return np.column_stack([getattr(self, name) for name in RECORD_COLUMNS])

    def __len__(self) -> int:
        return self.t.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunRecord):
            return NotImplemented
        return np.array_equal(self.as_array(), other.as_array(), equal_nan=True)


@dataclass(frozen=True)
class RunSummary:
    """Window statistics of one run plus its worst accounting residuals."""

    mean_u: float
    amplitude: float
    mean_pi: float
    var_eps: float
    phase: str
    max_drift: float = 0.0
    max_bank_residual: float = 0.0


@dataclass(frozen=True)
class SpectrumFit:
    omega: np.ndarray
    power: np.ndarray
    I0: float
    omega0: float
    residual: float
    ok: bool
    message: str = ""


def weighted_price_and_inflation(prices, production, pbar_prev=None, active=None):
    """Production-weighted mean price and the inflation rate against ``pbar_prev``.

    Falls back to the plain mean price when total production is zero.
    ``pbar_prev=None`` marks the first step, where inflation is zero.
    """
    p = np.asarray(prices, dtype=np.float64)
    y = np.asarray(production, dtype=np.float64)
    if active is not None:
        mask = np.asarray(active, dtype=bool)
        p, y = p[mask], y[mask]
    if p.size == 0:
        raise ObservableError("no active firm")
    total = y.sum()
    pbar = float(np.dot(p, y) / total) if total > 0 else float(p.mean())
    if pbar_prev is None:
        return pbar, 0.0
    if pbar_prev <= 0:
        raise ObservableError("previous mean price must be positive")
    return pbar, (pbar - pbar_prev) / pbar_prev


def _window(series, t_eq: int) -> np.ndarray:
    x = np.asarray(series, dtype=np.float64)[int(t_eq):]
    if x.size == 0:
        raise ObservableError(f"no samples after t_eq={t_eq}")
    return x


def cycle_amplitude(u, t_eq: int = 0) -> float:
    """Peak-to-trough unemployment over the measurement window."""
    x = _window(u, t_eq)
    return float(x.max() - x.min())


def classify_phase(summary: RunSummary | None = None, *, mean_u=None, amplitude=None,
                   mean_pi=None) -> str:
    """Phase label from window statistics.

    EC on large cycles, FU on high unemployment with deflation, FE on low
    unemployment, RU otherwise; checked in that order.
    """
    if summary is not None:
        mean_u, amplitude, mean_pi = summary.mean_u, summary.amplitude, summary.mean_pi
    if amplitude >= EC_MIN_AMPLITUDE:
        return "EC"
    if mean_u > FU_MIN_U and mean_pi < 0:
        return "FU"
    if mean_u < FE_MAX_U:
        return "FE"
    return "RU"


def summarize(record: RunRecord, t_eq: int) -> RunSummary:
    u = _window(record.u, t_eq)
    pi = _window(record.pi, t_eq)
    eps = _window(record.epsilon, t_eq)
    mean_u = float(u.mean())
    amplitude = float(u.max() - u.min())
    mean_pi = float(pi.mean())
    phase = classify_phase(mean_u=mean_u, amplitude=amplitude, mean_pi=mean_pi)
    drift = float(np.abs(record.drift).max()) if record.drift.size else 0.0
    bank = float(np.abs(record.bank_residual).max()) if record.bank_residual.size else 0.0
    return RunSummary(mean_u, amplitude, mean_pi, float(eps.var()), phase, drift, bank)


def majority_phase(labels) -> str:
    """Most frequent label; ties go to the first in ``PHASES`` order."""
    counts = {p: 0 for p in PHASES}
    for lab in labels:
        counts[lab] += 1
    best = max(counts.values())
    return next(p for p in PHASES if counts[p] == best)


def power_spectrum(series, t_eq: int = 0, smooth: int | None = None):
    """One-sided periodogram of the demeaned series after ``t_eq``.

    The window is truncated to the largest power of two. Returns angular
    frequencies ``2 pi k / n`` for ``k = 1 .. n/2`` and the power
    ``|X_k|^2 / n``. With ``smooth``, the log power is averaged over a
    moving window of that many bins.
    """
    x = _window(series, t_eq)
    if x.size < MIN_SPECTRUM_LENGTH:
        raise ObservableError(f"series too short for a spectrum: {x.size} < {MIN_SPECTRUM_LENGTH}")
    n = 1 << (x.size.bit_length() - 1)
    x = x[:n] - x[:n].mean()
    power = np.abs(np.fft.rfft(x)[1:n // 2 + 1]) ** 2 / n
    omega = 2.0 * np.pi * np.arange(1, n // 2 + 1) / n
    if smooth:
        power = np.exp(uniform_filter1d(np.log(np.maximum(power, np.finfo(float).tiny)),
                                        size=int(smooth), mode="nearest"))
    return omega, power


def ou_spectrum(omega, I0, omega0):
    """Lorentzian ``I0 omega0^2 / (omega0^2 + omega^2)``."""
    omega = np.asarray(omega, dtype=np.float64)
    return I0 * omega0**2 / (omega0**2 + omega**2)


def log_bin(omega, power, per_decade: int = BINS_PER_DECADE):
    """Geometric-mean frequency and mean log power in log-spaced bins."""
    lw = np.log10(omega)
    edges = np.arange(lw[0], lw[-1] + 1.0 / per_decade, 1.0 / per_decade)
    idx = np.digitize(lw, edges)
    keys, start = np.unique(idx, return_index=True)
    counts = np.diff(np.append(start, idx.size))
    w = np.exp(np.add.reduceat(np.log(omega), start) / counts)
    logp = np.add.reduceat(np.log(power), start) / counts
    return w, logp, counts


def fit_ou(omega, power, skip: int = SKIP_LOW_BINS, omega_max: float = OMEGA_MAX,
           per_decade: int = BINS_PER_DECADE) -> SpectrumFit:
    """Least-squares fit of the log power to the log of the OU form.

    The band runs from the ``skip``-th bin up to ``omega_max``; above about
    one radian per step the sampled spectrum bends away from the
    continuous-time form. Within the band the log power is averaged in
    log-spaced bins and every bin gets equal weight, so each decade of
    frequency counts the same, as on a log-log plot. A corner at either
    edge of the band means there is no resolvable knee; the fit is then
    returned with ``ok=False`` and the reason in ``message``.
    """
    omega = np.asarray(omega, dtype=np.float64)
    power = np.asarray(power, dtype=np.float64)
    w, p = omega[skip:], power[skip:]
    keep = (p > 0) & (w <= omega_max)
    w, p = w[keep], p[keep]
    if w.size < 8:
        return SpectrumFit(omega, power, math.nan, math.nan, math.nan, False,
                           "too few positive bins to fit")
    wb, logp, _ = log_bin(w, p, per_decade)
    lo, hi = math.log(w[0]), math.log(w[-1])

    def resid(theta):
        log_i0, log_w0 = theta
        w0sq = math.exp(2 * log_w0)
        return logp - (log_i0 + np.log(w0sq / (w0sq + wb * wb)))

    # start from the plateau height and the half-power crossing
    plateau = float(np.mean(logp[:3]))
    half = np.flatnonzero(logp < plateau - math.log(2.0))
    guess = math.log(wb[half[0]]) if half.size else hi
    guess = min(max(guess, lo), hi)
    sol = least_squares(resid, x0=[plateau, guess], bounds=([-np.inf, lo], [np.inf, hi]))
    i0, w0 = math.exp(sol.x[0]), math.exp(sol.x[1])
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    edge = 1e-3 * (hi - lo)
    if not sol.success:
        return SpectrumFit(omega, power, i0, w0, rms, False, f"optimizer failed: {sol.message}")
    if sol.x[1] >= hi - edge:
        return SpectrumFit(omega, power, i0, w0, rms, False,
                           "corner at the upper band edge: spectrum is flat, not OU")
    if sol.x[1] <= lo + edge:
        return SpectrumFit(omega, power, i0, w0, rms, False,
                           "corner below the resolved band: series too short")
    return SpectrumFit(omega, power, i0, w0, rms, True)


def residual_employment_oracle(R: float, R_c: float, gamma0: float) -> float:
    """Predicted mean employment below the critical ratio.

    ``gamma0 / eps = (R_c - R) / (R_c + R) + gamma0``; returns 1 for ``R >= R_c``.
    """
    if R >= R_c:
        return 1.0
    if gamma0 <= 0:
        return 0.0
    return gamma0 / ((R_c - R) / (R_c + R) + gamma0)


def money_conservation_check(state: EconomyState) -> float:
    """``S + E+ - E- - M`` for the current state, summed without rounding loss."""
    return money_drift(state)


def money_total(state: EconomyState) -> float:
    act = state.active
    return math.fsum([float(state.macro[M_S]), float(state.macro[M_SLO]),
                      *state.E[act], *state.Elo[act]])


__all__ = [
    "FE_MAX_U", "EC_MIN_AMPLITUDE", "FU_MIN_U", "PHASES",
    "ObservableError", "RunRecord", "RunSummary", "SpectrumFit",
    "weighted_price_and_inflation", "cycle_amplitude", "classify_phase", "summarize",
    "majority_phase", "power_spectrum", "ou_spectrum", "log_bin", "fit_ou",
    "residual_employment_oracle", "money_conservation_check", "money_total",
]
