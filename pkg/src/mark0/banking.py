"""Central Bank, private banks, and the two rate-sensitivity channels.

Everything here is a pure function of its arguments and compiled with numba
so the simulation kernel can call it directly. All functions are also plain
callables from Python.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

EPS_FLOOR = 1e-3  # smoothed employment floor before the Taylor log
EMPLOYMENT_STEP = 1.025


@njit(cache=True)
def ema_update(smoothed, x, omega):
    """One step of an exponential moving average."""
    return omega * x + (1.0 - omega) * smoothed


@njit(cache=True)
def effective_employment_target(eps_smoothed, eps_star):
    """One-step employment target: at most 2.5% above the current level."""
    return min(EMPLOYMENT_STEP * eps_smoothed, eps_star)


@njit(cache=True)
def taylor_rate(pi_smoothed, eps_smoothed, rho_star, phi_pi, phi_eps, pi_star, eps_star):
    """Base rate set by the Central Bank, floored at zero.

    ``eps_smoothed`` is clamped below at ``EPS_FLOOR`` so the log stays finite
    in a collapsed economy.
    """
    eps_s = max(eps_smoothed, EPS_FLOOR)
    target = effective_employment_target(eps_s, eps_star)
    rho0 = rho_star + 10.0 * phi_pi * (pi_smoothed - pi_star)
    if phi_eps != 0.0:
        rho0 += phi_eps * math.log(eps_s / target)
    return max(rho0, 0.0)


@njit(cache=True)
def bank_rates(rho0, defaults, loans, deposits, f):
    """Zero-profit loan and deposit rates.

    A fraction ``f`` of the default costs is charged on loans, the rest on
    deposits. With no outstanding loans the whole cost lands on deposits.
    Returns ``(rho_l, rho_d)``.
    """
    if deposits <= 0.0:
        raise ValueError("total deposits are zero: the banking system is drained")
    if loans > 0.0:
        rho_l = rho0 + f * defaults / loans
        rho_d = (rho0 * loans - (1.0 - f) * defaults) / deposits
    else:
        rho_l = rho0
        rho_d = -defaults / deposits
    return rho_l, rho_d


@njit(cache=True)
def gamma_sensitivity(rho_l_smoothed, pi_smoothed, alpha_gamma, gamma0):
    """Firms' fragility sensitivity driven by the smoothed real loan rate."""
    return max(alpha_gamma * (rho_l_smoothed - pi_smoothed), gamma0)


@njit(cache=True)
def consumption_propensity(pi_smoothed, rho_d_smoothed, c0, alpha_c):
    c = c0 * (1.0 + alpha_c * (pi_smoothed - rho_d_smoothed))
    return min(max(c, 0.0), 1.0)


@njit(cache=True)
def consumption_budget(savings, total_wages, rho_d, pi_smoothed, rho_d_smoothed, c0, alpha_c):
    """Household propensity ``c`` and budget ``C_B = c (S + W_T + rho_d S)``."""
    c = consumption_propensity(pi_smoothed, rho_d_smoothed, c0, alpha_c)
    return c, c * (savings + total_wages + rho_d * savings)


@njit(cache=True)
def allocate_demand(budget, prices, active, beta, pbar, out):
    """Split the consumption budget across active firms by a logit on price.

    Writes goods demanded per firm into ``out`` so that
    ``sum(prices * out) == budget``. Inactive firms get zero.
    """
    n = prices.shape[0]
    top = -np.inf
    for i in range(n):
        if active[i]:
            z = -beta * prices[i] / pbar
            if z > top:
                top = z
    total = 0.0
    for i in range(n):
        if active[i]:
            w = math.exp(-beta * prices[i] / pbar - top)
            out[i] = w
            total += w
        else:
            out[i] = 0.0
    if total == 0.0:
        return out
    for i in range(n):
        if active[i]:
            out[i] = budget * out[i] / total / prices[i]
    return out


def demand(budget, prices, beta, pbar, active=None):
    """Convenience wrapper around :func:`allocate_demand` returning a new array."""
    prices = np.asarray(prices, dtype=np.float64)
    if active is None:
        active = np.ones(prices.shape[0], dtype=np.bool_)
    out = np.empty_like(prices)
    return allocate_demand(float(budget), prices, np.asarray(active, dtype=np.bool_), float(beta), float(pbar), out)
