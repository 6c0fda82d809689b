"""Firms, households and the one-step update of the economy.

Firms are stored column-wise (one array per attribute). The step kernel
follows a fixed order: macro averages, EMAs, Central Bank, bankruptcies and
firm updates, mid-step averages, bank rates, demand, accounting, revivals.
Random draws happen only when a rule fires, always in firm index order, so a
(params, seed) pair replays bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .banking import (
    allocate_demand,
    bank_rates,
    consumption_budget,
    ema_update,
    gamma_sensitivity,
    taylor_rate,
)
from .params import ModelParams, PolicyParams

MONEY_TOLERANCE = 1e-6  # relative to n_firms

# Layout of the macro state vector passed to the kernel.
M_S, M_PI, M_PI_T, M_RHOD_T, M_RHOL_T, M_U_T = 0, 1, 2, 3, 4, 5
M_RHO0, M_RHOL, M_RHOD, M_PBAR_PREV, M_GAMMA, M_C = 6, 7, 8, 9, 10, 11
M_T, M_DEFAULTS, M_NBANK, M_EPLUS, M_EMINUS, M_MONEY = 12, 13, 14, 15, 16, 17
M_SLO, M_DRIFT, M_SLO2 = 18, 19, 20
N_MACRO = 21

# Layout of the knob vector.
K_C0, K_BETA, K_GP, K_GW, K_R, K_ETA, K_DELTA, K_THETA = 0, 1, 2, 3, 4, 5, 6, 7
K_PHI, K_F, K_AC, K_AG, K_G0 = 8, 9, 10, 11, 12
K_RHO_STAR, K_PHI_PI, K_PHI_EPS, K_PI_STAR, K_EPS_STAR, K_OMEGA = 13, 14, 15, 16, 17, 18
N_KNOBS = 19

RECORD_COLUMNS = (
    "t", "u", "epsilon", "pi", "rho0", "rho_l", "rho_d", "pbar", "wbar",
    "S", "Eplus", "Eminus", "defaults", "bankruptcies", "Gamma", "c",
)
# The kernel also emits two diagnostics after the public columns: the money
# drift and the bank's no-profit residual relative to total deposits.
COL_DRIFT = len(RECORD_COLUMNS)
COL_BANK = COL_DRIFT + 1
N_RECORD = len(RECORD_COLUMNS) + 2

# Kernel status codes.
OK, MONEY_DRIFT, DRAINED = 0, 1, 2


class ConsistencyError(RuntimeError):
    """An accounting identity broke during a run."""


@dataclass
class FirmState:
    """A single firm, detached from the column store."""

    production: float
    price: float
    wage: float
    cash: float
    demand: float
    profit: float
    active: bool = True


@dataclass
class HouseholdSector:
    savings: float
    total_wages: float = 0.0
    budget: float = 0.0
    propensity: float = 0.5


@dataclass
class BankState:
    base_rate: float
    loan_rate: float
    deposit_rate: float
    defaults: float = 0.0
    loans: float = 0.0
    firm_deposits: float = 0.0


@dataclass
class EconomyState:
    """Full mutable state of one economy.

    ``macro`` holds the scalar state (savings, smoothed variables, rates...)
    at the ``M_*`` offsets; the firm columns are plain float arrays.
    """

    Y: np.ndarray
    p: np.ndarray
    W: np.ndarray
    E: np.ndarray
    Elo: np.ndarray  # low-order part of the cash balances
    D: np.ndarray
    P: np.ndarray
    active: np.ndarray
    macro: np.ndarray
    rng: np.random.Generator
    money: float = field(default=0.0)

    @property
    def n_firms(self) -> int:
        return self.Y.shape[0]

    @property
    def t(self) -> int:
        return int(self.macro[M_T])

    @property
    def savings(self) -> float:
        return float(self.macro[M_S])

    @property
    def gamma(self) -> float:
        return float(self.macro[M_GAMMA])

    @property
    def households(self) -> HouseholdSector:
        return HouseholdSector(savings=self.savings, propensity=float(self.macro[M_C]))

    @property
    def bank(self) -> BankState:
        eplus, eminus = cash_split(self.E, self.active)
        return BankState(
            base_rate=float(self.macro[M_RHO0]),
            loan_rate=float(self.macro[M_RHOL]),
            deposit_rate=float(self.macro[M_RHOD]),
            defaults=float(self.macro[M_DEFAULTS]),
            loans=eminus,
            firm_deposits=eplus,
        )

    def firm(self, i: int) -> FirmState:
        return FirmState(
            float(self.Y[i]), float(self.p[i]), float(self.W[i]), float(self.E[i]),
            float(self.D[i]), float(self.P[i]), bool(self.active[i]),
        )

    def copy(self) -> "EconomyState":
        rng = np.random.Generator(type(self.rng.bit_generator)())
        rng.bit_generator.state = self.rng.bit_generator.state
        return EconomyState(
            self.Y.copy(), self.p.copy(), self.W.copy(), self.E.copy(),
            self.Elo.copy(), self.D.copy(), self.P.copy(), self.active.copy(), self.macro.copy(),
            rng, self.money,
        )


def pack_knobs(params: ModelParams, policy: PolicyParams) -> np.ndarray:
    k = np.empty(N_KNOBS)
    k[K_C0], k[K_BETA], k[K_GP], k[K_GW] = params.c0, params.beta, params.gamma_p, params.gamma_w
    k[K_R], k[K_ETA], k[K_DELTA], k[K_THETA] = params.R, params.eta_minus, params.delta, params.theta
    k[K_PHI], k[K_F], k[K_AC], k[K_AG], k[K_G0] = (
        params.phi, params.f, params.alpha_c, params.alpha_gamma, params.gamma0,
    )
    k[K_RHO_STAR], k[K_PHI_PI], k[K_PHI_EPS] = policy.rho_star, policy.phi_pi, policy.phi_eps
    k[K_PI_STAR], k[K_EPS_STAR], k[K_OMEGA] = policy.pi_star, policy.eps_star, policy.omega
    return k


def make_rng(seed) -> np.random.Generator:
    """PCG64 stream for one run; ``seed`` may be an int or a SeedSequence."""
    return np.random.Generator(np.random.PCG64(seed))


def init_economy(
    params: ModelParams,
    policy: PolicyParams | None = None,
    seed=None,
    draws: np.ndarray | None = None,
) -> EconomyState:
    """Fresh economy with employment around one half.

    ``draws`` (shape ``(n_firms, 3)``) replaces the uniform draws for price,
    size and cash; it exists for hand-checkable set-ups.
    """
    params.validate()
    policy = policy or PolicyParams()
    n = int(params.n_firms)
    rng = make_rng(params.seed if seed is None else seed)
    if draws is None:
        draws = rng.random((n, 3))
    draws = np.asarray(draws, dtype=np.float64).reshape(n, 3)

    W = np.ones(n)
    p = 1.0 + 0.2 * (draws[:, 0] - 0.5)
    Y = (1.0 + 0.2 * (draws[:, 1] - 0.5)) / 2.0
    D = np.full(n, 0.5)
    E = W * Y * draws[:, 2]
    P = p * np.minimum(D, Y) - W * Y
    active = np.ones(n, dtype=np.bool_)

    macro = np.zeros(N_MACRO)
    macro[M_S] = n - math.fsum(E)
    macro[M_SLO] = math.fsum([float(n), -macro[M_S], *(-E)])
    eminus = 0.0
    deposits = macro[M_S] + E.sum()
    rho_l, rho_d = bank_rates(max(policy.rho_star, 0.0), 0.0, eminus, deposits, params.f)
    u0 = 1.0 - Y.sum() / n
    macro[M_PI] = 0.0
    macro[M_PI_T] = 0.0
    macro[M_RHO0] = max(policy.rho_star, 0.0)
    macro[M_RHOL], macro[M_RHOD] = rho_l, rho_d
    macro[M_RHOL_T], macro[M_RHOD_T] = rho_l, rho_d
    macro[M_U_T] = u0
    macro[M_PBAR_PREV] = np.nan
    macro[M_GAMMA] = params.gamma0
    macro[M_C] = params.c0
    macro[M_EPLUS] = E.sum()
    macro[M_EMINUS] = 0.0
    macro[M_MONEY] = float(n)
    return EconomyState(Y, p, W, E, np.zeros(n), D, P, active, macro, rng, money=float(n))


# ---------------------------------------------------------------------------
# Per-firm rules
# ---------------------------------------------------------------------------


@njit(cache=True)
def solvent(cash, wage, production, theta):
    """Continuation test ``E > -theta W Y``; ``theta = inf`` never defaults."""
    if math.isinf(theta):
        return True
    return cash > -theta * wage * production


@njit(cache=True)
def fragility(cash, wage, production, gamma):
    """Debt over payroll, clamped to ``[-1/gamma, 1/gamma]`` when gamma > 0."""
    payroll = wage * production
    if payroll <= 0.0:
        return 0.0
    phi = -cash / payroll
    if gamma > 0.0:
        bound = 1.0 / gamma
        phi = min(max(phi, -bound), bound)
    return phi


@njit(cache=True)
def reaction_rates(phi, gamma, eta_minus0, R):
    """Hiring and firing propensities ``(eta_plus, eta_minus)``."""
    eta_minus = eta_minus0 * max(1.0 + gamma * phi, 0.0)
    eta_plus = R * eta_minus0 * max(1.0 - gamma * phi, 0.0)
    return eta_plus, eta_minus


@njit(cache=True)
def price_moves(production, demand, price, pbar):
    if production < demand:
        return price < pbar
    if production > demand:
        return price > pbar
    return False


@njit(cache=True)
def update_price(price, production, demand, pbar, gamma_p, xi):
    """Raise an under-priced firm facing excess demand, cut an over-priced one
    facing excess supply; otherwise keep the price."""
    if production < demand and price < pbar:
        return price * (1.0 + gamma_p * xi)
    if production > demand and price > pbar:
        return price * (1.0 - gamma_p * xi)
    return price


@njit(cache=True)
def update_production(production, demand, available, eta_plus, eta_minus):
    if production < demand:
        return production + min(eta_plus * (demand - production), available)
    if production > demand:
        return max(0.0, production - eta_minus * (production - demand))
    return production


@njit(cache=True)
def wage_moves(production, demand, profit):
    return (production < demand and profit > 0.0) or (production > demand and profit < 0.0)


@njit(cache=True)
def update_wage(wage, production, demand, profit, price, cash, gamma, phi,
                u, eps, gamma_w, xi, rho_d, rho_l):
    """Wage rule: raises for profitable firms short of supply, capped at the
    break-even wage; cuts for loss-making firms with excess supply."""
    if production < demand and profit > 0.0:
        target = wage * (1.0 + gamma_w * (1.0 - gamma * phi) * eps * xi)
        if production > 0.0:
            cap = (price * min(demand, production)
                   + rho_d * max(cash, 0.0) + rho_l * min(cash, 0.0)) / production
            # no positive wage breaks even: keep the current one
            target = min(target, cap) if cap > 0.0 else wage
        return target
    if production > demand and profit < 0.0:
        return wage * (1.0 - gamma_w * (1.0 + gamma * phi) * u * xi)
    return wage


@njit(cache=True)
def firm_accounting(price, production, demand, wage, cash, rho_d, rho_l, delta):
    """Returns ``(new cash, profit, dividend)``."""
    profit = (price * min(production, demand) - wage * production
              + rho_d * max(cash, 0.0) + rho_l * min(cash, 0.0))
    cash = cash + profit
    dividend = 0.0
    if profit > 0.0 and cash > 0.0:
        dividend = delta * cash
        cash -= dividend
    return cash, profit, dividend


@njit(cache=True)
def allocate_workforce(wages, active, beta, u, wbar, n_firms, out):
    """Unemployed workers reachable by each firm, logit on the offered wage."""
    n = wages.shape[0]
    top = -np.inf
    for i in range(n):
        if active[i]:
            z = beta * wages[i] / wbar
            if z > top:
                top = z
    total = 0.0
    for i in range(n):
        if active[i]:
            w = math.exp(beta * wages[i] / wbar - top)
            out[i] = w
            total += w
        else:
            out[i] = 0.0
    for i in range(n):
        if active[i] and total > 0.0:
            out[i] = n_firms * u * out[i] / total
        else:
            out[i] = 0.0
    return out


@njit(cache=True)
def weighted_means(p, W, Y, active):
    """Production-weighted mean price and wage over active firms.

    Falls back to plain means when total production is zero, and to
    ``(nan, nan)`` when no firm is active.
    """
    sy = 0.0
    spy = 0.0
    swy = 0.0
    n_act = 0
    sp = 0.0
    sw = 0.0
    for i in range(Y.shape[0]):
        if active[i]:
            n_act += 1
            sy += Y[i]
            spy += p[i] * Y[i]
            swy += W[i] * Y[i]
            sp += p[i]
            sw += W[i]
    if n_act == 0:
        return np.nan, np.nan
    if sy > 0.0:
        return spy / sy, swy / sy
    return sp / n_act, sw / n_act


@njit(cache=True)
def cash_split(E, active):
    """Positive (deposits) and negative (loans, sign flipped) cash of active firms."""
    eplus = 0.0
    eminus = 0.0
    for i in range(E.shape[0]):
        if active[i]:
            if E[i] > 0.0:
                eplus += E[i]
            else:
                eminus -= E[i]
    return eplus, eminus


# ---------------------------------------------------------------------------
# Step kernel
# ---------------------------------------------------------------------------


@njit(cache=True)
def two_sum(a, b):
    """Error-free sum: ``a + b == s + err`` exactly."""
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


@njit(cache=True)
def dd_add(hi, lo, x):
    """Add a double to a double-double ``hi + lo``.

    Returns ``(hi2, lo2, r)`` with ``hi + lo + x == hi2 + lo2 + r`` exactly;
    ``r`` is the rounding residue, of order 1e-32 of the balance.
    """
    s, e = two_sum(hi, x)
    t, r = two_sum(lo, e)
    hi2, lo2 = two_sum(s, t)
    return hi2, lo2, r


@njit(cache=True)
def exact_money(E, Elo, active, S, Slo, Slo2, money):
    """``S + sum(E) - money`` with a triple-word accumulator.

    The error is of order ``n * 1e-48`` times the gross balances, far below
    any tolerance of interest even after nominal values explode.
    """
    hi, lo = two_sum(S, -money)
    lo, tail = two_sum(lo, Slo)
    tail += Slo2
    for i in range(E.shape[0]):
        if active[i]:
            hi, x = two_sum(hi, E[i])
            lo, r = two_sum(lo, x)
            tail += r
            lo, r = two_sum(lo, Elo[i])
            tail += r
    return hi + (lo + tail)


@njit(cache=True)
def _advance(Y, p, W, E, Elo, D, P, active, macro, k, rng, n_steps, rec, row0):
    n = Y.shape[0]
    nf = float(n)
    ustar = np.empty(n)
    fresh = np.zeros(n, dtype=np.bool_)
    theta = k[K_THETA]
    for step in range(n_steps):
        # (1) start-of-step aggregates
        sy = 0.0
        for i in range(n):
            if active[i]:
                sy += Y[i]
        eps = sy / nf
        u = 1.0 - eps
        pbar, wbar = weighted_means(p, W, Y, active)
        if math.isnan(pbar):
            pbar = macro[M_PBAR_PREV] if not math.isnan(macro[M_PBAR_PREV]) else 1.0
            wbar = 1.0
        allocate_workforce(W, active, k[K_BETA], u, wbar, nf, ustar)

        # (2) moving averages
        om = k[K_OMEGA]
        macro[M_PI_T] = ema_update(macro[M_PI_T], macro[M_PI], om)
        macro[M_RHOD_T] = ema_update(macro[M_RHOD_T], macro[M_RHOD], om)
        macro[M_RHOL_T] = ema_update(macro[M_RHOL_T], macro[M_RHOL], om)
        macro[M_U_T] = ema_update(macro[M_U_T], u, om)

        # (3) Central Bank and firms' sensitivity
        rho0 = taylor_rate(macro[M_PI_T], 1.0 - macro[M_U_T], k[K_RHO_STAR], k[K_PHI_PI],
                           k[K_PHI_EPS], k[K_PI_STAR], k[K_EPS_STAR])
        gamma = gamma_sensitivity(macro[M_RHOL_T], macro[M_PI_T], k[K_AG], k[K_G0])

        # (4) bankruptcies, then wage / production / price
        # Rounding residues of the double-double books, parked with the
        # households. Residues of accounts and of sums flowing into savings
        # enter with +, those of sums flowing out of savings with -.
        sink = 0.0
        def_hi = 0.0
        def_lo = 0.0
        eplus = 0.0
        eminus = 0.0
        nbank = 0
        rho_d_prev = macro[M_RHOD]
        rho_l_prev = macro[M_RHOL]
        for i in range(n):
            if not active[i]:
                continue
            e = E[i]
            if solvent(e, W[i], Y[i], theta):
                if e > 0.0:
                    eplus += e
                else:
                    eminus -= e
                phi = fragility(e, W[i], Y[i], gamma)
                eta_p, eta_m = reaction_rates(phi, gamma, k[K_ETA], k[K_R])
                y = Y[i]
                d = D[i]
                if wage_moves(y, d, P[i]):
                    W[i] = update_wage(W[i], y, d, P[i], p[i], e, gamma, phi, u, eps,
                                       k[K_GW], rng.random(), rho_d_prev, rho_l_prev)
                Y[i] = update_production(y, d, ustar[i], eta_p, eta_m)
                if price_moves(y, d, p[i], pbar):
                    p[i] = update_price(p[i], y, d, pbar, k[K_GP], rng.random())
            else:
                active[i] = False
                def_hi, def_lo, r = dd_add(def_hi, def_lo, -e)
                sink -= r
                def_hi, def_lo, r = dd_add(def_hi, def_lo, -Elo[i])
                sink -= r
                nbank += 1
                Y[i] = 0.0
                D[i] = 0.0
                P[i] = 0.0
                E[i] = 0.0
                Elo[i] = 0.0
        defaults = def_hi + def_lo

        # (5) mid-step aggregates
        sy = 0.0
        spy = 0.0
        sp = 0.0
        wt = 0.0
        n_act = 0
        for i in range(n):
            if active[i]:
                n_act += 1
                sy += Y[i]
                spy += p[i] * Y[i]
                sp += p[i]
                wt += W[i] * Y[i]
        eps = sy / nf
        u = 1.0 - eps
        if sy > 0.0:
            pbar_mid = spy / sy
        elif n_act > 0:
            pbar_mid = sp / n_act
        else:
            pbar_mid = pbar
        prev = macro[M_PBAR_PREV]
        if math.isnan(prev):
            pi = 0.0
        else:
            pi = (pbar_mid - prev) / prev
        macro[M_PI] = pi
        macro[M_PBAR_PREV] = pbar_mid

        # (6) private bank
        S = macro[M_S]
        deposits = S + eplus
        if deposits <= 0.0:
            return step, DRAINED
        rho_l, rho_d = bank_rates(rho0, defaults, eminus, deposits, k[K_F])
        bank_resid = (rho_l * eminus - rho_d * deposits - defaults) / deposits

        # (7) households and demand
        c, budget = consumption_budget(S, wt, rho_d, macro[M_PI_T], macro[M_RHOD_T],
                                       k[K_C0], k[K_AC])
        allocate_demand(budget, p, active, k[K_BETA], pbar_mid, D)

        # (8) accounting and dividends. Every transfer is booked on both sides
        # with error-free sums; rounding errors accumulate in the low words.
        # Household inflows use separate accumulators to keep the chains short.
        pay_hi = 0.0
        pay_lo = 0.0
        sal_hi = 0.0
        sal_lo = 0.0
        div_hi = 0.0
        div_lo = 0.0
        int_hi = 0.0  # net interest paid by firms to the bank
        int_lo = 0.0
        delta = k[K_DELTA]
        for i in range(n):
            if not active[i]:
                continue
            e = E[i]
            sales = p[i] * min(Y[i], D[i])
            payroll = W[i] * Y[i]
            interest = rho_d * max(e, 0.0) + rho_l * min(e, 0.0)
            profit = sales - payroll + interest
            eh, x = two_sum(e, sales)
            el, r = two_sum(Elo[i], x)
            sink += r
            eh, x = two_sum(eh, -payroll)
            el, r = two_sum(el, x)
            sink += r
            eh, x = two_sum(eh, interest)
            el, r = two_sum(el, x)
            sink += r
            pay_hi, x = two_sum(pay_hi, payroll)
            pay_lo, r = two_sum(pay_lo, x)
            sink += r
            sal_hi, x = two_sum(sal_hi, sales)
            sal_lo, r = two_sum(sal_lo, x)
            sink -= r
            int_hi, x = two_sum(int_hi, interest)
            int_lo, r = two_sum(int_lo, x)
            sink -= r
            if profit > 0.0 and eh + el > 0.0:
                dividend = delta * (eh + el)
                eh, x = two_sum(eh, -dividend)
                el, r = two_sum(el, x)
                sink += r
                div_hi, x = two_sum(div_hi, dividend)
                div_lo, r = two_sum(div_lo, x)
                sink += r
            E[i], Elo[i] = two_sum(eh, el)
            P[i] = profit
        # households get payroll and dividends, pay for sales, and receive
        # whatever the bank nets on interest after absorbing defaults
        s_hi, s_lo, r = dd_add(S, macro[M_SLO], pay_hi)
        sink += r
        s_hi, s_lo, r = dd_add(s_hi, s_lo, pay_lo)
        sink += r
        s_hi, s_lo, r = dd_add(s_hi, s_lo, -sal_hi)
        sink += r
        s_hi, s_lo, r = dd_add(s_hi, s_lo, -sal_lo)
        sink += r
        s_hi, s_lo, r = dd_add(s_hi, s_lo, div_hi)
        sink += r
        s_hi, s_lo, r = dd_add(s_hi, s_lo, div_lo)
        sink += r
        s_hi, s_lo, r = dd_add(s_hi, s_lo, -int_hi)
        sink += r
        s_hi, s_lo, r = dd_add(s_hi, s_lo, -int_lo)
        sink += r
        s_hi, s_lo, r = dd_add(s_hi, s_lo, -def_hi)
        sink += r
        s_hi, s_lo, r = dd_add(s_hi, s_lo, -def_lo)
        sink += r

        # (9) revivals, funded by firms holding positive cash
        lenders, _ = cash_split(E, active)
        inj_hi = 0.0
        inj_lo = 0.0
        phi_rev = k[K_PHI]
        for i in range(n):
            if active[i]:
                continue
            if rng.random() < phi_rev:
                y_new = u * rng.random()
                cash_new = wbar * y_new
                if inj_hi + cash_new > lenders:
                    break
                Y[i] = y_new
                p[i] = pbar_mid
                W[i] = wbar
                E[i] = cash_new
                Elo[i] = 0.0
                D[i] = 0.0
                P[i] = 0.0
                active[i] = True
                fresh[i] = True
                inj_hi, inj_lo, r = dd_add(inj_hi, inj_lo, cash_new)
                sink -= r
        if inj_hi > 0.0:
            total_inj = inj_hi
            last = -1
            for i in range(n):
                if fresh[i]:
                    fresh[i] = False
                elif active[i] and E[i] > 0.0:
                    share = total_inj * (E[i] / lenders)
                    E[i], Elo[i], r = dd_add(E[i], Elo[i], -share)
                    sink += r
                    inj_hi, inj_lo, r = dd_add(inj_hi, inj_lo, -share)
                    sink -= r
                    last = i
            # rounding residue of the proportional split goes to the last lender
            E[last], Elo[last], r = dd_add(E[last], Elo[last], -inj_hi)
            sink += r
            E[last], Elo[last], r = dd_add(E[last], Elo[last], -inj_lo)
            sink += r
        else:
            for i in range(n):
                fresh[i] = False

        # bookkeeping
        eplus_end, eminus_end = cash_split(E, active)
        macro[M_S] = s_hi
        macro[M_SLO] = s_lo
        macro[M_SLO2] += sink
        macro[M_RHO0] = rho0
        macro[M_RHOL] = rho_l
        macro[M_RHOD] = rho_d
        macro[M_GAMMA] = gamma
        macro[M_C] = c
        macro[M_DEFAULTS] = defaults
        macro[M_NBANK] = nbank
        macro[M_EPLUS] = eplus_end
        macro[M_EMINUS] = eminus_end
        macro[M_T] += 1.0

        drift = exact_money(E, Elo, active, s_hi, s_lo, macro[M_SLO2], macro[M_MONEY])
        r = row0 + step
        if r < rec.shape[0]:
            rec[r, 0] = macro[M_T]
            rec[r, 1] = u
            rec[r, 2] = eps
            rec[r, 3] = pi
            rec[r, 4] = rho0
            rec[r, 5] = rho_l
            rec[r, 6] = rho_d
            rec[r, 7] = pbar_mid
            rec[r, 8] = wbar
            rec[r, 9] = s_hi
            rec[r, 10] = eplus_end
            rec[r, 11] = eminus_end
            rec[r, 12] = defaults
            rec[r, 13] = nbank
            rec[r, 14] = gamma
            rec[r, 15] = c
            rec[r, 16] = drift
            rec[r, 17] = bank_resid

        macro[M_DRIFT] = drift
        if abs(drift) > MONEY_TOLERANCE * macro[M_MONEY]:
            return step + 1, MONEY_DRIFT
    return n_steps, OK


def advance(state: EconomyState, knobs: np.ndarray, n_steps: int,
            record: np.ndarray | None = None, row0: int = 0) -> int:
    """Run ``n_steps`` steps in place, writing rows into ``record`` from ``row0``.

    Raises :class:`ConsistencyError` on money drift or a drained bank.
    """
    if record is None:
        record = np.empty((0, N_RECORD))
    done, status = _advance(
        state.Y, state.p, state.W, state.E, state.Elo, state.D, state.P, state.active,
        state.macro, knobs, state.rng, int(n_steps), record, int(row0),
    )
    if status == MONEY_DRIFT:
        raise ConsistencyError(
            f"money not conserved at step {state.t}: "
            f"drift {money_drift(state):.3e}"
        )
    if status == DRAINED:
        raise ConsistencyError(f"bank deposits exhausted at step {state.t + 1}")
    return done


def step(state: EconomyState, params: ModelParams, policy: PolicyParams) -> np.ndarray:
    """Advance one step in place and return the emitted record row."""
    row = np.empty((1, N_RECORD))
    advance(state, pack_knobs(params, policy), 1, row, 0)
    return row[0]


def money_drift(state: EconomyState) -> float:
    """``S + E+ - E- - M`` evaluated without rounding loss."""
    act = state.active
    return math.fsum([
        float(state.macro[M_S]), float(state.macro[M_SLO]), float(state.macro[M_SLO2]),
        -state.money,
        *state.E[act], *state.Elo[act],
    ])


def resolve_bankruptcies(state: EconomyState, theta: float) -> tuple[float, float, float]:
    """Default every active firm at or beyond the leverage threshold.

    Mutates ``state`` the same way the kernel does and returns
    ``(defaults, loans, deposits)`` aggregated over the survivors.
    """
    defaults = eplus = eminus = 0.0
    for i in range(state.n_firms):
        if not state.active[i]:
            continue
        e = float(state.E[i])
        if solvent(e, float(state.W[i]), float(state.Y[i]), float(theta)):
            eplus += max(e, 0.0)
            eminus -= min(e, 0.0)
        else:
            state.active[i] = False
            defaults -= e + float(state.Elo[i])
            state.Y[i] = state.D[i] = state.P[i] = state.E[i] = state.Elo[i] = 0.0
    return defaults, eminus, eplus


def revive_firms(state: EconomyState, phi: float, u: float, pbar: float, wbar: float) -> list[int]:
    """Revival block of the kernel, usable on its own.

    Each inactive firm revives with probability ``phi``; its start-up cash is
    taken from firms with positive cash in proportion to their holdings.
    Returns the revived indices.
    """
    lenders, _ = cash_split(state.E, state.active)
    was_active = state.active.copy()
    injected = 0.0
    revived = []
    for i in range(state.n_firms):
        if state.active[i]:
            continue
        if state.rng.random() < phi:
            y_new = u * state.rng.random()
            cash_new = wbar * y_new
            if injected + cash_new > lenders:
                break
            state.Y[i], state.p[i], state.W[i], state.E[i] = y_new, pbar, wbar, cash_new
            state.D[i] = state.P[i] = state.Elo[i] = 0.0
            state.active[i] = True
            injected += cash_new
            revived.append(i)
    if injected > 0.0:
        idx = np.flatnonzero(was_active & (state.E > 0.0))
        shares = injected * (state.E[idx] / lenders)
        shares[-1] += math.fsum([injected, *(-shares)])
        state.E[idx] -= shares
    return revived
