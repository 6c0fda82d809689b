import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mark0.economy import (
    M_RHOD,
    M_S,
    M_SLO,
    M_SLO2,
    RECORD_COLUMNS,
    ConsistencyError,
    advance,
    allocate_workforce,
    firm_accounting,
    fragility,
    init_economy,
    money_drift,
    pack_knobs,
    reaction_rates,
    resolve_bankruptcies,
    revive_firms,
    step,
    update_price,
    update_production,
    update_wage,
)
from mark0.observables import money_total
from mark0.params import ModelParams, ParameterError, PolicyParams
from reference import reference_step

HALF = np.full((1, 3), 0.5)


def col(row, name):
    return row[RECORD_COLUMNS.index(name)]


class TestInit:
    def test_hand_state(self):
        st_ = init_economy(ModelParams(n_firms=1), draws=HALF)
        f = st_.firm(0)
        assert (f.wage, f.price, f.production, f.demand, f.cash) == (1.0, 1.0, 0.5, 0.5, 0.25)
        assert f.profit == 0.0 and f.active
        assert st_.savings == 0.75
        assert money_total(st_) == 1.0

    def test_deterministic(self):
        a = init_economy(ModelParams(n_firms=50, seed=7))
        b = init_economy(ModelParams(n_firms=50, seed=7))
        for name in ("Y", "p", "W", "E", "D", "P", "macro"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        assert a.rng.bit_generator.state == b.rng.bit_generator.state

    def test_total_money(self):
        st_ = init_economy(ModelParams(n_firms=2000))
        assert money_drift(st_) == 0.0
        assert money_total(st_) == 2000.0

    def test_ranges(self):
        st_ = init_economy(ModelParams(n_firms=500))
        assert ((st_.p >= 0.9) & (st_.p <= 1.1)).all()
        assert ((st_.Y >= 0.45) & (st_.Y <= 0.55)).all()
        assert ((st_.E >= 0) & (st_.E <= st_.Y)).all()

    @pytest.mark.parametrize("n", [0, -3])
    def test_rejects_empty_economy(self, n):
        with pytest.raises(ParameterError):
            init_economy(ModelParams(n_firms=n))


class TestBankruptcy:
    def test_example(self):
        st_ = init_economy(ModelParams(n_firms=2, seed=1))
        st_.E[:] = [-5.0, 1.0]
        st_.W[:] = 1.0
        st_.Y[:] = [2.0, 1.0]
        defaults, loans, deposits = resolve_bankruptcies(st_, 2.0)
        assert defaults == 5.0 and loans == 0.0 and deposits == 1.0
        assert not st_.active[0] and st_.active[1]

    def test_unbounded_leverage(self):
        st_ = init_economy(ModelParams(n_firms=3, seed=1))
        st_.E[:] = [-1e6, -3.0, 2.0]
        defaults, loans, deposits = resolve_bankruptcies(st_, math.inf)
        assert defaults == 0.0 and loans == 1e6 + 3.0 and deposits == 2.0
        assert st_.active.all()

    def test_all_positive_cash(self):
        st_ = init_economy(ModelParams(n_firms=20, seed=1))
        defaults, loans, _ = resolve_bankruptcies(st_, 0.5)
        assert defaults == 0.0 and loans == 0.0


class TestFragility:
    def test_examples(self):
        assert fragility(-2.0, 1.0, 4.0, 0.0) == 0.5
        assert fragility(3.0, 1.0, 3.0, 0.0) == -1.0
        assert fragility(-10.0, 1.0, 1.0, 2.0) == 0.5

    def test_zero_payroll(self):
        assert fragility(-3.0, 1.0, 0.0, 1.0) == 0.0


class TestReactionRates:
    def test_baseline(self):
        assert reaction_rates(0.7, 0.0, 0.1, 2.0) == pytest.approx((0.2, 0.1))

    def test_example(self):
        assert reaction_rates(-0.5, 1.0, 0.1, 2.0) == pytest.approx((0.3, 0.05))

    def test_clamp_boundary(self):
        assert reaction_rates(1.0, 1.0, 0.1, 2.0) == pytest.approx((0.0, 0.2))

    @given(st.floats(-10, 10), st.floats(0, 50), st.floats(0.1, 5))
    def test_bounds(self, raw, gamma, R):
        phi = fragility(-raw, 1.0, 1.0, gamma)
        eta_p, eta_m = reaction_rates(phi, gamma, 0.1, R)
        top = 2 * max(1.0, R) * 0.1
        assert 0 <= eta_p <= top + 1e-12 and 0 <= eta_m <= top + 1e-12


class TestPrice:
    def test_raise(self):
        assert update_price(0.9, 1.0, 2.0, 1.0, 0.05, 1.0) == pytest.approx(0.945)

    def test_cheap_with_excess_supply_is_kept(self):
        assert update_price(0.9, 2.0, 1.0, 1.0, 0.05, 1.0) == 0.9

    def test_dear_with_excess_supply_is_cut(self):
        assert update_price(1.2, 2.0, 1.0, 1.0, 0.05, 1.0) == pytest.approx(1.14)

    def test_dear_with_excess_demand_is_kept(self):
        assert update_price(1.2, 1.0, 2.0, 1.0, 0.05, 1.0) == 1.2

    def test_balanced(self):
        assert update_price(0.5, 1.0, 1.0, 1.0, 0.05, 1.0) == 0.5


class TestWorkforce:
    def run(self, wages, beta, u, active=None):
        wages = np.asarray(wages, dtype=float)
        active = np.ones(wages.size, bool) if active is None else np.asarray(active)
        wbar = float(wages[active].mean()) if active.any() else 1.0
        return allocate_workforce(wages, active, beta, u, wbar, float(wages.size),
                                  np.empty(wages.size))

    def test_uniform(self):
        np.testing.assert_allclose(self.run([1, 2, 3, 4], 0.0, 0.5), [0.5] * 4)

    @given(st.floats(0, 50))
    def test_symmetric(self, beta):
        out = self.run([1.0, 1.0], beta, 0.3)
        assert out[0] == pytest.approx(out[1])

    def test_highest_wage_takes_all(self):
        np.testing.assert_allclose(self.run([1.0, 1.2, 0.9], 1e4, 0.4), [0, 1.2, 0], atol=1e-12)

    def test_no_active_firm(self):
        assert (self.run([1.0, 1.0], 2.0, 0.5, [False, False]) == 0).all()

    @settings(max_examples=200)
    @given(st.lists(st.floats(0.1, 5), min_size=1, max_size=50), st.floats(0, 10),
           st.floats(0, 1))
    def test_sum(self, wages, beta, u):
        out = self.run(wages, beta, u)
        assert out.sum() == pytest.approx(len(wages) * u, rel=1e-12, abs=1e-12)


class TestProduction:
    def test_hiring_capped_by_supply(self):
        assert update_production(10.0, 14.0, 1.0, 0.5, 0.1) == 11.0

    def test_firing(self):
        assert update_production(10.0, 6.0, 1.0, 0.5, 0.1) == pytest.approx(9.6)

    def test_balanced(self):
        assert update_production(3.0, 3.0, 1.0, 0.5, 0.1) == 3.0

    @given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 5), st.floats(0, 1), st.floats(0, 1))
    def test_non_negative(self, y, d, avail, eta_p, eta_m):
        assert update_production(y, d, avail, eta_p, eta_m) >= 0


class TestWage:
    def args(self, **kw):
        base = dict(wage=1.0, production=1.0, demand=2.0, profit=0.5, price=10.0, cash=0.0,
                    gamma=0.0, phi=0.0, u=0.1, eps=0.9, gamma_w=0.05, xi=1.0,
                    rho_d=0.0, rho_l=0.0)
        base.update(kw)
        return list(base.values())

    def test_raise(self):
        assert update_wage(*self.args()) == pytest.approx(1.045)

    def test_profitable_with_excess_supply(self):
        assert update_wage(*self.args(production=2.0, demand=1.0)) == 1.0

    def test_cut(self):
        w = update_wage(*self.args(production=2.0, demand=1.0, profit=-1.0))
        assert w == pytest.approx(1.0 - 0.05 * 0.1)

    def test_frozen(self):
        assert update_wage(*self.args(gamma_w=0.0)) == 1.0

    def test_cap_binds(self):
        # sales 1.02 on one unit of output: break-even wage 1.02
        w = update_wage(*self.args(price=1.02))
        assert w == pytest.approx(1.02)

    def test_no_cap_without_output(self):
        w = update_wage(*self.args(production=0.0, price=1e-6))
        assert w == pytest.approx(1.045)

    @settings(max_examples=300)
    @given(st.floats(0.1, 3), st.floats(0.01, 5), st.floats(0.01, 5), st.floats(0.1, 3),
           st.floats(-5, 5), st.floats(0, 1), st.floats(0, 0.05), st.floats(0, 0.1))
    def test_profit_cap(self, wage, y, extra, price, cash, xi, rho_d, spread):
        d = y + extra
        rho_l = rho_d + spread
        w = update_wage(wage, y, d, 1.0, price, cash, 0.0, 0.0, 0.1, 0.9, 0.05, xi, rho_d, rho_l)
        assert w > 0
        if w > wage:
            profit = price * min(d, y) - w * y + rho_d * max(cash, 0) + rho_l * min(cash, 0)
            assert profit >= -1e-12


class TestAccounting:
    def test_break_even(self):
        assert firm_accounting(1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.02) == (0.0, 0.0, 0.0)

    def test_dividend(self):
        cash, profit, dividend = firm_accounting(2.0, 1.0, 2.0, 1.0, 10.0, 0.01, 0.05, 0.02)
        assert profit == pytest.approx(1.1)
        assert dividend == pytest.approx(0.02 * 11.1)
        assert cash == pytest.approx(11.1 * 0.98)

    def test_interest_cost(self):
        cash, profit, dividend = firm_accounting(1.0, 1.0, 1.0, 1.0, -10.0, 0.01, 0.05, 0.02)
        assert profit == pytest.approx(-0.5)
        assert cash == pytest.approx(-10.5)
        assert dividend == 0.0


class TestRevival:
    def setup_state(self, phi):
        st_ = init_economy(ModelParams(n_firms=2, seed=3))
        st_.active[0] = False
        st_.E[:] = [0.0, 5.0]
        st_.Elo[:] = 0.0
        st_.macro[[M_S, M_SLO, M_SLO2]] = 0.0
        st_.money = 5.0
        return st_

    def test_never(self):
        st_ = self.setup_state(0.0)
        assert revive_firms(st_, 0.0, 0.4, 1.0, 1.0) == []
        assert not st_.active[0]

    def test_example(self):
        st_ = self.setup_state(1.0)
        probe = st_.copy()
        probe.rng.random()
        xi = probe.rng.random()
        assert revive_firms(st_, 1.0, 0.4, 1.3, 1.0) == [0]
        assert st_.Y[0] == pytest.approx(0.4 * xi)
        assert st_.p[0] == 1.3 and st_.W[0] == 1.0
        assert st_.E[0] == pytest.approx(0.4 * xi)
        assert st_.E[1] + st_.Elo[1] == pytest.approx(5.0 - 0.4 * xi)
        assert money_drift(st_) == pytest.approx(0.0, abs=1e-15)

    def test_hand_numbers(self):
        # with the draw fixed at 0.5: Y = 0.2, E = 0.2, the lender drops by 0.2
        st_ = self.setup_state(1.0)

        class Half:
            def random(self):
                return 0.5

        st_.rng = Half()
        revive_firms(st_, 1.0, 0.4, 1.0, 1.0)
        assert (st_.Y[0], st_.E[0]) == (0.2, 0.2)
        assert st_.E[1] == pytest.approx(4.8)

    def test_skips_when_lenders_are_short(self):
        st_ = self.setup_state(1.0)
        st_.E[1] = 1e-9
        st_.money = 1e-9
        assert revive_firms(st_, 1.0, 0.9, 1.0, 1.0) == []
        assert money_drift(st_) == 0.0


class TestStep:
    MARK0 = dict(gamma0=0.0, alpha_gamma=0.0, alpha_c=0.0)

    def test_hand_trace(self):
        """Two steps of the hand state: no draws are needed because no rule fires."""
        m = ModelParams(n_firms=1, **self.MARK0)
        q = PolicyParams(rho_star=0.02)
        st_ = init_economy(m, q, draws=HALF)
        row = step(st_, m, q)
        # Y = D, so nothing moves; budget 0.5 (0.75 + 0.5) = 0.625 buys 0.5 at p = 1
        assert col(row, "u") == 0.5 and col(row, "pi") == 0.0
        assert col(row, "rho0") == 0.02 and col(row, "rho_l") == 0.02 and col(row, "rho_d") == 0.0
        assert st_.D[0] == 0.625 and st_.E[0] == 0.25 and st_.P[0] == 0.0
        assert col(row, "S") == 0.75 and col(row, "Eplus") == 0.25
        row = step(st_, m, q)
        # demand now exceeds output: hire min(0.2 * 0.125, 0.5) = 0.025
        assert st_.Y[0] == pytest.approx(0.525)
        assert st_.W[0] == 1.0 and st_.p[0] == 1.0  # no profit, single firm at the mean
        assert st_.D[0] == pytest.approx(0.5 * (0.75 + 0.525))
        assert st_.E[0] == 0.25 and col(row, "S") == 0.75
        assert col(row, "epsilon") == pytest.approx(0.525)

    @pytest.mark.parametrize("theta, kw", [
        (math.inf, {}),
        (3.0, dict(alpha_gamma=50.0, alpha_c=4.0)),
        (0.3, dict(alpha_gamma=50.0, alpha_c=4.0, gamma0=0.1, phi=0.3)),
        (0.02, dict(phi=0.5)),
    ])
    def test_matches_reference(self, theta, kw):
        m = ModelParams(n_firms=30, theta=theta, seed=5, **kw)
        q = PolicyParams(phi_pi=0.5, phi_eps=0.5)
        st_ = init_economy(m, q)
        for _ in range(150):
            ref, row, rng = reference_step(st_, m, q)
            out = step(st_, m, q)
            for name, value in row.items():
                assert col(out, name) == pytest.approx(value, rel=1e-9, abs=1e-12), name
            for name in ("Y", "p", "W", "D"):
                np.testing.assert_allclose(getattr(st_, name), ref[name], rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(st_.E + st_.Elo, ref["E"], rtol=1e-9, atol=1e-11)
            np.testing.assert_array_equal(st_.active, ref["active"])
            assert st_.rng.bit_generator.state == rng.bit_generator.state

    def test_invariants_along_a_run(self):
        m = ModelParams(n_firms=100, theta=1.0, alpha_gamma=50, alpha_c=4, seed=2)
        q = PolicyParams(phi_pi=1.0, phi_eps=1.0)
        st_ = init_economy(m, q)
        for _ in range(500):
            row = step(st_, m, q)
            act = st_.active
            assert st_.savings >= 0
            assert (st_.Y[act] >= 0).all() and (st_.p[act] > 0).all() and (st_.W[act] > 0).all()
            assert 0 <= col(row, "u") <= 1
            assert col(row, "rho_d") <= col(row, "rho0") <= col(row, "rho_l")
            assert abs(money_drift(st_)) < 1e-6 * m.n_firms

    def test_same_seed_same_record(self):
        m = ModelParams(n_firms=50, theta=2.0, seed=11)
        q = PolicyParams()
        a, b = init_economy(m, q), init_economy(m, q)
        ra, rb = np.empty((300, 18)), np.empty((300, 18))
        advance(a, pack_knobs(m, q), 300, ra)
        advance(b, pack_knobs(m, q), 300, rb)
        np.testing.assert_array_equal(ra, rb)

    def test_channels_off(self):
        m = ModelParams(n_firms=100, theta=2.0, c0=0.4, **self.MARK0)
        q = PolicyParams()
        st_ = init_economy(m, q)
        rec = np.empty((400, 18))
        advance(st_, pack_knobs(m, q), 400, rec)
        assert (rec[:, RECORD_COLUMNS.index("Gamma")] == 0.0).all()
        assert (rec[:, RECORD_COLUMNS.index("c")] == 0.4).all()

    def test_detects_broken_books(self):
        m = ModelParams(n_firms=50)
        q = PolicyParams()
        st_ = init_economy(m, q)
        step(st_, m, q)
        st_.macro[M_S] += 1e-3 * m.n_firms
        with pytest.raises(ConsistencyError, match="money not conserved"):
            step(st_, m, q)

    def test_first_rates_and_emas(self):
        m = ModelParams(n_firms=10)
        st_ = init_economy(m, PolicyParams(rho_star=0.03))
        assert st_.macro[M_RHOD] == pytest.approx(0.0)
        assert st_.bank.base_rate == 0.03
