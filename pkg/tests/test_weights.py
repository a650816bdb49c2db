import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

import minkflow as mf
from minkflow.errors import InvariantViolationError, SpecError
from minkflow.measures import measure_from_atoms, measure_from_density
from minkflow.weights import (
    EPSILON_MAX,
    energy,
    make_potential,
    make_regularized,
    orlicz_norm,
    power_law_weight,
    table_weight,
    uniform_gap_bounds,
)


class TestWeightSpec:
    def test_power_law_exact(self):
        w = power_law_weight(4.0)
        s = np.geomspace(1e-6, 1e6, 50)
        assert np.array_equal(w.evaluate(s), s**-3.0)

    def test_positive_probe_rejects_bad_tables(self):
        with pytest.raises(SpecError):
            table_weight([1.0, 2.0, 3.0, 4.0], [1.0, -1.0, 1.0, 1.0])

    def test_table_weight_interpolates(self):
        s = np.geomspace(0.1, 10, 30)
        w = table_weight(s, s**-1.0)
        probe = np.geomspace(0.2, 5, 17)
        assert np.max(np.abs(w.evaluate(probe) - probe**-1.0)) < 1e-6
        # power-law extension beyond the table
        assert abs(w.evaluate(np.array([100.0]))[0] - 0.01) < 1e-4


class TestMakePotential:
    def test_case_3a_power(self):
        # oracle: adaptive quadrature of the reciprocal weight from 0
        w = power_law_weight(2.0)
        oracle, _ = quad(lambda t: t, 0.0, 2.0)
        assert abs(oracle - 2.0) < 1e-12
        pot = make_potential(w, "3a")
        assert abs(pot.evaluate(np.array([2.0]))[0] - 2.0) < 1e-12
        assert pot.sign == 1 and pot.basepoint == 0.0

    def test_case_3b_log(self):
        pot = make_potential(power_law_weight(0.0), "3b")
        assert pot.evaluate(np.array([1.0]))[0] == 0.0
        assert abs(pot.evaluate(np.array([np.e]))[0] - 1.0) < 1e-14

    def test_case_3c_power(self):
        # oracle: quadrature with tail extrapolation of integral_s^inf t^-2
        w = power_law_weight(-1.0)
        oracle, _ = quad(lambda t: t**-2.0, 2.0, np.inf)
        assert abs(oracle - 0.5) < 1e-12
        pot = make_potential(w, "3c", dim=1)
        assert abs(pot.evaluate(np.array([2.0]))[0] - 0.5) < 1e-12
        assert pot.sign == -1

    @pytest.mark.parametrize("p,case", [(2.0, "3a"), (0.5, "3a"), (0.0, "3b"), (-1.0, "3c"), (-0.5, "3d")])
    def test_quadrature_path_matches_closed_form(self, p, case):
        w = power_law_weight(p)
        closed = make_potential(w, case, dim=1)
        numeric = make_potential(w, case, dim=1, method="quadrature")
        s = np.geomspace(1e-4, 1e4, 60)
        ref = closed.evaluate(s)
        scale = np.maximum(np.abs(ref), 1e-8)
        assert np.max(np.abs(numeric.evaluate(s) - ref) / scale) < 1e-10

    @pytest.mark.parametrize("p,case", [(0.0, "3a"), (-1.0, "3a"), (1.0, "3b"), (1.0, "3c"), (-2.0, "3d")])
    def test_case_parameter_mismatch_rejected(self, p, case):
        with pytest.raises(SpecError):
            make_potential(power_law_weight(p), case, dim=1)

    def test_3c_needs_q_in_range(self):
        with pytest.raises(SpecError):
            make_potential(power_law_weight(-1.0), "3c", q=0.5, dim=1)

    def test_limit_probe_warning(self):
        # a table weight that grows so fast the 3a potential stays bounded
        s = np.geomspace(0.1, 10, 40)
        w = table_weight(s, np.exp(s))
        pot = make_potential(w, "3a")
        assert any("blow up" in msg for msg in pot.warnings)


class TestEnergy:
    def test_examples(self):
        g1 = mf.build_grid(1, 128)
        ident = make_potential(power_law_weight(1.0), "3a")  # potential(s) = s
        assert abs(energy(mf.constant_field(g1, 2.0), mf.constant_field(g1, 1.0), ident) - 4 * np.pi) < 1e-12
        logpot = make_potential(power_law_weight(0.0), "3b")
        assert abs(energy(mf.constant_field(g1, 1.0), mf.constant_field(g1, 1.0), logpot)) < 1e-14
        g2 = mf.build_grid(2, (16, 32))
        sq = make_potential(power_law_weight(2.0), "3a")     # potential(s) = s^2/2
        assert abs(energy(mf.constant_field(g2, 2.0), mf.constant_field(g2, 2.0), sq) - 4 * np.pi) < 1e-12

    def test_rejects_nonpositive(self):
        g = mf.build_grid(1, 64)
        pot = make_potential(power_law_weight(2.0), "3a")
        with pytest.raises(SpecError):
            energy(mf.SupportField(g, np.zeros(64)), mf.constant_field(g, 1.0), pot)


class TestRegularized:
    def test_branch_saturation(self):
        w = power_law_weight(2.0)
        reg = make_regularized(w, 1, 0.1)
        s_hi = np.array([0.3, 1.0, 7.0])           # >= 2 eps: base branch exactly
        assert np.array_equal(reg.evaluate(s_hi), w.evaluate(s_hi))
        s_lo = np.array([0.01, 0.05, 0.1])          # <= eps: pure power branch
        assert np.array_equal(reg.evaluate(s_lo), s_lo**-1.1)

    def test_potential_at_zero(self):
        w = power_law_weight(2.0)
        reg = make_regularized(w, 1, 0.1)
        base = make_potential(w, "3a")
        assert abs(reg.potential(np.array([0.0]))[0] - base.evaluate(np.array([0.2]))[0]) < 1e-14

    def test_epsilon_range(self):
        w = power_law_weight(2.0)
        with pytest.raises(SpecError):
            make_regularized(w, 1, 0.0)
        with pytest.raises(SpecError):
            make_regularized(w, 1, EPSILON_MAX * 1.01)

    def test_reciprocal_inequality_paper_form(self):
        # 1/w_eps <= 1/w + s^(n+eps) on (0, 2 eps], from convexity of 1/x
        for p in (0.5, 2.0):
            w = power_law_weight(p)
            for eps in (0.1, 0.05, 0.025):
                reg = make_regularized(w, 1, eps)
                s = np.geomspace(1e-8, 2 * eps, 400)
                lhs = 1.0 / reg.evaluate(s)
                rhs = 1.0 / w.evaluate(s) + s ** (1 + eps)
                assert np.max(lhs - rhs) <= 1e-12

    def test_potential_dominates_base(self):
        for p in (0.5, 2.0):
            w = power_law_weight(p)
            base = make_potential(w, "3a")
            for eps in (0.1, 0.05, 0.025):
                reg = make_regularized(w, 1, eps)
                s = np.geomspace(1e-10, 1e3, 1000)
                assert np.min(reg.potential(s) - base.evaluate(s)) >= -1e-12

    def test_gap_bound_value(self):
        # closed-form oracle: (2 eps)^(n+1+eps) + potential(2 eps) - potential(eps)
        w = power_law_weight(2.0)
        reg = make_regularized(w, 1, 0.1)
        gb = uniform_gap_bounds(w, reg)
        assert abs(gb.phi_gap - (0.2**2.1 + 0.015)) < 1e-14

    def test_gap_bounds_decrease_along_schedule(self):
        w = power_law_weight(2.0)
        gaps = [uniform_gap_bounds(w, make_regularized(w, 1, e)).phi_gap for e in (0.1, 0.05, 0.025)]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_gap_constant_beyond_cutoff(self):
        # potential_eps - potential is constant in s for s >= 2 eps
        w = power_law_weight(2.0)
        reg = make_regularized(w, 1, 0.1)
        base = make_potential(w, "3a")
        s = np.array([0.2, 0.5, 1.0, 5.0, 50.0])
        gap = reg.potential(s) - base.evaluate(s)
        assert np.max(np.abs(gap - gap[0])) < 1e-10

    def test_dim_mismatch_rejected(self):
        w = power_law_weight(2.0)
        reg = make_regularized(w, 1, 0.1)
        with pytest.raises(SpecError):
            uniform_gap_bounds(w, reg, dim=2)


class TestOrliczNorm:
    def setup_method(self):
        self.grid = mf.build_grid(1, 256)
        self.mu = measure_from_density(self.grid, np.ones(256))
        self.phi_sq = lambda t: np.asarray(t, dtype=float) ** 2

    def test_halfspace_example(self):
        # oracle: ((1/2pi) integral cos_+^2)^(1/2) = 1/2
        direct = (self.grid.integrate(np.maximum(self.grid.nodes[:, 0], 0.0) ** 2) / (2 * np.pi)) ** 0.5
        assert abs(direct - 0.5) < 1e-12
        g = lambda u: np.maximum(np.asarray(u) @ np.array([1.0, 0.0]), 0.0)
        assert abs(orlicz_norm(g, self.phi_sq, self.mu) - 0.5) < 1e-10

    def test_constant_field(self):
        for c in (0.3, 1.0, 7.5):
            val = orlicz_norm(np.full(256, c), self.phi_sq, self.mu)
            assert abs(val - c) < 1e-10 * c

    def test_zero_field_convention(self):
        assert orlicz_norm(np.zeros(256), self.phi_sq, self.mu) == 0.0

    def test_decreasing_potential_rejected(self):
        pot = make_potential(power_law_weight(-1.0), "3c", dim=1)
        with pytest.raises(SpecError):
            orlicz_norm(np.ones(256), pot, self.mu)

    def test_atoms_need_callable(self):
        mu = measure_from_atoms(self.grid, np.array([[1.0, 0.0]]), np.array([1.0]))
        with pytest.raises(SpecError):
            orlicz_norm(np.ones(256), self.phi_sq, mu)
        val = orlicz_norm(lambda u: np.full(len(u), 2.0), self.phi_sq, mu)
        assert abs(val - 2.0) < 1e-10

    @settings(max_examples=20, deadline=None)
    @given(c=st.sampled_from([0.5, 2.0, 10.0]), seed=st.integers(0, 50))
    def test_positive_homogeneity(self, c, seed):
        rng = np.random.default_rng(seed)
        g = np.exp(0.4 * rng.standard_normal(256))
        base = orlicz_norm(g, self.phi_sq, self.mu)
        scaled = orlicz_norm(c * g, self.phi_sq, self.mu)
        assert abs(scaled - c * base) < 1e-9 * c * base

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 50))
    def test_monotonicity(self, seed):
        rng = np.random.default_rng(seed)
        g = np.exp(0.4 * rng.standard_normal(256))
        bigger = g + np.abs(rng.standard_normal(256)) * 0.3
        assert orlicz_norm(g, self.phi_sq, self.mu) <= orlicz_norm(bigger, self.phi_sq, self.mu) + 1e-9

    def test_saturation(self):
        rng = np.random.default_rng(7)
        g = np.exp(0.4 * rng.standard_normal(256))
        lam = orlicz_norm(g, self.phi_sq, self.mu)
        value = self.mu.integrate(self.phi_sq(g / lam)) / self.mu.total
        assert abs(value - 1.0) < 1e-10   # phi(1) = 1

    def test_normalization_invariance_under_scaling(self):
        rng = np.random.default_rng(11)
        g = np.exp(0.4 * rng.standard_normal(256))
        mu2 = measure_from_density(self.grid, 2 * np.ones(256))
        assert orlicz_norm(g, self.phi_sq, mu2) == pytest.approx(orlicz_norm(g, self.phi_sq, self.mu), rel=1e-12)
