import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from microopt.degradation import (EpsilonPanel, SurrogateConfig, beta_strict, beta_strict_batch,
                                  beta_surrogate, beta_surrogate_grad, expected_beta)
from microopt.domain import TrafficSeries
from microopt.oracle import OracleModel, OracleParams

from fdutil import central_diff, close, fd_steps, smooth_around


def enumerate_beta(x, q, thr):
    """Per-slot enumeration in exact rational arithmetic."""
    num = den = Fraction(0)
    for xt, qt in zip(x, q):
        den += Fraction(xt)
        if qt <= thr:
            num += Fraction(xt)
    return float(num) / float(den)


def series(n, lo=0.0, hi=10.0):
    return arrays(np.float64, n, elements=st.floats(lo, hi, allow_nan=False))


class TestBetaStrict:
    def test_all_above(self):
        assert beta_strict([1, 2, 3], [6, 7, 8], 5.0) == 0.0

    def test_uniform_traffic(self):
        assert beta_strict([1, 1, 1, 1], [4, 6, 6, 6], 5.0) == 0.25

    def test_weighted_traffic(self):
        assert beta_strict([3, 1], [4, 6], 5.0) == 0.75

    def test_boundary_is_degraded(self):
        assert beta_strict([1, 1], [5.0, 5.0], 5.0) == 1.0

    def test_errors(self):
        with pytest.raises(ValueError, match="total traffic"):
            beta_strict([0, 0], [1, 1], 5.0)
        with pytest.raises(ValueError, match="length mismatch"):
            beta_strict([1, 1, 1], [1, 1], 5.0)

    def test_matches_enumeration(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 60))
            x = rng.uniform(0, 5, n)
            x[rng.uniform(size=n) < 0.2] = 0.0
            x[0] += 0.1
            q = rng.normal(5, 1.5, n)
            thr = float(rng.choice([rng.uniform(2, 8), q[int(rng.integers(n))]]))
            assert beta_strict(x, q, thr) == enumerate_beta(x, q, thr)

    @given(series(30, 0.0, 10.0), series(30, -5.0, 15.0), st.floats(0, 10), st.floats(1e-3, 1e3))
    def test_range_and_scale_invariance(self, x, q, thr, scale):
        x = x.copy()
        x[0] += 1.0
        b = beta_strict(x, q, thr)
        assert 0.0 <= b <= 1.0
        assert beta_strict(scale * x, q, thr) == pytest.approx(b, abs=1e-12)

    @given(series(20, 0.0, 5.0), series(20, 0.0, 10.0), series(20, 0.0, 3.0), st.floats(1, 8))
    def test_monotone_in_qos(self, x, q, bump, thr):
        x = x.copy()
        x[0] += 1.0
        assert beta_strict(x, q + bump, thr) <= beta_strict(x, q, thr)
        assert beta_surrogate(x, q + bump, thr, 5.0) <= beta_surrogate(x, q, thr, 5.0) + 1e-15

    def test_batch_matches_rows(self, rng):
        x = rng.uniform(0, 4, 40)
        Q = rng.normal(4, 1, (25, 40))
        got = beta_strict_batch(x, Q, 4.2)
        want = [beta_strict(x, row, 4.2) for row in Q]
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-15)


class TestBetaSurrogate:
    def test_at_threshold(self):
        assert beta_surrogate([1, 2, 3], [5, 5, 5], 5.0, 5.0) == pytest.approx(0.5)

    def test_closed_form(self):
        assert beta_surrogate([1], [4.0], 5.0, 5.0) == pytest.approx(1 / (1 + math.exp(-5)), abs=1e-12)
        assert beta_surrogate([1], [4.0], 5.0, 5.0) == pytest.approx(0.9933, abs=1e-4)

    def test_sharp_limit(self, rng):
        x = rng.uniform(0.5, 2, 50)
        q = rng.normal(5, 1, 50)
        q = q[np.abs(q - 5) > 0.05]
        x = x[:q.size]
        assert beta_surrogate(x, q, 5.0, 1e4) == pytest.approx(beta_strict(x, q, 5.0), abs=1e-12)

    @given(series(15, 0.0, 5.0), series(15, -10.0, 20.0), st.floats(0.5, 10))
    def test_open_unit_interval(self, x, q, thr):
        x = x.copy()
        x[0] += 1.0
        b = beta_surrogate(x, q, thr, 1.0)
        assert 0.0 < b < 1.0

    def test_grad_matches_fd(self, rng):
        x = rng.uniform(0.5, 2, 12)
        q = rng.normal(5, 1, 12)
        g = beta_surrogate_grad(x, q, 5.0, 5.0)
        h = 1e-6
        for t in range(12):
            e = np.zeros(12)
            e[t] = h
            fd = (beta_surrogate(x, q + e, 5.0, 5.0) - beta_surrogate(x, q - e, 5.0, 5.0)) / (2 * h)
            assert g[t] == pytest.approx(fd, rel=1e-5, abs=1e-10)


class TestEpsilonPanel:
    def test_shape_and_determinism(self):
        a = EpsilonPanel.draw(8, 30, 4)
        b = EpsilonPanel.draw(8, 30, 4)
        assert a.shape == (8, 30)
        np.testing.assert_array_equal(a.values, b.values)

    def test_read_only(self):
        p = EpsilonPanel.draw(2, 3, 0)
        with pytest.raises(ValueError):
            p.values[0, 0] = 1.0


class TestExpectedBeta:
    traffic = TrafficSeries(np.linspace(1.0, 5.0, 40))

    def test_deterministic_model_above_threshold(self):
        m = OracleModel(OracleParams())
        eb_s = expected_beta(m, self.traffic, np.array([4000.0, 40.0]), 5.0, mode="strict")
        eb = expected_beta(m, self.traffic, np.array([4000.0, 40.0]), 5.0)
        assert eb_s.value == 0.0 and eb_s.grad is None
        assert eb.value < 0.5

    def test_replicate_count_range(self, quick_model):
        r = np.array([2000.0, 20.0])
        small = expected_beta(quick_model, self.traffic, r, 4.0, SurrogateConfig(n_mc=1), "strict",
                              EpsilonPanel.draw(1, 40, 1))
        big = expected_beta(quick_model, self.traffic, r, 4.0, SurrogateConfig(n_mc=64), "strict",
                            EpsilonPanel.draw(64, 40, 1))
        assert 0 <= small.value <= 1 and 0 <= big.value <= 1
        assert small.value != big.value

    def test_fixed_panel_is_deterministic(self, quick_model):
        panel = EpsilonPanel.draw(16, 40, 2)
        r = np.array([1800.0, 21.0])
        a = expected_beta(quick_model, self.traffic, r, 4.0, panel=panel)
        b = expected_beta(quick_model, self.traffic, r, 4.0, panel=panel)
        assert a.value == b.value
        np.testing.assert_array_equal(a.grad, b.grad)

    def test_gradient_matches_fd(self, quick_model, rng):
        traffic = TrafficSeries([1.0, 2.5, 2.5, 4.0, 5.0])
        panel = EpsilonPanel.draw(16, 5, 3)
        cfg = SurrogateConfig(rho=5.0)
        h = fd_steps(quick_model)
        checked = 0
        while checked < 20:
            r = rng.uniform([800, 8], [3500, 35])
            if not smooth_around(quick_model, np.unique(traffic.values), r, h):
                continue
            eb = expected_beta(quick_model, traffic, r, 4.0, cfg, panel=panel)
            fd = central_diff(lambda v: expected_beta(quick_model, traffic, v, 4.0, cfg, panel=panel).value, r, h)
            assert close(eb.grad, fd)
            checked += 1

    def test_panel_width_checked(self, quick_model):
        with pytest.raises(ValueError, match="slots"):
            expected_beta(quick_model, self.traffic, np.array([1000.0, 10.0]), 4.0,
                          panel=EpsilonPanel.draw(4, 39, 0))

    def test_zero_traffic_slots_ignored(self, quick_model):
        x = np.array([0.0, 2.0, 0.0, 4.0])
        panel = EpsilonPanel.draw(8, 4, 5)
        r = np.array([1500.0, 15.0])
        full = expected_beta(quick_model, x, r, 3.0, mode="strict", panel=panel).value
        sub = expected_beta(quick_model, x[[1, 3]], r, 3.0, mode="strict",
                            panel=EpsilonPanel(panel.values[:, [1, 3]])).value
        assert full == pytest.approx(sub, abs=1e-15)
