import numpy as np
import pytest

from microopt.baselines import (InfeasibleGridError, OracleEvaluator, ScalarModel, SearchGrid,
                                grid_optimum, peak_alloc, point_seed, scalar_variant_optimize)
from microopt.domain import SlaSpec, TrafficSeries
from microopt.optimizer import OptimizerConfig, Problem, SliceProblem
from microopt.oracle import AxisRange, OracleModel, OracleParams, oracle_qos_mean

NOISELESS = OracleParams(noise_base=0.0, noise_slope=0.0)
COARSE = SearchGrid(AxisRange(500, 4500, 500), AxisRange(5, 50, 5))


def brute_force(evaluator, traffic, grid, sla):
    pts = grid.points()
    ok = [p for p in pts if evaluator(traffic, p, sla) <= sla.beta_thresh]
    return min(ok, key=lambda p: (float(p @ sla.weights.values), p[0], p[1]))


class TestSearchGrid:
    def test_default_size(self):
        assert SearchGrid().points().shape == (45 * 50, 2)

    def test_point_seed_order_free(self):
        assert point_seed(3, [100.0, 2.0]) == point_seed(3, np.array([100, 2]))
        assert point_seed(3, [100.0, 2.0]) != point_seed(4, [100.0, 2.0])


class TestGridOptimum:
    def test_matches_exhaustive_search(self):
        ev = OracleEvaluator(OracleParams(), n_trials=20, seed=1)
        traffic = TrafficSeries.constant(4.0, 20)
        sla = SlaSpec(4.0, 0.2)
        got = grid_optimum(ev, traffic, COARSE, sla)
        np.testing.assert_array_equal(got.values, brute_force(ev, traffic, COARSE, sla))

    def test_noiseless_boundary_counts_as_degraded(self):
        # q == threshold is degraded, so the balance point itself is rejected
        ev = OracleEvaluator(NOISELESS, n_trials=1)
        grid = SearchGrid(AxisRange(2000, 3000, 100), AxisRange(20, 30, 1))
        r = grid_optimum(ev, TrafficSeries.constant(5.0, 10), grid, SlaSpec(5.0, 0.01))
        np.testing.assert_array_equal(r.values, [2600.0, 26.0])
        assert oracle_qos_mean(5.0, r, NOISELESS) > 5.0

    def test_infeasible(self):
        ev = OracleEvaluator(OracleParams(app_max_rate=6.0), n_trials=5)
        grid = SearchGrid(AxisRange(100, 500, 100), AxisRange(1, 5, 1))
        with pytest.raises(InfeasibleGridError):
            grid_optimum(ev, TrafficSeries.constant(5.0, 10), grid, SlaSpec(5.0, 0.1))

    def test_cost_non_increasing_in_beta(self):
        ev = OracleEvaluator(OracleParams(), n_trials=40, seed=2)
        t = TrafficSeries.constant(5.0, 30)
        grid = SearchGrid(AxisRange(1000, 4000, 100), AxisRange(10, 40, 1))
        costs = [grid_optimum(ev, t, grid, SlaSpec(4.0, b)).values @ SlaSpec(4.0, b).weights.values
                 for b in (0.1, 0.2, 0.3)]
        assert costs[0] >= costs[1] >= costs[2]

    def test_deterministic(self):
        ev = OracleEvaluator(OracleParams(), n_trials=20, seed=9)
        t = TrafficSeries.constant(3.0, 20)
        a = grid_optimum(ev, t, COARSE, SlaSpec(4.0, 0.1))
        b = grid_optimum(ev, t, COARSE, SlaSpec(4.0, 0.1))
        np.testing.assert_array_equal(a.values, b.values)


class TestPeakAlloc:
    def test_covers_peak(self):
        ev = OracleEvaluator(OracleParams(), n_trials=50, seed=0)
        r = peak_alloc(ev, 5.0, COARSE, tau=20)
        assert ev(TrafficSeries.constant(5.0, 20), r, SlaSpec(5.0, 0.01)) <= 0.01

    def test_independent_of_sweep_sla(self):
        ev = OracleEvaluator(OracleParams(), n_trials=30, seed=0)
        a = peak_alloc(ev, 5.0, COARSE, tau=20)
        b = peak_alloc(ev, 5.0, COARSE, tau=20)
        np.testing.assert_array_equal(a.values, b.values)


class TestScalarVariant:
    def test_scalar_model_shifts_mean(self):
        base = OracleModel(OracleParams(), noisy=True)
        mu, sig, dmu, dsig = base.dist_and_grad(np.array([5.0]), np.array([2000.0, 20.0]))
        m2, s2, g2, gs2 = ScalarModel(base, 2.0).dist_and_grad(np.array([5.0]), np.array([2000.0, 20.0]))
        np.testing.assert_allclose(m2, mu - 2 * sig)
        assert np.all(s2 == 0) and np.all(gs2 == 0)
        np.testing.assert_allclose(g2, dmu - 2 * dsig)

    def test_more_sigma_costs_more(self):
        model = OracleModel(OracleParams(), noisy=True)
        p = Problem([SliceProblem(model, TrafficSeries.constant(5.0, 30), SlaSpec(4.0, 0.1))])
        cfg = OptimizerConfig(tau1_max=20, n_restarts=1, n_mc_update=64, n_mc_certify=128)
        costs = [scalar_variant_optimize(p, cfg, k).cost for k in (0.0, 2.0)]
        assert costs[1] > costs[0]

    def test_rejects_negative_k(self):
        p = Problem([SliceProblem(OracleModel(), TrafficSeries.constant(5.0, 3), SlaSpec(4.0, 0.1))])
        with pytest.raises(ValueError):
            scalar_variant_optimize(p, k_sigma=-1.0)
