"""Tests for slope-based dimension recovery: the algebraic inversion, the
probe-driven estimators, and the per-point results file.

The closed-form anisotropic score gives exact ground truth: probing it
must return n - n_perp up to floating-point error.
"""

import numpy as np
import pytest

from scoredim import (AttackConfig, LinearScore, LocalSplit, TDEstimate,
                      VPSchedule, build_anisotropic_oracle_score,
                      estimate_td, estimate_td_batch, estimate_td_over_time,
                      evaluate_mse, fixed_point_slope, gen_swirl,
                      invert_slope, train, write_results_csv)
from scoredim.dirichlet import TrainConfig
from scoredim.td import (ATTACK_FALLBACK, DIVISION_GUARD,
                         NEGATIVE_NORMAL_VAR)


class TestInvertSlope:
    """Algebra: n_hat = n - n * gamma / (1/delta - sigma^2)."""

    def test_synthetic_slopes_recover_k_exactly(self):
        """delta = 1/(sigma^2 + n*gamma/k) must invert to n - k."""
        for n, k, gamma, s2 in [(4, 1, 1e-2, 0.01), (4, 4, 1e-3, 0.01),
                                (16, 5, 1e-2, 0.04), (32, 32, 1e-1, 0.01),
                                (8, 3, 1e-5, 0.04)]:
            delta = 1.0 / (s2 + n * gamma / k)
            raw, clamped, flags = invert_slope(delta, n, gamma, np.sqrt(s2))
            assert raw == pytest.approx(n - k, abs=1e-9)
            assert clamped == pytest.approx(n - k, abs=1e-9)
            assert flags == frozenset()

    def test_zero_slope_means_full_dimension(self):
        raw, clamped, flags = invert_slope(0.0, 8, 0.01, 0.1)
        assert raw == 8.0 and clamped == 8.0
        assert flags == frozenset()

    def test_noise_floor_slope_trips_the_guard(self):
        """1/delta == sigma^2 exactly: no normal variance is resolvable."""
        raw, clamped, flags = invert_slope(100.0, 8, 0.01, 0.1)
        assert raw == 8.0 and clamped == 8.0
        assert DIVISION_GUARD in flags

    def test_impossible_slope_is_flagged_and_clamped(self):
        """A slope steeper than 1/sigma^2 gives a negative denominator; the
        raw value exceeds n and the report clamps to n."""
        raw, clamped, flags = invert_slope(200.0, 8, 0.01, 0.1)
        assert NEGATIVE_NORMAL_VAR in flags
        assert raw > 8.0
        assert clamped == 8.0

    def test_oversoft_slope_clamps_to_zero(self):
        """Slopes much softer than any valid split give raw < 0."""
        raw, clamped, flags = invert_slope(0.1, 4, 10.0, 0.1)
        assert raw < 0.0
        assert clamped == 0.0
        assert flags == frozenset()

    def test_zero_gamma_always_returns_n(self):
        for delta in (0.5, 10.0, 99.0):
            raw, clamped, _ = invert_slope(delta, 6, 0.0, 0.1)
            assert raw == 6.0 and clamped == 6.0


class TestOracleRecovery:
    """Probing the exact fixed-point score recovers n - n_perp."""

    def test_all_splits_recovered(self):
        sigma, gamma = 0.1, 0.01
        cfg = AttackConfig(epsilon=sigma, iters=10)
        for n in (2, 4, 8):
            for n_perp in range(1, n + 1):
                split = LocalSplit(n, n_perp, sigma ** 2, gamma)
                model = build_anisotropic_oracle_score(split, 0.0)
                x = np.zeros(n)
                x[0] = 0.05  # nonzero normal offset selects the direction
                est = estimate_td(model, x, gamma, sigma, cfg, rng=1)
                assert est.n_hat == pytest.approx(n - n_perp, abs=1e-9), \
                    (n, n_perp)
                assert est.flags == frozenset()

    def test_measured_slope_is_the_normal_slope(self):
        split = LocalSplit(4, 2, 0.01, 0.01)
        model = build_anisotropic_oracle_score(split, 0.0)
        x = np.array([0.02, 0.0, 0.3, -0.1])
        est = estimate_td(model, x, 0.01, 0.1, AttackConfig(epsilon=0.1),
                          rng=0)
        assert est.delta == pytest.approx(fixed_point_slope(split), rel=1e-9)

    def test_probe_respects_pinned_budget(self):
        """The attack budget is always the training noise scale, whatever
        the caller's config says."""
        model = LinearScore(np.full(3, 50.0))
        x = np.array([0.1, 0.2, -0.1])
        cfg = AttackConfig(epsilon=0.7, iters=10)  # wrong budget on purpose
        est = estimate_td(model, x, 0.01, 0.1, cfg, rng=0)
        assert np.linalg.norm(est.x_adv - x) == pytest.approx(0.1, rel=1e-9)

    def test_on_manifold_fallback_is_flagged(self):
        """With zero tangent slope and zero normal offset the score
        vanishes; the probe falls back to a random direction."""
        split = LocalSplit(4, 1, 0.01, 0.01)
        model = build_anisotropic_oracle_score(split, 0.0)
        x = np.array([0.0, 0.5, -0.2, 0.3])  # purely tangent position
        est = estimate_td(model, x, 0.01, 0.1, AttackConfig(epsilon=0.1),
                          rng=5)
        assert ATTACK_FALLBACK in est.flags


class TestBatchEstimation:
    """Vectorized estimates over point-cloud rows."""

    def test_batch_matches_single(self):
        split = LocalSplit(3, 1, 0.01, 0.01)
        model = build_anisotropic_oracle_score(split, 0.0)
        rng = np.random.default_rng(2)
        X = rng.standard_normal((5, 3)) * 0.2
        batch = estimate_td_batch(model, X, 0.01, 0.1,
                                  AttackConfig(epsilon=0.1), rng=3)
        assert len(batch) == 5
        for est, x in zip(batch, X):
            np.testing.assert_array_equal(est.x, x)
            assert est.n_hat == pytest.approx(2.0, abs=1e-9)

    def test_rounded_property(self):
        est = TDEstimate(np.zeros(2), np.zeros(2), 1.0, 1.4, 1.4,
                         frozenset())
        assert est.n_hat_rounded == 1
        est = TDEstimate(np.zeros(2), np.zeros(2), 1.0, 1.6, 1.6,
                         frozenset())
        assert est.n_hat_rounded == 2

    def test_rejects_bad_scales(self):
        model = LinearScore(np.ones(2))
        cfg = AttackConfig(epsilon=0.1)
        with pytest.raises(ValueError):
            estimate_td_batch(model, np.ones((2, 2)), 0.01, 0.0, cfg)
        with pytest.raises(ValueError):
            estimate_td_batch(model, np.ones((2, 2)), -0.01, 0.1, cfg)


@pytest.fixture(scope="module")
def time_model():
    data = gen_swirl(80, seed=1)
    cfg = TrainConfig(schedule=VPSchedule(), gamma=0.0, iterations=150,
                      batch_size=16, hidden=(8, 8), seed=2)
    return train(data, cfg).model


class TestOverTime:
    """Estimates along the deterministic forward decay."""

    def test_plumbing_and_decay(self, time_model):
        sched = VPSchedule()
        x = np.array([0.5, -0.3])
        times = [0.0, 0.5, 1.0]
        ests = estimate_td_over_time(time_model, x, times, 0.0, sched,
                                     AttackConfig(epsilon=0.1), rng=4)
        assert len(ests) == 3
        for t, est in zip(times, ests):
            alpha, _ = sched.kernel_stats(t)
            np.testing.assert_allclose(est.x, alpha * x, atol=1e-12)
            # gamma=0 pins every estimate at the ambient dimension
            assert est.n_hat_clamped == 2.0

    def test_budget_tracks_sigma_t(self, time_model):
        sched = VPSchedule()
        x = np.array([1.0, 0.4])
        ests = estimate_td_over_time(time_model, x, [0.0, 0.8], 0.0, sched,
                                     AttackConfig(epsilon=0.33), rng=0)
        for t, est in zip([0.0, 0.8], ests):
            _, sigma_t = sched.kernel_stats(t)
            moved = np.linalg.norm(est.x_adv - est.x)
            assert moved == pytest.approx(sigma_t, rel=1e-9)

    def test_requires_time_conditioned_model(self):
        model = LinearScore(np.ones(2))
        model.time_conditioned = False
        with pytest.raises(ValueError, match="time-conditioned"):
            estimate_td_over_time(model, np.ones(2), [0.0], 0.01,
                                  VPSchedule(), AttackConfig(epsilon=0.1))

    def test_requires_sorted_times(self, time_model):
        with pytest.raises(ValueError, match="ascending"):
            estimate_td_over_time(time_model, np.ones(2), [0.5, 0.1], 0.0,
                                  VPSchedule(), AttackConfig(epsilon=0.1))


class TestEvaluateMse:
    """Scalar quality metric on clamped estimates."""

    def _fake(self, values):
        return [TDEstimate(np.zeros(1), np.zeros(1), 1.0, v, v, frozenset())
                for v in values]

    def test_exact_value(self):
        ests = self._fake([1.0, 2.0])
        assert evaluate_mse(ests, [1, 1]) == pytest.approx(0.5)

    def test_zero_for_perfect(self):
        ests = self._fake([1.0, 3.0, 2.0])
        assert evaluate_mse(ests, [1, 3, 2]) == 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            evaluate_mse([], [])
        with pytest.raises(ValueError):
            evaluate_mse(self._fake([1.0]), [1, 2])


class TestResultsFile:
    """Per-point CSV with slope, raw/clamped estimates, and flags."""

    def test_layout_and_flags(self, tmp_path):
        ests = [
            TDEstimate(np.array([1.0, 2.0]), np.array([1.1, 2.0]), 0.5,
                       1.7, 1.7, frozenset()),
            TDEstimate(np.array([0.0, 0.3]), np.array([0.1, 0.3]), 99.0,
                       3.4, 2.0, frozenset([NEGATIVE_NORMAL_VAR,
                                            ATTACK_FALLBACK])),
        ]
        path = tmp_path / "results.csv"
        write_results_csv(ests, path, comment="config cafef00d")
        lines = path.read_text().splitlines()
        assert lines[0] == "# config cafef00d"
        assert lines[1] == ("index,x0,x1,adv0,adv1,delta,n_hat_raw,"
                            "n_hat_clamped,flags")
        assert len(lines) == 4
        row = lines[3].split(",")
        assert row[0] == "1"
        assert float(row[5]) == 99.0
        assert row[-1] == "negative_normal_var;attack_fallback"
        clean = lines[2].split(",")
        assert clean[-1] == ""
        # repr round trip
        assert float(clean[1]) == 1.0 and float(clean[6]) == 1.7

    def test_rejects_empty(self, tmp_path):
        with pytest.raises(ValueError):
            write_results_csv([], tmp_path / "x.csv")
