import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hslekit.drivers import (
    HsleConfig,
    SleKrConfig,
    StepPolicy,
    gtilde_table,
    path_rng,
    simulate_conditional_chordal,
    simulate_hsle,
    simulate_hsle_chordal,
    simulate_sle_kr,
)
from hslekit.loewner import DriverPath, ZipperState, coarsen, map_point, max_tip_modulus
from hslekit.specialfn import ParameterError, hsle_Gtilde

POL = StepPolicy(h_max=1e-3)


def endpoints(fn, n, *args, **kw):
    return np.array([fn(*args, seed=11, index=i, **kw).driver.values[-1] for i in range(n)])


class TestConfigs:
    def test_kappa_range(self):
        with pytest.raises(ParameterError):
            SleKrConfig(8.0, 0.0)

    def test_solvability(self):
        with pytest.raises(ParameterError):
            SleKrConfig(6.0, 0.0, (("w+", -2.0),))
        SleKrConfig(6.0, 0.0, (("w+", -2.0),), strict=False)
        SleKrConfig(6.0, 0.0, (("w+", -1.5), ("w-", -1.5)))

    def test_hsle_ordering(self):
        with pytest.raises(ParameterError):
            HsleConfig(6.0, "to-infinity", 0.0, 2.0, 1.0)
        with pytest.raises(ParameterError):
            HsleConfig(6.0, "to-infinity", 0.0, 1.0, -1.0)
        HsleConfig(6.0, "to-infinity", 0.0, -1.0, -2.0)

    def test_chordal_cross_ratio(self):
        c = HsleConfig(6.0, "chordal", 0.0, -0.25, -1.0, w_inf=1.0)
        assert c.cross_ratio == pytest.approx(0.4)
        with pytest.raises(ParameterError):
            HsleConfig(6.0, "chordal", 0.0, 2.0, -1.0, w_inf=1.0)

    def test_point_syntax(self):
        with pytest.raises(ParameterError):
            SleKrConfig(6.0, 0.0, (("0", 1.0),)).kappa and simulate_sle_kr(
                SleKrConfig(6.0, 0.0, ((0.0, 1.0),)), 0.1, 0)


class TestGtildeTable:
    @pytest.mark.parametrize("kappa", [2.0, 6.0, 7.5])
    def test_accuracy(self, kappa):
        tab = gtilde_table(kappa)
        x = np.concatenate([np.linspace(0, 0.99, 200), 1 - np.logspace(-3, -8, 20)])
        assert np.allclose(tab(x), hsle_Gtilde(kappa, x), rtol=1e-6)

    def test_zero_and_kappa4(self):
        assert gtilde_table(6.0)(0.0) == 2.0
        assert np.all(np.abs(gtilde_table(4.0)(np.linspace(0, 0.999, 50)) - 2.0) < 1e-12)


class TestSleKr:
    def test_empty(self):
        r = simulate_sle_kr(SleKrConfig(6.0, 0.3), 0.0, seed=1)
        assert r.n_steps == 0 and r.driver.values[0] == 0.3
        assert r.stop_reason == "time-out"

    def test_brownian_variance(self):
        n = 10_000
        w = endpoints(simulate_sle_kr, n, SleKrConfig(6.0, 0.0), 1.0, policy=StepPolicy(h_max=0.02))
        v = np.var(w, ddof=1)
        se = 6.0 * math.sqrt(2 / (n - 1))
        assert abs(v - 6.0) < 3 * se
        assert abs(np.mean(w)) < 3 * math.sqrt(6 / n)

    def test_drift_sign(self):
        # rho / (w - v) with rho = 2, v = 1 starts negative: the driver is pushed away from v
        n = 10_000
        w = endpoints(simulate_sle_kr, n, SleKrConfig(6.0, 0.0, ((1.0, 2.0),)), 0.1)
        assert np.mean(w) < -3 * np.std(w) / math.sqrt(n)

    def test_continuation_threshold(self):
        r = simulate_sle_kr(SleKrConfig(6.0, 0.0, (("w+", -2.0),), strict=False), 1.0, seed=0)
        assert r.stop_reason == "continuation-threshold" and r.n_steps == 0

    def test_threshold_reached_later(self):
        # a -2 force point at distance 1 is hit (glued) at some point for kappa = 6
        cfg = SleKrConfig(6.0, 0.0, ((0.05, -2.0),), strict=False)
        reasons = {simulate_sle_kr(cfg, 5.0, seed=3, index=i).stop_reason for i in range(20)}
        assert "continuation-threshold" in reasons

    def test_reproducible(self):
        cfg = SleKrConfig(3.0, 0.0, ((1.0, 1.0), (-2.0, -0.5)))
        a = simulate_sle_kr(cfg, 0.5, seed=42, index=7)
        b = simulate_sle_kr(cfg, 0.5, seed=42, index=7)
        c = simulate_sle_kr(cfg, 0.5, seed=42, index=8)
        assert a.driver.to_bytes() == b.driver.to_bytes()
        assert a.driver.to_bytes() != c.driver.to_bytes()

    def test_streams(self):
        a = path_rng(5, 0).standard_normal(4)
        assert np.array_equal(a, path_rng(5, 0).standard_normal(4))
        assert not np.array_equal(a, path_rng(5, 1).standard_normal(4))
        assert not np.array_equal(a, path_rng(6, 0).standard_normal(4))

    @given(st.floats(0.2, 5.0), st.integers(0, 1000))
    @settings(max_examples=15, deadline=None)
    def test_scale_equivariance(self, a, seed):
        cfg = SleKrConfig(4.0, 0.1, ((1.0, 2.0), (-0.7, 1.0)))
        cfg_a = SleKrConfig(4.0, 0.1 * a, ((a, 2.0), (-0.7 * a, 1.0)))
        r = simulate_sle_kr(cfg, 0.2, seed=seed, policy=POL)
        s = simulate_sle_kr(cfg_a, 0.2 * a * a, seed=seed, policy=POL.scaled(a))
        assert r.n_steps == s.n_steps
        assert np.allclose(s.driver.values / a, r.driver.values, rtol=1e-12, atol=1e-12)
        assert np.allclose(s.driver.times / a ** 2, r.driver.times, rtol=1e-12, atol=1e-15)

    def test_save(self, tmp_path):
        r = simulate_sle_kr(SleKrConfig(6.0, 0.0, ((1.0, 2.0),)), 0.05, seed=1)
        r.save(str(tmp_path / "run"))
        side = json.loads((tmp_path / "run.json").read_text())
        assert side["seed"] == 1 and side["stop_reason"] == "time-out"
        d = DriverPath.from_csv((tmp_path / "run.csv").read_text())
        assert np.array_equal(d.values, r.driver.values)
        e = DriverPath.from_bytes((tmp_path / "run.bin").read_bytes())
        assert np.array_equal(e.times, r.driver.times)


class TestHsle:
    def test_equal_points_no_drift(self):
        # identical to an SLE_k(rho) run with cancelling weights at the same point
        h = simulate_hsle(HsleConfig(6.0, "to-infinity", 0.0, 1.0, 1.0), 0.3, seed=2)
        s = simulate_sle_kr(SleKrConfig(6.0, 0.0, ((1.0, 1.0), (1.0, -1.0))), 0.3, seed=2)
        assert np.array_equal(h.driver.values, s.driver.values)

    def test_kappa4_matches_sle_kr(self):
        h = simulate_hsle(HsleConfig(4.0, "to-infinity", 0.0, 0.5, 2.0), 0.3, seed=9)
        s = simulate_sle_kr(SleKrConfig(4.0, 0.0, ((0.5, 2.0), (2.0, -2.0))), 0.3, seed=9)
        assert h.n_steps == s.n_steps
        assert np.max(np.abs(h.driver.values - s.driver.values)) < 1e-12

    def test_near_point_stress(self):
        r = simulate_hsle(HsleConfig(6.0, "to-infinity", 0.0, 1e-6, 1.0), 0.2, seed=4)
        assert np.all(np.isfinite(r.driver.values))
        assert r.stop_reason in ("time-out", "target-separated")
        assert r.n_steps > 200

    def test_wrong_mode(self):
        with pytest.raises(ParameterError):
            simulate_hsle(HsleConfig(6.0, "chordal", 0.0, -0.25, -1.0, w_inf=1.0), 0.1, 0)


class TestHsleChordal:
    CFG = HsleConfig(6.0, "chordal", 0.0, -0.25, -1.0, w_inf=1.0)

    def test_stops_when_target_swallowed(self):
        r = simulate_hsle_chordal(self.CFG, math.inf, seed=5)
        assert r.stop_reason == "target-separated"
        t = r.tracker
        assert t["w_inf"].swallowed or t["v2"].swallowed

    def test_reflection(self):
        ref = HsleConfig(6.0, "chordal", 0.0, 0.25, 1.0, w_inf=-1.0)
        n = 3000
        a = endpoints(simulate_hsle_chordal, n, self.CFG, 0.05, policy=POL)
        b = -endpoints(simulate_hsle_chordal, n, ref, 0.05, policy=POL)
        se = math.sqrt(np.var(a) / n + np.var(b) / n)
        assert abs(np.mean(a) - np.mean(b)) < 3.5 * se
        assert np.mean(a) > 3 * math.sqrt(np.var(a) / n)  # drifts toward w_inf = 1

    def test_radius_stop(self):
        r = simulate_hsle_chordal(HsleConfig(6.0, "chordal", 0.5, 1.0, math.inf, w_inf=-0.5), math.inf,
                                  seed=1, extra_points=(("vm", -1.0),), bracket=("v1", "vm"), u_stop=4.0)
        x = r.tracker
        assert r.stop_reason in ("radius-exceeded", "target-separated")
        if r.stop_reason == "radius-exceeded":
            assert x["v1"].x - x["vm"].x > 4.0

    @pytest.mark.parametrize("a", [0.5, 2.0, 4.0])
    def test_scale_equivariance_exact(self, a):
        # binary scalings commute with every rounding step: bit-exact
        r = simulate_hsle_chordal(self.CFG, 0.1, seed=8, policy=POL)
        s = simulate_hsle_chordal(self.CFG.scaled(a), 0.1 * a * a, seed=8, policy=POL.scaled(a))
        assert np.array_equal(s.driver.values / a, r.driver.values)

    def test_scale_equivariance_rounding(self):
        # other factors differ only by rounding, amplified where h ~ d^2 near a force point
        a = 3.0
        m0 = np.mean(endpoints(simulate_hsle_chordal, 20, self.CFG, 0.1, policy=POL))
        m1 = np.mean(endpoints(simulate_hsle_chordal, 20, self.CFG.scaled(a), 0.1 * a * a,
                               policy=POL.scaled(a)))
        assert abs(m1 / a - m0) < 1e-10

    def test_cross_ratio_band(self):
        r = simulate_hsle_chordal(self.CFG, math.inf, seed=3, x_band=(0.3, 0.5))
        assert r.stop_reason == "cross-ratio-exit"


class TestConditional:
    def test_identity_zipper(self):
        # SLE_k(k - 6) toward the target, same stream and roles as the SLE_k(rho) run
        k = 5.0
        c = simulate_conditional_chordal(ZipperState.empty(), -0.5, -1.0, k, 0.2, seed=6)
        s = simulate_sle_kr(SleKrConfig(k, -0.5, ((-1.0, k - 6.0),)), 0.2, seed=6)
        m = min(c.n_steps, s.n_steps)
        assert np.max(np.abs(c.driver.values[:m + 1] - s.driver.values[:m + 1])) < 1e-12

    def test_degenerate(self):
        with pytest.raises(ParameterError):
            simulate_conditional_chordal(ZipperState.empty(), 1.0, 1.0, 6.0, 1.0, seed=0)

    def test_tiny_first_curve(self):
        eps = 1e-4
        z = ZipperState.from_driver(DriverPath.constant(0.5, eps * eps / 4, 10))
        s0, t0 = map_point(z, complex(-0.5)).real, map_point(z, complex(-1.0)).real
        pol = StepPolicy()

        def reach(run, outer=None):
            zc, _ = coarsen(run.zipper(), np.maximum(0.5, 4 * np.sqrt(run.driver.times[1:])), 0.01)
            return max_tip_modulus(zc, outer=outer)

        agree = 0
        for i in range(100):
            a = simulate_conditional_chordal(z, s0, t0, 6.0, math.inf, seed=1, index=i, policy=pol)
            b = simulate_conditional_chordal(ZipperState.empty(), -0.5, -1.0, 6.0, math.inf, seed=1,
                                             index=i, policy=pol)
            agree += (reach(a, z) > 1.5) == (reach(b) > 1.5)
        assert agree >= 97
