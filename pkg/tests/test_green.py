import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from hslekit import rdiffusion as rd
from hslekit.green import (
    CASE_OF,
    GreenInputs,
    alpha_of,
    exponents,
    g3,
    gstar,
    gstar_face_exponents,
    green_value,
    martingale_bound_constant,
    martingale_observable,
)
from hslekit.specialfn import ParameterError, hsle_F


# second transcription in mpmath: product over sides, F inverted at the cross ratio
def _F(k, x):
    return mp.hyp2f1(4 / mp.mpf(k), 1 - 4 / mp.mpf(k), 8 / mp.mpf(k), x)


def ref_g1(k, w, v):
    e8, e4 = 8 / mp.mpf(k) - 1, 4 / mp.mpf(k)
    w = {s: mp.mpf(u) for s, u in w.items()}
    v = {s: mp.mpf(u) for s, u in v.items()}
    pre = mp.mpf(1)
    for s, o in (("+", "-"), ("-", "+")):
        pre *= abs(w[s] - v[s]) ** e8 * abs(w[s] - v[o]) ** e4
    x = (w["+"] - w["-"]) * (v["+"] - v["-"]) / ((w["+"] - v["-"]) * (v["+"] - w["-"]))
    return pre / _F(k, x)


def ref_g2(k, w, v):
    e8, e4 = 8 / mp.mpf(k) - 1, 4 / mp.mpf(k)
    w = {s: mp.mpf(u) for s, u in w.items()}
    v = {s: mp.mpf(u) for s, u in v.items()}
    pre = abs(w["+"] - w["-"]) ** e8 * abs(v["+"] - v["-"]) ** e8
    for s, o in (("+", "-"), ("-", "+")):
        pre *= abs(w[s] - v[o]) ** e4
    x = (v["+"] - w["+"]) * (w["-"] - v["-"]) / ((w["+"] - v["-"]) * (v["+"] - w["-"]))
    return pre / _F(k, x)


def ref_g3(k, wp, wm, vp):
    e8, e4 = 8 / mp.mpf(k) - 1, 4 / mp.mpf(k)
    wp, wm, vp = mp.mpf(wp), mp.mpf(wm), mp.mpf(vp)
    return abs(wp - wm) ** e8 * abs(vp - wm) ** e4 / _F(k, (vp - wp) / (vp - wm))


ordered4 = st.lists(st.floats(-5, 5), min_size=4, max_size=4, unique=True).map(sorted)


class TestInputs:
    def test_ordering(self):
        with pytest.raises(ParameterError):
            GreenInputs("A1", 6.0, -0.5, 0.5, 1.0, -1.0)
        with pytest.raises(ParameterError):
            GreenInputs("B", 6.0, 0.5, -0.5, 0.2)
        with pytest.raises(ParameterError):
            GreenInputs("A2", 6.0, 0.5, -0.5, 1.0)
        with pytest.raises(ParameterError):
            GreenInputs("C", 6.0, 0.5, -0.5, 1.0)

    def test_pattern_case_insensitive(self):
        assert GreenInputs("b", 6.0, 0.5, -0.5, 1.0).pattern == "B"

    def test_span_and_transform(self):
        g = GreenInputs("A1", 6.0, 0.5, -0.25, 1.0, -2.0)
        assert g.span == 2.0
        t = g.transformed(2.0, 0.3)
        assert t.points == pytest.approx((1.3, -0.2, 2.3, -3.7))


class TestExponents:
    def test_values(self):
        assert alpha_of("A1", 6.0) == 2.0
        assert alpha_of("B", 6.0) == 1.0
        e = exponents(6.0)
        assert (e.beta1p, e.beta2p, e.beta3p) == (5 / 6, 5 / 6, 4 / 5)

    @given(st.floats(0.1, 7.99))
    def test_consistency(self, k):
        e = exponents(k)
        assert e.alpha1 == e.alpha2 == 2 * e.alpha3
        assert alpha_of("A2", k) == pytest.approx(2 / k * (12 - k), rel=1e-14)
        assert e.alpha3 > 0

    def test_kappa_range(self):
        with pytest.raises(ParameterError):
            exponents(8.0)


class TestGreenValue:
    def test_a1_symmetric_dual(self):
        for k in (3.0, 6.0):
            for r in (0.1, 0.5, 0.9):
                ref = ref_g1(k, {"+": r, "-": -r}, {"+": 1, "-": -1})
                g = green_value(GreenInputs("A1", k, r, -r, 1.0, -1.0))
                assert g == pytest.approx(float(ref), rel=1e-12)

    @given(ordered4, st.sampled_from([2.0, 4.0, 6.0, 7.5]))
    @settings(max_examples=60, deadline=None)
    def test_dual_transcription(self, pts, k):
        vm, wm, wp, vp = pts
        assume(min(np.diff(pts)) > 1e-3)
        w, v = {"+": wp, "-": wm}, {"+": vp, "-": vm}
        a1 = green_value(GreenInputs("A1", k, wp, wm, vp, vm))
        a2 = green_value(GreenInputs("A2", k, wp, wm, vp, vm))
        b = green_value(GreenInputs("B", k, wp, wm, vp))
        assert a1 == pytest.approx(float(ref_g1(k, w, v)), rel=1e-10)
        assert a2 == pytest.approx(float(ref_g2(k, w, v)), rel=1e-10)
        assert b == pytest.approx(float(ref_g3(k, wp, wm, vp)), rel=1e-10)

    @pytest.mark.parametrize("pattern", ["A1", "A2", "B"])
    def test_covariance(self, pattern):
        # prefactors are homogeneous of degree +alpha and the cross ratio is invariant
        g = GreenInputs(pattern, 6.0, 0.4, -0.3, 1.0, None if pattern == "B" else -1.5)
        a, b = 2.0, 0.3
        lhs = green_value(g.transformed(a, b))
        assert lhs == pytest.approx(a ** alpha_of(pattern, 6.0) * green_value(g), rel=1e-10)

    @given(st.floats(0.1, 10), st.floats(-5, 5), st.floats(0.5, 7.5))
    @settings(max_examples=40, deadline=None)
    def test_covariance_property(self, a, b, k):
        g = GreenInputs("A2", k, 0.2, -0.7, 1.3, -2.0)
        lhs = green_value(g.transformed(a, b))
        assert lhs == pytest.approx(a ** alpha_of("A2", k) * green_value(g), rel=1e-9)

    def test_b_at_v_plus(self):
        k, wm, vp = 6.0, -0.5, 1.0
        ref = abs(vp - wm) ** (8 / k - 1) * abs(vp - wm) ** (4 / k)
        assert float(g3(k, vp, wm, vp)) == pytest.approx(ref, rel=1e-14)

    @given(ordered4, st.floats(0.5, 7.5))
    @settings(max_examples=40, deadline=None)
    def test_positive(self, pts, k):
        vm, wm, wp, vp = pts
        assume(min(np.diff(pts)) > 1e-6)
        for p in ("A1", "A2"):
            assert green_value(GreenInputs(p, k, wp, wm, vp, vm)) > 0
        assert green_value(GreenInputs("B", k, wp, wm, vp)) > 0


class TestGstar:
    def test_g3_corner(self):
        assert float(gstar(3, 1.0, 1.0, 6.0)) == pytest.approx(2.0, rel=1e-14)
        for k in (2.0, 5.0):
            assert float(gstar(3, 1.0, 1.0, k)) == pytest.approx(2 ** (12 / k - 1), rel=1e-13)

    def test_g3_uses_reflected_minus(self):
        # G3*(r+, r-) = G3(r+, -r-; 1)
        assert float(gstar(3, 0.3, 0.6, 6.0)) == pytest.approx(float(ref_g3(6.0, 0.3, -0.6, 1.0)), rel=1e-12)

    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    @settings(max_examples=40)
    def test_g2_symmetric(self, a, b):
        assume(a + b > 1e-6)
        assert float(gstar(2, a, b, 6.0)) == pytest.approx(float(gstar(2, b, a, 6.0)), rel=1e-12)

    @given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
    @settings(max_examples=30)
    def test_g1_symmetric(self, a, b):
        assert float(gstar(1, a, b, 6.0)) == pytest.approx(float(gstar(1, b, a, 6.0)), rel=1e-12)

    @pytest.mark.parametrize("kappa", [3.0, 6.0])
    def test_g1_face_rate(self, kappa):
        e = gstar_face_exponents(1, kappa)[0]
        assert e == pytest.approx(8 / kappa - 1)
        # F carries a (1 - x)^(8/k - 1) correction, so the local slope converges slowly
        d = np.array([1e-8, 1e-11])
        v = gstar(1, 1 - d, 0.4, kappa)
        slope = math.log(v[1] / v[0]) / math.log(d[1] / d[0])
        assert slope == pytest.approx(e, rel=1e-2)
        assert float(gstar(1, 1.0, 0.4, kappa)) == 0.0

    def test_bad_case(self):
        with pytest.raises(ParameterError):
            gstar(4, 0.5, 0.5, 6.0)

    def test_shared_with_survival(self):
        # golden: the survival asymptote is built from exactly this gstar
        for case in (1, 2, 3):
            b = rd.SpectralBasis(rd.case_params(case, 6.0))
            s = rd.survival_probability(b, case, (0.35, 0.55), 2.0)
            alpha = alpha_of({1: "A1", 2: "A2", 3: "B"}[case], 6.0)
            want = rd.normalizer(b, case) * float(gstar(case, 0.35, 0.55, 6.0)) * math.exp(-4 * alpha)
            assert s.asymptote == want


class TestMartingale:
    def test_initial_value(self):
        g = GreenInputs("A1", 6.0, 0.4, -0.3, 1.0, -1.5)
        assert float(martingale_observable(1, 6.0, 0.4, -0.3, 1.0, -1.5)) == green_value(g)
        g = GreenInputs("B", 6.0, 0.4, -0.3, 1.0)
        assert float(martingale_observable(CASE_OF["B"], 6.0, 0.4, -0.3, 1.0)) == green_value(g)

    def test_zero_at_merge(self):
        assert float(martingale_observable(1, 6.0, 1.0, -0.3, 1.0, -1.5)) == 0.0
        assert float(martingale_observable(1, 6.0, 0.2, -1.5, 1.0, -1.5)) == 0.0

    def test_f_at_one(self):
        # W- = V- sends the A2 cross ratio to 0 and the A1 ratio to 1
        v = float(martingale_observable(2, 6.0, 0.2, -1.5, 1.0, -1.5))
        assert np.isfinite(v) and v > 0

    def test_ordering_error(self):
        with pytest.raises(ParameterError):
            martingale_observable(1, 6.0, -0.3, 0.4, 1.0, -1.5)
        with pytest.raises(ParameterError):
            martingale_observable(1, 6.0, 0.4, -0.3, 1.0, -0.1)
        with pytest.raises(ParameterError):
            martingale_observable(3, 6.0, 1.2, -0.3, 1.0)

    @given(ordered4, st.floats(0.5, 7.9))
    @settings(max_examples=80, deadline=None)
    def test_bound(self, pts, k):
        vm, wm, wp, vp = pts
        c = martingale_bound_constant(k)
        m = float(martingale_observable(1, k, wp, wm, vp, vm))
        assert m <= c * abs(vp - vm) ** alpha_of("A1", k) * (1 + 1e-12)

    def test_bound_constant(self):
        assert martingale_bound_constant(6.0) == pytest.approx(1 / min(1.0, float(hsle_F(6.0, 1.0))))

    def test_vectorized(self):
        wp = np.array([0.1, 0.2, 0.3])
        out = martingale_observable(1, 6.0, wp, -0.4, 1.0, -1.0)
        assert out.shape == (3,)
        assert out[1] == float(martingale_observable(1, 6.0, 0.2, -0.4, 1.0, -1.0))
