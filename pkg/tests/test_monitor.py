import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anomalyflow.flow import FlowState
from anomalyflow.lattice import GridSpec
from anomalyflow.monitor import (
    EXTENDABLE,
    NOT_CERTIFIED,
    AssumptionBounds,
    Derived,
    alpha_thresholds,
    default_mu,
    extension_certificate,
    gronwall_check,
    measure_bounds,
    monitor_state,
    reference_diagnostics,
    shi_quantities,
)
from anomalyflow.tensors import MetricField


def test_thresholds_at_unit_bounds():
    rep = alpha_thresholds(1, 1, 1, 3)
    assert rep["shi_k2_p"].bound == Fraction(1, 14)
    assert rep["linf_k2"].bound == Fraction(1, 26)
    assert rep["linf_k3"].bound == Fraction(1, 16)
    assert rep["extension"].bound == Fraction(1, 30_000_000)
    assert rep.mu == rep.mu_prime == Fraction(1, 300)
    assert not rep.flat


def test_threshold_scaling_in_B_and_C0():
    rep = alpha_thresholds(1, 2, Fraction(1, 2), 3)
    assert rep["extension"].bound == Fraction(1, 1_920_000_000)
    assert rep["linf_k2"].bound == Fraction(1, 52)
    assert rep["shi_k1_p"].bound == Fraction(1, 10**6 * 64 * 3)


def test_small_p_variants():
    rep = alpha_thresholds(1, 1, 1, 2)
    assert rep["shi_k2_small_p"].applies and not rep["shi_k2_p"].applies
    assert rep["shi_k2_small_p"].bound == Fraction(1, 14)
    assert rep.mu == Fraction(1, 300)
    assert default_mu(1, 1, 6) == Fraction(1, 600)


def test_zero_c0_gives_infinite_bounds():
    rep = alpha_thresholds(1, 2, 0, 3, alpha_prime=5)
    assert rep.flat
    assert rep["linf_k2"].bound is None
    assert rep["extension"].bound is not None
    assert all(e.satisfied for e in rep.entries)
    assert rep.pi1_ok and rep.pi2_ok


def test_split_bounds_reduce_to_plain_forms():
    rep = alpha_thresholds(1, 1, 1, 3, B_min=1, B_max=1)
    assert rep["extension_split"].bound == rep["extension"].bound
    assert rep["linf_k2_split"].bound == rep["linf_k2"].bound
    with pytest.raises(ValueError):
        alpha_thresholds(1, 1, 1, 3, B_min=2, B_max=1)


def test_satisfied_flags_and_products():
    rep = alpha_thresholds(1, 1, 2, 3, alpha_prime=Fraction(1, 100))
    assert rep["linf_k2"].satisfied  # 1/100 < 1/52
    assert not rep["extension"].satisfied
    assert rep.pi1_value == Fraction(4, 100)
    assert rep.pi2_value == Fraction(2, 100)


def test_threshold_input_validation():
    for args in [(0, 1, 1, 3), (1, 0.5, 1, 3), (1, 1, -1, 3), (1, 1, 1, 0.5)]:
        with pytest.raises(ValueError):
            alpha_thresholds(*args)
    with pytest.raises(ValueError):
        alpha_thresholds(1, math.inf, 1, 3)


def _bounds(a0=1.0, B=2.0, C0=1.0):
    return AssumptionBounds(B=B, C0=C0, a0=a0)


def test_certificate_boundary_is_strict():
    b = _bounds(B=1.0, C0=1.0)
    bound = Fraction(1, 30_000_000)
    assert extension_certificate(b, bound).verdict == NOT_CERTIFIED
    assert extension_certificate(b, bound * Fraction(999, 1000)).verdict == EXTENDABLE
    assert extension_certificate(_bounds(B=2.0), 1e-10).verdict == EXTENDABLE
    assert extension_certificate(_bounds(B=2.0), 1e-9).verdict == NOT_CERTIFIED


def test_certificate_flat_regime():
    cert = extension_certificate(_bounds(B=2.0, C0=0.0), 0.1)
    assert cert.verdict == EXTENDABLE
    assert "flat" in cert.explanation


def test_bounds_validation():
    with pytest.raises(ValueError):
        AssumptionBounds(B=0.5, C0=1)
    with pytest.raises(ValueError):
        AssumptionBounds(B=1, C0=-1)
    with pytest.raises(ValueError):
        AssumptionBounds(B=1, C0=1, a0=0)


rationals = st.fractions(min_value=Fraction(1, 1000), max_value=1000, max_denominator=1000)


@settings(max_examples=100, deadline=None)
@given(
    a0=rationals,
    B=st.fractions(min_value=1, max_value=100, max_denominator=100),
    C0=rationals,
    p=st.fractions(min_value=1, max_value=20, max_denominator=10),
    factor=st.fractions(min_value=Fraction(101, 100), max_value=10, max_denominator=100),
)
def test_thresholds_shrink_as_bounds_grow(a0, B, C0, p, factor):
    base = alpha_thresholds(a0, B, C0, p)
    for grown in (
        alpha_thresholds(a0 * factor, B, C0, p),
        alpha_thresholds(a0, B * factor, C0, p),
        alpha_thresholds(a0, B, C0 * factor, p),
        alpha_thresholds(a0, B, C0, p * factor),
    ):
        for e, f in zip(base.entries, grown.entries):
            assert f.bound <= e.bound
        assert grown.mu <= base.mu
    ap = base["extension"].bound / 2
    cert = extension_certificate(AssumptionBounds(B=float(B), C0=float(C0), a0=float(a0)), ap)
    if C0 > Fraction(1, 10**10) and float(B) == B and float(C0) == C0 and float(a0) == a0:
        assert cert.verdict == EXTENDABLE


def test_gronwall_fitted_rate():
    ts = np.linspace(0, 1, 11)
    series = list(zip(ts, np.expm1(0.7 * ts)))
    fit = gronwall_check(series)
    assert fit.Lambda == pytest.approx(0.7)
    assert not fit.envelope_violated
    flat = gronwall_check([(t, 0.0) for t in ts])
    assert flat.Lambda == 0.0


def test_gronwall_fixed_rate_detects_violation():
    ts = np.linspace(0, 1, 5)
    fit = gronwall_check(list(zip(ts, np.expm1(2.0 * ts))), reference=1.0)
    assert fit.envelope_violated
    assert fit.worst_ratio > 1
    with pytest.raises(ValueError):
        gronwall_check([(0.0, 1.0), (0.0, 2.0)])


def test_flat_state_measurements(grid16):
    s = FlowState.from_metric(MetricField.identity(grid16))
    b = measure_bounds(s)
    assert b.B == 2.0 and b.C0 == 0.0 and b.flat
    shi = shi_quantities(s, 0.1)
    assert shi.sup() == 0.0
    assert shi.mu == pytest.approx(1 / 1200)


def test_scaled_metric_bound(grid16):
    s = FlowState.from_metric(MetricField.identity(grid16, 2.0))
    assert measure_bounds(s).B == pytest.approx(math.sqrt(2), rel=1e-14)


def test_conformal_state_measurements(conformal16):
    s = FlowState.from_metric(conformal16)
    b = measure_bounds(s)
    assert b.C0 > 0.1 and len(b.Cq) == 2
    shi = shi_quantities(s, 0.0, mu=0.5, mu_prime=0.25)
    assert np.allclose(shi.G_weighted, 0.5 * shi.G1)
    assert np.allclose(shi.Gprime_weighted, 0.25 * shi.G2)
    assert shi.lp_integrals[("G1", 3.0)] > 0
    with pytest.raises(ValueError):
        Derived(s, 3)


def test_monitor_report(balanced16):
    r = monitor_state(FlowState.from_metric(balanced16), 1e-12)
    assert r.certificate.verdict == EXTENDABLE
    assert r.balanced_residual < 1e-10
    assert 0.5 < r.min_eigenvalue < 1.0


def test_reference_diagnostics(balanced16, grid16):
    same = reference_diagnostics(balanced16, balanced16)
    assert same.h_sup == pytest.approx(1.0) and same.h_inv_sup == pytest.approx(1.0)
    assert np.max(np.abs(same.S.data)) < 1e-15
    flat = MetricField.identity(grid16)
    d = reference_diagnostics(balanced16, flat)
    # relative to the flat metric, S = -Γ and D̂g is the plain derivative
    assert np.allclose(d.S.data, -balanced16.christoffel)
    assert d.hatDq_g_norms[0] == pytest.approx(float(np.sqrt(np.max(np.sum(np.abs(balanced16.g) ** 2, (-2, -1))))))
    assert d.hatDq_g_norms[1] > 0


def test_certificate_accepts_rational_bounds():
    b = AssumptionBounds(B=Fraction(3, 2), C0=Fraction(1, 3), a0=Fraction(2))
    cert = extension_certificate(b, Fraction(1, 10**12))
    assert cert.verdict == EXTENDABLE
    assert cert.bound == Fraction(1, 3 * 10**7 * 2) / Fraction(3, 2) ** 6
