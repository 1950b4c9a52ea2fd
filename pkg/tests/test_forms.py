import numpy as np
import pytest

from anomalyflow.forms import (
    FormError,
    FormField,
    PsiPositivityError,
    balanced_residual,
    closed_residual,
    constant_form,
    del_,
    delbar,
    exterior_d,
    i_ddbar,
    lefschetz_contract,
    metric_from_omega,
    metric_from_psi,
    omega_from_metric,
    omega_norm,
    psi_from_metric,
    psi_root,
    scalar_form,
    trace_rm_wedge_rm,
    wedge,
)
from anomalyflow.initial import balanced_psi, balanced_psi_form, conformal, kahler_potential
from anomalyflow.lattice import GridSpec
from anomalyflow.tensors import MetricField, curvature


def _random_11(grid, seed=1):
    rng = np.random.default_rng(seed)
    x = grid.coordinate("x1")
    c = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    return FormField(grid, 1, 1, np.cos(2 * np.pi * x)[..., None, None] * c)


def test_bidegree_checks(grid16):
    with pytest.raises(FormError):
        FormField.zeros(grid16, 4, 0)
    with pytest.raises(FormError):
        FormField(grid16, 1, 1, np.zeros(grid16.shape + (3,)))
    with pytest.raises(FormError):
        FormField.zeros(grid16, 1, 1) + FormField.zeros(grid16, 2, 0)


def test_d_squared_vanishes(grid16):
    a = _random_11(grid16)
    assert del_(del_(a)).max_abs() < 1e-9
    assert delbar(delbar(a)).max_abs() < 1e-9
    mixed = del_(delbar(a)) + delbar(del_(a))
    assert mixed.max_abs() < 1e-9


def test_exact_forms_are_closed(grid16):
    f = np.sin(2 * np.pi * grid16.coordinate("x1")) + 0j
    w = i_ddbar(scalar_form(f, grid16))
    assert closed_residual(w) < 1e-10
    d1, d2 = exterior_d(w)
    assert d1.degree == 3 and d2.degree == 3


def test_wedge_is_graded_commutative(grid16):
    a = _random_11(grid16, 1)
    b = _random_11(grid16, 2)
    assert np.allclose(wedge(a, b).coeffs, wedge(b, a).coeffs)
    one = FormField(grid16, 1, 0, np.ones(grid16.shape + (3,)))
    assert wedge(one, one).max_abs() < 1e-15


def test_conjugation_is_an_involution(grid16):
    a = _random_11(grid16)
    assert np.allclose(a.conj().conj().coeffs, a.coeffs)


def test_metric_form_roundtrip(balanced16):
    w = omega_from_metric(balanced16)
    assert np.allclose(metric_from_omega(w).g, balanced16.g)
    # ω is a real form
    assert np.allclose(w.conj().coeffs, w.coeffs)


def test_flat_psi_and_volume(grid16):
    g = MetricField.identity(grid16)
    assert np.allclose(omega_norm(g).values, 1.0)
    psi = psi_from_metric(g)
    assert np.allclose(metric_from_psi(psi).g, g.g)


def test_psi_roundtrip_is_identity(conformal16):
    back = metric_from_psi(psi_from_metric(conformal16))
    assert np.max(np.abs(back.g - conformal16.g)) < 1e-13


def test_psi_root_squares_back(balanced16):
    psi = balanced_psi_form(balanced16.grid, 0.01, "x1")
    w = omega_from_metric(psi_root(psi))
    assert np.max(np.abs(wedge(w, w).coeffs - psi.coeffs)) < 1e-13


def test_psi_positivity_error_has_location(grid16):
    psi = constant_form(grid16, -np.eye(3))
    with pytest.raises(PsiPositivityError) as exc:
        psi_root(psi)
    assert exc.value.location == (0,)


def test_balanced_construction(balanced16, conformal16):
    assert balanced_residual(balanced16) < 1e-10
    assert balanced_residual(conformal16) > 1e-3


def test_lefschetz_normalisation(balanced16):
    # Λ(ω∧χ) = χ + (Λχ)ω with Λχ = g^{ab̄} χ_{ab̄}-trace
    grid = balanced16.grid
    w = omega_from_metric(balanced16)
    chi = _random_11(grid)
    lhs = lefschetz_contract(wedge(w, chi), balanced16)
    chi_ll = -1j * np.swapaxes(chi.coeffs, -1, -2)  # as an (Ll) array, like g
    trace = np.einsum("...ab,...ba->...", balanced16.inv, chi_ll)
    rhs = chi_ll + trace[..., None, None] * balanced16.g
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_trace_rm_wedge_rm_vanishes_with_one_axis(conformal16):
    assert trace_rm_wedge_rm(curvature(conformal16)).max_abs() < 1e-14


def test_trace_rm_wedge_rm_is_closed():
    grid = GridSpec(16, ("x1", "x2"))
    # a product metric would give zero; the balanced family couples the two directions
    g = balanced_psi(grid, 0.05, ("x1", "x2"))
    cw = trace_rm_wedge_rm(curvature(g))
    assert cw.max_abs() > 1e-3
    assert closed_residual(cw) < 1e-8


def test_constant_form_is_real_and_closed(grid16):
    phi = constant_form(grid16, np.diag([1.0, 2.0, 3.0]))
    assert closed_residual(phi) == 0.0
    assert np.allclose(phi.conj().coeffs, phi.coeffs)
    # the dual of ω_flat² is 2·I
    flat = psi_from_metric(MetricField.identity(grid16))
    assert np.allclose(constant_form(grid16, 2 * np.eye(3)).coeffs, flat.coeffs)


def test_conformal_two_axes_is_not_balanced():
    grid = GridSpec(8, ("x1", "x2"))
    assert balanced_residual(conformal(grid, 0.05, ("x1", "x2"))) > 1e-3


def test_i_ddbar_of_a_cosine():
    # i∂∂̄φ = i φ_{1 1̄} dz¹∧dz̄¹ with φ_{1 1̄} = ¼ φ_xx = -0.01π² cos(2πx¹)
    grid = GridSpec(32, ("x1",))
    x = grid.coordinate("x1")
    w = i_ddbar(scalar_form(0.01 * np.cos(2 * np.pi * x) + 0j, grid))
    expect = np.zeros(grid.shape + (3, 3), dtype=complex)
    expect[..., 0, 0] = -0.01j * np.pi**2 * np.cos(2 * np.pi * x)
    assert np.max(np.abs(w.coeffs - expect)) < 1e-12


def test_single_axis_kahler_form_is_ddbar_closed():
    # ω depends on z¹ only through its (1,1̄) entry, so i∂∂̄ω vanishes identically
    grid = GridSpec(32, ("x1",))
    g = kahler_potential(grid, 0.01, "x1")
    assert i_ddbar(omega_from_metric(g)).max_abs() < 1e-14
    assert balanced_residual(g) > 1e-3  # Kähler but not conformally balanced
