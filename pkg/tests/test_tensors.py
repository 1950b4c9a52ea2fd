import numpy as np
import pytest

from anomalyflow.initial import conformal, kahler_potential
from anomalyflow.lattice import GridSpec
from anomalyflow.tensors import (
    MetricField,
    SingularMetricError,
    TensorField,
    chern_ricci,
    christoffel,
    curvature,
    derivative_tower,
    dq_norm_sq,
    nabla,
    nabla_bar,
    scalar_tensor,
    tensor_norm_sq,
    torsion,
    torsion_trace,
)


def _conformal_oracle(grid, A):
    """Closed forms for g = e^u I, u = A cos(2πx¹)."""
    x = grid.coordinate("x1")
    u = A * np.cos(2 * np.pi * x)
    du = np.zeros(grid.shape + (3,), dtype=complex)
    du[..., 0] = -np.pi * A * np.sin(2 * np.pi * x)  # ∂_{z¹}u
    ddbar = -np.pi**2 * A * np.cos(2 * np.pi * x)  # ∂_{z̄¹}∂_{z¹}u
    eye = np.eye(3)
    gam = np.einsum("ab,...k->...akb", eye, du)
    rm = np.zeros(grid.shape + (3, 3, 3, 3), dtype=complex)
    rm[..., 0, 0, :, :] = -ddbar[..., None, None] * eye
    eu = np.exp(u)[..., None, None, None]
    t = eu * (np.einsum("pk,...q->...pqk", eye, du) - np.einsum("pq,...k->...pqk", eye, du))
    return gam, rm, t


@pytest.mark.parametrize("N", [16, 32])
def test_conformal_metric_matches_closed_forms(N):
    grid = GridSpec(N, ("x1",))
    g = conformal(grid, 0.1, "x1")
    gam, rm, t = _conformal_oracle(grid, 0.1)
    assert np.max(np.abs(christoffel(g).data - gam)) < 1e-9
    assert np.max(np.abs(curvature(g).data - rm)) < 1e-9
    assert np.max(np.abs(torsion(g).data - t)) < 1e-9


def test_metric_validation(grid16):
    bad = np.broadcast_to(np.diag([1.0, 1.0, -1.0]), grid16.shape + (3, 3)).astype(complex)
    with pytest.raises(SingularMetricError):
        MetricField(grid16, bad)
    skew = np.broadcast_to(np.eye(3) + np.triu(np.ones((3, 3)), 1), grid16.shape + (3, 3))
    with pytest.raises(SingularMetricError):
        MetricField(grid16, skew)
    with pytest.raises(ValueError):
        MetricField(grid16, np.eye(3))


def test_tensor_slot_validation(grid16):
    with pytest.raises(ValueError):
        TensorField(grid16, "x", np.zeros(grid16.shape + (3,)))
    with pytest.raises(ValueError):
        TensorField(grid16, "ll", np.zeros(grid16.shape + (3,)))
    with pytest.raises(ValueError):
        TensorField(grid16, "l" * 9, np.zeros(grid16.shape + (3,) * 9))
    a = TensorField(grid16, "lU", np.ones(grid16.shape + (3, 3)))
    assert a.conj().slots == "Lu"
    assert a.signature == (0, 1, 1, 0)


def test_flat_metric_has_no_curvature_or_torsion(grid16):
    g = MetricField.identity(grid16)
    assert curvature(g).max_abs() == 0.0
    assert torsion(g).max_abs() == 0.0


def test_kahler_metric_is_torsion_free():
    grid = GridSpec(16, ("x1", "x2"))
    g = kahler_potential(grid, 0.01, ("x1", "x2"))
    assert torsion(g).max_abs() < 1e-12
    assert curvature(g).max_abs() > 1e-3


def test_metric_compatibility(balanced16):
    # ∇g = 0 and ∇̄g = 0 for the Chern connection
    gt = balanced16.as_tensor()
    assert nabla(gt, balanced16).max_abs() < 1e-12
    assert nabla_bar(gt, balanced16).max_abs() < 1e-12


def test_torsion_is_antisymmetric(balanced16):
    t = torsion(balanced16).data
    assert np.max(np.abs(t + np.swapaxes(t, -1, -2))) < 1e-14


def test_curvature_symmetry(balanced16):
    # lowering the upper index gives R_{p̄qr̄s} with conj(R_{p̄qr̄s}) = R_{q̄ps̄r}
    rm = curvature(balanced16).data
    low = np.einsum("...pqrs,...tr->...pqts", rm, balanced16.g)  # R_{p̄q t̄ s}
    swapped = np.conj(np.swapaxes(np.swapaxes(low, -4, -3), -2, -1))
    assert np.max(np.abs(low - swapped)) < 1e-12


def test_scalar_covariant_derivatives_are_partials(conformal16):
    grid = conformal16.grid
    f = np.cos(2 * np.pi * grid.coordinate("x1")) + 0j
    d = nabla(scalar_tensor(f, grid), conformal16).data
    assert np.max(np.abs(d[..., 0] + np.pi * np.sin(2 * np.pi * grid.coordinate("x1")))) < 1e-12
    assert np.max(np.abs(d[..., 1:])) == 0.0


def test_norm_uses_the_metric(grid16):
    g = MetricField.identity(grid16, 2.0)
    v = TensorField(grid16, "u", np.ones(grid16.shape + (3,), dtype=complex))
    w = TensorField(grid16, "l", np.ones(grid16.shape + (3,), dtype=complex))
    assert np.allclose(tensor_norm_sq(v, g), 6.0)
    assert np.allclose(tensor_norm_sq(w, g), 1.5)


def test_derivative_tower_norms(balanced16):
    t = torsion(balanced16)
    tower = derivative_tower(t, balanced16, 2)
    assert set(tower) == {(m, l) for m in range(3) for l in range(3) if m + l <= 2}
    assert tower[(1, 1)].slots == "l" + "L" + t.slots
    q1 = dq_norm_sq(t, balanced16, 1, 2, tower)
    direct = tensor_norm_sq(tower[(1, 0)], balanced16) + tensor_norm_sq(tower[(0, 1)], balanced16)
    assert np.allclose(q1, direct)


def test_chern_ricci_and_trace(conformal16):
    # for g = e^u I the Chern–Ricci form is -3 ∂_k̄∂_j u and T_i = -2 ∂_i u
    grid = conformal16.grid
    x = grid.coordinate("x1")
    ric = chern_ricci(curvature(conformal16)).data
    assert np.max(np.abs(ric[..., 0, 0] - 3 * np.pi**2 * 0.1 * np.cos(2 * np.pi * x))) < 1e-9
    tr = torsion_trace(conformal16).data
    assert np.max(np.abs(tr[..., 0] + 2 * (-np.pi * 0.1 * np.sin(2 * np.pi * x)))) < 1e-9
