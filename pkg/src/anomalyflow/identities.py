"""Audit of the pointwise and integral identities satisfied by the Chern connection.

Every check returns an :class:`IdentityEntry`; both sides of each identity are built
along separate code paths (tensor calculus on one side, plain spectral derivatives
or quadrature on the other).
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .forms import balanced_residual, omega_norm
from .lattice import GridSpec, dz_all, integrate
from .tensors import (
    MetricField,
    TensorField,
    curvature,
    nabla,
    nabla_bar,
    scalar_tensor,
    torsion_trace,
)

PASS, FAIL, NOT_APPLICABLE, REPORTED = "PASS", "FAIL", "NOT_APPLICABLE", "REPORTED"
BALANCED_GATE = 1e-7


@dataclass(frozen=True)
class IdentityEntry:
    name: str
    residual: float
    tolerance: float
    passed: bool
    metric: str = ""
    status: str = ""
    note: str = ""

    def __post_init__(self):
        if not self.status:
            object.__setattr__(self, "status", PASS if self.passed else FAIL)


def _entry(name: str, residual: float, tol: float, metric: str, note: str = "") -> IdentityEntry:
    residual = float(residual)
    return IdentityEntry(name, residual, tol, residual <= tol, metric, note=note)


def _not_applicable(name: str, tol: float, metric: str, bres: float, gate: float) -> IdentityEntry:
    note = f"balanced residual {bres:.3e} exceeds gate {gate:g}"
    return IdentityEntry(name, float("nan"), tol, False, metric, NOT_APPLICABLE, note)


@dataclass
class IdentityReport:
    entries: list[IdentityEntry] = field(default_factory=list)

    def add(self, entry: IdentityEntry) -> IdentityEntry:
        self.entries.append(entry)
        return entry

    def __getitem__(self, name: str) -> IdentityEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def failed(self) -> list[IdentityEntry]:
        return [e for e in self.entries if e.status == FAIL]

    @property
    def ok(self) -> bool:
        return not self.failed


def _gate(g: MetricField, gate: float) -> tuple[bool, float]:
    bres = balanced_residual(g)
    return bres <= gate, bres


def check_balanced_torsion(
    g: MetricField, tol: float = 1e-7, gate: float = BALANCED_GATE, metric: str = ""
) -> IdentityEntry:
    """max |T_i − ∂_i log‖Ω‖| on a conformally balanced metric."""
    name = "balanced_torsion"
    ok, bres = _gate(g, gate)
    if not ok:
        return _not_applicable(name, tol, metric, bres, gate)
    lhs = torsion_trace(g).data
    rhs = dz_all(np.log(omega_norm(g).values).astype(complex), g.grid)
    return _entry(name, np.max(np.abs(lhs - rhs), initial=0.0), tol, metric)


def check_dilaton_gradient(
    g: MetricField, tol: float = 1e-7, gate: float = BALANCED_GATE, metric: str = ""
) -> IdentityEntry:
    """u = 1/2‖Ω‖: ∇u = −uT, ∇̄u = −uT̄ and ∇∇̄u = u(T T̄ − ∇T̄).

    The residual is the worst of the three orders, relative to max |u|, so it is
    invariant under constant rescaling of g.
    """
    name = "dilaton_gradient"
    ok, bres = _gate(g, gate)
    if not ok:
        return _not_applicable(name, tol, metric, bres, gate)
    u = omega_norm(g).dilaton
    ut = scalar_tensor(u, g.grid)
    tr = torsion_trace(g)
    tbar = tr.conj()
    d10 = nabla(ut, g).data
    d01 = nabla_bar(ut, g).data
    d11 = nabla(nabla_bar(ut, g), g).data
    ux = u[..., None]
    r10 = np.max(np.abs(d10 + ux * tr.data), initial=0.0)
    r01 = np.max(np.abs(d01 + ux * tbar.data), initial=0.0)
    expect11 = u[..., None, None] * (
        np.einsum("...i,...j->...ij", tr.data, tbar.data) - nabla(tbar, g).data
    )
    r11 = np.max(np.abs(d11 - expect11), initial=0.0)
    scale = float(np.max(np.abs(u)))
    residual = max(r10, r01, r11) / scale
    note = f"orders (1,0) {r10 / scale:.3e}, (0,1) {r01 / scale:.3e}, (1,1) {r11 / scale:.3e}"
    return _entry(name, residual, tol, metric, note)


def curvature_action(rm: np.ndarray, A: TensorField) -> np.ndarray:
    """[∇_i, ∇_{j̄}] A predicted by the Chern curvature; array order [i, j̄, *A.slots]."""
    if A.rank > 6:
        raise ValueError(f"commutator check supports tensors of rank <= 6, got {A.rank}")
    n = A.grid.ndim
    out = np.zeros(A.grid.shape + (3, 3) + A.data.shape[n:], dtype=complex)
    letters = "abcdef"[: A.rank]
    for k, s in enumerate(A.slots):
        t = letters[k]
        src = letters.replace(t, "s")
        # unbarred slots act through R_{j̄i}, barred slots through conj(R_{īj})
        curv, sub = {
            "u": (rm, f"ji{t}s"),
            "l": (-rm, f"jis{t}"),
            "U": (-np.conj(rm), f"ij{t}s"),
            "L": (np.conj(rm), f"ijs{t}"),
        }[s]
        out += np.einsum(f"...{sub},...{src}->...ij{letters}", curv, A.data)
    return out


def check_commutator(
    g: MetricField, A: TensorField, m: int = 1, l: int = 1, tol: float = 1e-6, metric: str = ""
) -> IdentityEntry:
    """∇_i∇_{j̄}A − ∇_{j̄}∇_iA against the curvature action on each slot of A.

    Only m, l ≤ 1 have an exact index form; for m + l < 2 no reordering occurs and the
    residual is zero by definition.
    """
    if not (0 <= m <= 1 and 0 <= l <= 1):
        raise ValueError("commutator check is defined for m, l in {0, 1}")
    name = f"commutator_{m}{l}"
    if m + l < 2:
        return _entry(name, 0.0, tol, metric, "no reordering at this order")
    n = g.grid.ndim
    lhs = nabla(nabla_bar(A, g), g).data
    other = np.swapaxes(nabla_bar(nabla(A, g), g).data, n, n + 1)
    rhs = curvature_action(curvature(g).data, A)
    return _entry(name, np.max(np.abs(lhs - other - rhs), initial=0.0), tol, metric)


def check_divergence(g: MetricField, V: TensorField, tol: float = 1e-6, metric: str = "") -> IdentityEntry:
    """∫∇_iV^i = ∫T_iV^i against the metric volume, residual relative to 1 + |∫T_iV^i|."""
    if V.slots != "u":
        raise ValueError(f"divergence check needs a vector field with slots 'u', got {V.slots!r}")
    n = g.grid.ndim
    div = np.trace(nabla(V, g).data, axis1=n, axis2=n + 1)
    tv = np.einsum("...i,...i->...", torsion_trace(g).data, V.data)
    lhs = integrate(div, g)
    rhs = integrate(tv, g)
    residual = abs(lhs - rhs) / (1 + abs(rhs))
    return _entry("divergence", residual, tol, metric, f"∫div V = {lhs:.6e}, ∫T·V = {rhs:.6e}")


def check_chern_weil_preservation(
    residuals: Sequence[float], steps: int, per_step: float = 1e-7, metric: str = ""
) -> IdentityEntry:
    """Growth of the balanced residual along a Ψ-evolution run, allowed per_step per step."""
    if not len(residuals):
        raise ValueError("need at least one balanced-residual sample")
    r = np.asarray(residuals, dtype=float)
    growth = max(0.0, float(np.max(r - r[0])))
    tol = per_step * max(int(steps), 1)
    return _entry("chern_weil_preservation", growth, tol, metric, f"{steps} steps")


def band_limited_vector(grid: GridSpec, seed: int = 0, modes: int = 2) -> TensorField:
    """Smooth random vector field with Fourier content |k| ≤ modes on each active axis."""
    rng = np.random.default_rng(seed)
    data = np.zeros(grid.shape + (3,), dtype=complex)
    coords = [grid.coordinate(a) for a in grid.active_axes]
    for comp in range(3):
        data[..., comp] = rng.normal() + 1j * rng.normal()
        for x in coords:
            for k in range(1, modes + 1):
                c = (rng.normal(size=2) + 1j * rng.normal(size=2)) / k**2
                data[..., comp] += c[0] * np.cos(2 * np.pi * k * x) + c[1] * np.sin(2 * np.pi * k * x)
    return TensorField(grid, "u", data)


def audit(
    g: MetricField,
    metric: str = "",
    seed: int = 0,
    gate: float = BALANCED_GATE,
    tol: float = 1e-6,
) -> IdentityReport:
    """Run every pointwise and integral identity on ``g``."""
    report = IdentityReport()
    V = band_limited_vector(g.grid, seed)
    report.add(check_balanced_torsion(g, tol, gate, metric))
    report.add(check_dilaton_gradient(g, tol, gate, metric))
    report.add(check_commutator(g, scalar_tensor(np.ones(g.grid.shape), g.grid), 1, 1, tol, metric))
    report.entries[-1] = _rename(report.entries[-1], "commutator_scalar")
    report.add(check_commutator(g, V, 1, 1, tol, metric))
    report.add(check_divergence(g, V, tol, metric))
    return report


def _rename(e: IdentityEntry, name: str) -> IdentityEntry:
    return IdentityEntry(name, e.residual, e.tolerance, e.passed, e.metric, e.status, e.note)
