"""(p,q)-forms on the lattice, the anchor form Ψ = ‖Ω‖_ω ω² and its pointwise inverse.

A (p,q)-form is stored through antisymmetric coefficients

    φ = 1/(p! q!) φ_{i1..ip j̄1..j̄q} dz^{i1}∧..∧dz^{ip}∧dz̄^{j1}∧..∧dz̄^{jq},

holomorphic indices first. The Kähler form of a metric is ω = i g_{k̄j} dz^j∧dz̄^k,
so ``ω_{j k̄} = i g_{k̄ j}``. The holomorphic volume form is Ω = dz¹∧dz²∧dz³ and
‖Ω‖_ω = det(g)^{-1/2}, normalised to 1 on the flat metric.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .lattice import GridSpec, ScalarField, dz_all
from .tensors import MetricField, SingularMetricError, TensorField


class FormError(ValueError):
    pass


class PsiPositivityError(FormError):
    """Ψ does not come from a positive (1,1)-form at some grid point."""

    def __init__(self, message: str, location: tuple[int, ...]):
        super().__init__(message)
        self.location = location


@lru_cache(maxsize=None)
def _perms(r: int) -> tuple[tuple[tuple[int, ...], int], ...]:
    out = []
    for perm in itertools.permutations(range(r)):
        inversions = sum(1 for i in range(r) for j in range(i + 1, r) if perm[i] > perm[j])
        out.append((perm, -1 if inversions % 2 else 1))
    return tuple(out)


def _alternate(a: np.ndarray, start: int, r: int) -> np.ndarray:
    """Antisymmetrise (averaging) over the r consecutive axes beginning at ``start``."""
    if r <= 1:
        return a
    out = np.zeros_like(a)
    axes = list(range(a.ndim))
    for perm, sign in _perms(r):
        order = axes[:start] + [start + p for p in perm] + axes[start + r :]
        out += sign * np.transpose(a, order)
    return out / math.factorial(r)


@dataclass(frozen=True)
class FormField:
    grid: GridSpec
    p: int
    q: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (0 <= self.p <= 3 and 0 <= self.q <= 3):
            raise FormError(f"bidegree ({self.p},{self.q}) out of range")
        c = np.asarray(self.coeffs, dtype=complex)
        expected = self.grid.shape + (3,) * (self.p + self.q)
        if c.shape != expected:
            raise FormError(f"coefficient shape {c.shape} != {expected}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: GridSpec, p: int, q: int) -> FormField:
        return cls(grid, p, q, np.zeros(grid.shape + (3,) * (p + q), dtype=complex))

    @property
    def degree(self) -> int:
        return self.p + self.q

    def __add__(self, other: FormField) -> FormField:
        self._check(other)
        return FormField(self.grid, self.p, self.q, self.coeffs + other.coeffs)

    def __sub__(self, other: FormField) -> FormField:
        self._check(other)
        return FormField(self.grid, self.p, self.q, self.coeffs - other.coeffs)

    def __mul__(self, c) -> FormField:
        c = np.asarray(c)
        if c.ndim:
            c = c.reshape(c.shape + (1,) * self.degree)
        return FormField(self.grid, self.p, self.q, self.coeffs * c)

    __rmul__ = __mul__

    def __neg__(self) -> FormField:
        return FormField(self.grid, self.p, self.q, -self.coeffs)

    def _check(self, other: FormField) -> None:
        if self.grid != other.grid or (self.p, self.q) != (other.p, other.q):
            raise FormError("forms of different grid or bidegree")

    def conj(self) -> FormField:
        """Complex conjugate, re-ordered into holomorphic-first convention."""
        n = self.grid.ndim
        c = np.conj(self.coeffs)
        order = list(range(n)) + [n + self.p + i for i in range(self.q)] + [n + i for i in range(self.p)]
        # conj(dz^I ∧ dz̄^J) = dz̄^I ∧ dz^J = (-1)^{pq} dz^J ∧ dz̄^I
        sign = -1 if (self.p * self.q) % 2 else 1
        return FormField(self.grid, self.q, self.p, sign * np.transpose(c, order))

    def pointwise_norm(self) -> np.ndarray:
        """Euclidean norm of the coefficient array at each grid point."""
        n = self.grid.ndim
        return np.sqrt(np.sum(np.abs(self.coeffs) ** 2, axis=tuple(range(n, self.coeffs.ndim))))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0


def del_(phi: FormField) -> FormField:
    """∂φ."""
    if phi.p + 1 > 3:
        raise FormError(f"∂ of a ({phi.p},{phi.q})-form overflows bidegree")
    n = phi.grid.ndim
    d = dz_all(phi.coeffs, phi.grid)  # [k, I, J]
    return FormField(phi.grid, phi.p + 1, phi.q, (phi.p + 1) * _alternate(d, n, phi.p + 1))


def delbar(phi: FormField) -> FormField:
    """∂̄φ."""
    if phi.q + 1 > 3:
        raise FormError(f"∂̄ of a ({phi.p},{phi.q})-form overflows bidegree")
    n = phi.grid.ndim
    d = dz_all(phi.coeffs, phi.grid, conjugate=True)  # [l, I, J]
    d = np.moveaxis(d, n, n + phi.p)  # [I, l, J]
    sign = -1 if phi.p % 2 else 1
    return FormField(phi.grid, phi.p, phi.q + 1, sign * (phi.q + 1) * _alternate(d, n + phi.p, phi.q + 1))


def exterior_d(phi: FormField) -> tuple[FormField | None, FormField | None]:
    """d = ∂ + ∂̄ returned as its two bidegree pieces (None where the bidegree overflows)."""
    return (del_(phi) if phi.p < 3 else None, delbar(phi) if phi.q < 3 else None)


def closed_residual(phi: FormField) -> float:
    """max over the grid of |dφ| (Euclidean coefficient norm)."""
    sq = np.zeros(phi.grid.shape)
    for piece in exterior_d(phi):
        if piece is not None:
            sq = sq + piece.pointwise_norm() ** 2
    return float(np.max(np.sqrt(sq))) if sq.size else float(np.sqrt(sq))


def wedge(phi: FormField, psi: FormField) -> FormField:
    """φ ∧ ψ."""
    if phi.grid != psi.grid:
        raise FormError("wedge of forms on different grids")
    p, q, pp, qq = phi.p, phi.q, psi.p, psi.q
    if p + pp > 3 or q + qq > 3:
        raise FormError(f"wedge of ({p},{q}) and ({pp},{qq}) overflows bidegree")
    n = phi.grid.ndim
    a = phi.coeffs.reshape(phi.coeffs.shape + (1,) * (pp + qq))
    b = psi.coeffs.reshape(psi.grid.shape + (1,) * (p + q) + psi.coeffs.shape[n:])
    outer = a * b  # [I, J, K, L]
    order = (
        list(range(n))
        + [n + i for i in range(p)]
        + [n + p + q + i for i in range(pp)]
        + [n + p + i for i in range(q)]
        + [n + p + q + pp + i for i in range(qq)]
    )
    c = np.transpose(outer, order)  # [I, K, J, L]
    c = _alternate(c, n, p + pp)
    c = _alternate(c, n + p + pp, q + qq)
    factor = math.factorial(p + pp) * math.factorial(q + qq)
    factor /= math.factorial(p) * math.factorial(q) * math.factorial(pp) * math.factorial(qq)
    sign = -1 if (q * pp) % 2 else 1
    return FormField(phi.grid, p + pp, q + qq, sign * factor * c)


def scalar_form(f: ScalarField | np.ndarray, grid: GridSpec | None = None) -> FormField:
    if isinstance(f, ScalarField):
        return FormField(f.grid, 0, 0, f.values)
    return FormField(grid, 0, 0, np.asarray(f))


def i_ddbar(phi: FormField) -> FormField:
    """√-1 ∂∂̄φ."""
    return 1j * del_(delbar(phi))


# --------------------------------------------------------------------------
# metric dictionary


def omega_from_metric(g: MetricField) -> FormField:
    return FormField(g.grid, 1, 1, 1j * np.swapaxes(g.g, -1, -2))


def metric_from_omega(omega: FormField) -> MetricField:
    if (omega.p, omega.q) != (1, 1):
        raise FormError("a metric form must have bidegree (1,1)")
    return MetricField(omega.grid, -1j * np.swapaxes(omega.coeffs, -1, -2))


@dataclass(frozen=True)
class OmegaNorm:
    values: np.ndarray = field(repr=False)
    inf: float
    sup: float

    @property
    def dilaton(self) -> np.ndarray:
        """1 / (2‖Ω‖_ω), the factor bounded by B."""
        return 0.5 / self.values


def omega_norm(g: MetricField) -> OmegaNorm:
    det = g.det()
    if np.any(det <= 0):
        raise SingularMetricError("non-positive metric determinant")
    vals = det**-0.5
    return OmegaNorm(vals, float(np.min(vals)), float(np.max(vals)))


def holomorphic_volume(grid: GridSpec) -> FormField:
    """Ω = dz¹∧dz²∧dz³ as a (3,0)-form."""
    eps = np.zeros((3, 3, 3))
    for perm, sign in _perms(3):
        eps[perm] = sign
    return FormField(grid, 3, 0, np.broadcast_to(eps, grid.shape + (3, 3, 3)).copy())


def psi_from_metric(g: MetricField) -> FormField:
    """Ψ = ‖Ω‖_ω ω∧ω."""
    w = omega_from_metric(g)
    return wedge(w, w) * omega_norm(g).values


_EPS3 = holomorphic_volume(GridSpec(4)).coeffs


def _dual_matrix(psi: FormField) -> np.ndarray:
    # M[f, e] = 1/4 ε_{abe} ε_{cdf} Ψ_{ab c̄ d̄}; for Ψ = ω̃² this is 2·cof(g̃).
    return 0.25 * np.einsum("abe,cdf,...abcd->...fe", _EPS3, _EPS3, psi.coeffs)


def _from_dual_matrix(grid: GridSpec, mat: np.ndarray) -> FormField:
    # inverse of _dual_matrix on antisymmetric (2,2) coefficients
    return FormField(grid, 2, 2, np.einsum("abe,cdf,...fe->...abcd", _EPS3, _EPS3, mat))


def psi_root(psi: FormField) -> MetricField:
    """The positive (1,1)-form ω̃ with ω̃∧ω̃ = Ψ, returned as its metric."""
    if (psi.p, psi.q) != (2, 2):
        raise FormError("Ψ must be a (2,2)-form")
    adj = 0.5 * np.swapaxes(_dual_matrix(psi), -1, -2)  # adj(g̃)
    adj = 0.5 * (adj + np.conj(np.swapaxes(adj, -1, -2)))
    lam = np.linalg.eigvalsh(adj)
    if np.any(lam[..., 0] <= 0):
        loc = np.unravel_index(int(np.argmin(lam[..., 0])), lam.shape[:-1]) if lam.ndim > 1 else ()
        raise PsiPositivityError(
            f"Ψ lost positivity at grid point {tuple(int(i) for i in loc)} "
            f"(smallest eigenvalue {float(np.min(lam[..., 0])):.3e})",
            tuple(int(i) for i in loc),
        )
    det_g = np.sqrt(np.real(np.linalg.det(adj)))
    g = det_g[..., None, None] * np.linalg.inv(adj)
    g = 0.5 * (g + np.conj(np.swapaxes(g, -1, -2)))
    return MetricField(psi.grid, g)


def metric_from_psi(psi: FormField) -> MetricField:
    """Invert Ψ = ‖Ω‖_ω ω²: take the root ω̃ and rescale ω = ‖Ω‖_{ω̃}^{-2} ω̃."""
    root = psi_root(psi)
    scale = omega_norm(root).values ** -2
    g = scale[..., None, None] * root.g
    return MetricField(psi.grid, g)


def balanced_residual(g: MetricField) -> float:
    """max over the grid of |d(‖Ω‖_ω ω²)|."""
    return closed_residual(psi_from_metric(g))


def lefschetz_contract(x: FormField, g: MetricField) -> np.ndarray:
    """Λ on (2,2)-forms: H_{d̄b} = g^{a c̄} X_{a b c̄ d̄}, returned as a (Ll)-ordered array.

    Normalised so that Λ(ω∧χ) = χ + (Λχ)ω for (1,1)-forms χ.
    """
    if (x.p, x.q) != (2, 2):
        raise FormError("Λ contraction implemented for (2,2)-forms only")
    return np.einsum("...ac,...abcd->...db", g.inv, x.coeffs)


def trace_rm_wedge_rm(rm: TensorField) -> FormField:
    """tr(Rm∧Rm) with Rm^α_β = R_{k̄j}{}^α{}_β dz^j∧dz̄^k."""
    if rm.slots != "Llul":
        raise FormError(f"expected curvature slots 'Llul', got {rm.slots!r}")
    n = rm.grid.ndim
    grid = rm.grid
    out = FormField.zeros(grid, 2, 2)
    # (1,1)-form coefficient [j, k̄] of the endomorphism entry (α, β) is R[k, j, α, β]
    forms = {}
    for a in range(3):
        for b in range(3):
            c = rm.data[(Ellipsis, slice(None), slice(None), a, b)]
            forms[a, b] = FormField(grid, 1, 1, np.swapaxes(c, n, n + 1))
    for a in range(3):
        for b in range(3):
            out = out + wedge(forms[a, b], forms[b, a])
    return out


def constant_form(grid: GridSpec, dual: np.ndarray) -> FormField:
    """Constant real (2,2)-form from its Hermitian dual 3×3 matrix (closed by construction)."""
    dual = np.asarray(dual, dtype=complex).reshape(3, 3)
    dual = 0.5 * (dual + dual.conj().T)
    mat = np.broadcast_to(dual, grid.shape + (3, 3))
    return _from_dual_matrix(grid, mat)
