"""Chern connection tensor calculus for Hermitian metrics sampled on a lattice.

Index conventions
-----------------
A tensor's slot string lists each index type in array order:

    'l'  lower unbarred      'L'  lower barred
    'u'  upper unbarred      'U'  upper barred

The metric ``g_{p̄q}`` has slots ``"Ll"`` and its array entry ``g[..., p, q]``.
The inverse metric is stored so that ``ginv[..., a, b] = g^{a b̄}``, i.e. the
ordinary matrix inverse of ``g``.

Covariant derivatives prepend their new index: ``nabla(A)[..., k, ...]`` is
``∇_k A_{...}`` and ``nabla(nabla_bar(V))`` holds ``∇_i ∇_{j̄} V``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .lattice import GridSpec, ScalarField, dz_all

MAX_RANK = 8

_CONJ_SLOT = {"l": "L", "L": "l", "u": "U", "U": "u"}


class SingularMetricError(ValueError):
    """Raised when a metric is not Hermitian positive definite somewhere on the grid."""


@dataclass(frozen=True)
class TensorField:
    grid: GridSpec
    slots: str
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if any(s not in _CONJ_SLOT for s in self.slots):
            raise ValueError(f"bad slot string {self.slots!r}")
        if len(self.slots) > MAX_RANK:
            raise ValueError(f"tensor rank {len(self.slots)} exceeds the guard of {MAX_RANK}")
        data = np.asarray(self.data)
        expected = self.grid.shape + (3,) * len(self.slots)
        if data.shape != expected:
            raise ValueError(f"component array shape {data.shape} != {expected} for slots {self.slots!r}")
        object.__setattr__(self, "data", data)

    @property
    def rank(self) -> int:
        return len(self.slots)

    @property
    def signature(self) -> tuple[int, int, int, int]:
        """(barred lower, unbarred lower, barred upper, unbarred upper) counts."""
        s = self.slots
        return (s.count("L"), s.count("l"), s.count("U"), s.count("u"))

    def conj(self) -> TensorField:
        return TensorField(self.grid, "".join(_CONJ_SLOT[s] for s in self.slots), np.conj(self.data))

    def __add__(self, other: TensorField) -> TensorField:
        _check_compatible(self, other)
        return TensorField(self.grid, self.slots, self.data + other.data)

    def __sub__(self, other: TensorField) -> TensorField:
        _check_compatible(self, other)
        return TensorField(self.grid, self.slots, self.data - other.data)

    def __mul__(self, c) -> TensorField:
        return TensorField(self.grid, self.slots, self.data * c)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0


def _check_compatible(a: TensorField, b: TensorField) -> None:
    if a.grid != b.grid or a.slots != b.slots:
        raise ValueError(f"incompatible tensors: {a.slots!r} vs {b.slots!r}")


@dataclass(frozen=True)
class MetricField:
    """Hermitian metric g_{p̄q}; ``g.shape == grid.shape + (3, 3)``."""

    grid: GridSpec
    g: np.ndarray = field(repr=False)
    eig_floor: float = 0.0

    def __post_init__(self):
        g = np.asarray(self.g, dtype=complex)
        if g.shape != self.grid.shape + (3, 3):
            raise ValueError(f"metric array shape {g.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "g", g)
        herm = np.max(np.abs(g - np.conj(np.swapaxes(g, -1, -2))))
        scale = max(1.0, float(np.max(np.abs(g))))
        if herm > 1e-12 * scale:
            raise SingularMetricError(f"metric is not Hermitian (max asymmetry {herm:.3e})")
        lam = self.eigenvalues()
        if np.any(lam[..., 0] <= self.eig_floor):
            idx = np.unravel_index(int(np.argmin(lam[..., 0])), lam.shape[:-1]) if lam.ndim > 1 else ()
            raise SingularMetricError(
                f"metric not positive definite at grid point {idx} "
                f"(smallest eigenvalue {float(np.min(lam[..., 0])):.3e})"
            )

    @classmethod
    def identity(cls, grid: GridSpec, scale: float = 1.0) -> MetricField:
        return cls(grid, scale * np.broadcast_to(np.eye(3, dtype=complex), grid.shape + (3, 3)).copy())

    def eigenvalues(self) -> np.ndarray:
        herm = 0.5 * (self.g + np.conj(np.swapaxes(self.g, -1, -2)))
        return np.linalg.eigvalsh(herm)

    def det(self) -> np.ndarray:
        return np.real(np.linalg.det(self.g))

    @cached_property
    def inv(self) -> np.ndarray:
        """``inv[..., a, b] = g^{a b̄}``."""
        return np.linalg.inv(self.g)

    @cached_property
    def christoffel(self) -> np.ndarray:
        """Γ^α_{kβ} = g^{αγ̄} ∂_k g_{γ̄β}, array index order [α, k, β]."""
        dg = dz_all(self.g, self.grid)  # [k, γ, β]
        return np.einsum("...ag,...kgb->...akb", self.inv, dg)

    def as_tensor(self) -> TensorField:
        return TensorField(self.grid, "Ll", self.g)

    def scaled(self, c: float) -> MetricField:
        return MetricField(self.grid, c * self.g)


def christoffel(g: MetricField) -> TensorField:
    """Chern connection coefficients as a tensor-shaped field with slots ``"ulu"``.

    Γ is not a tensor; the slot string only records index placement [α, k, β].
    """
    return TensorField(g.grid, "ulu", g.christoffel)


def torsion(g: MetricField) -> TensorField:
    """T_{p̄qk} = ∂_q g_{p̄k} - ∂_k g_{p̄q}; slots ``"Lll"``."""
    dg = dz_all(g.g, g.grid)  # [a, p, k] = ∂_a g_{p̄k}
    n = g.grid.ndim
    d = np.moveaxis(dg, n, n + 1)  # [p, a, k]
    return TensorField(g.grid, "Lll", d - np.swapaxes(d, -1, -2))


def torsion_trace(g: MetricField, t: TensorField | None = None) -> TensorField:
    """Traced torsion T_i = g^{p̄k} T_{p̄ki}; slots ``"l"``.

    With this slot choice the conformally balanced condition reads
    T_i = ∂_i log‖Ω‖ and the divergence theorem picks up exactly T_i V^i.
    """
    t = torsion(g) if t is None else t
    return TensorField(g.grid, "l", np.einsum("...kp,...pki->...i", g.inv, t.data))


def curvature(g: MetricField) -> TensorField:
    """R_{p̄q}{}^r{}_s = -∂_{p̄} Γ^r_{qs}; slots ``"Llul"``, array order [p, q, r, s]."""
    dgam = dz_all(g.christoffel, g.grid, conjugate=True)  # [p, r, q, s]
    n = g.grid.ndim
    data = -np.moveaxis(dgam, n + 2, n + 1)  # [p, q, r, s]
    return TensorField(g.grid, "Llul", data)


def curvature_rate(g: MetricField, gdot: np.ndarray) -> TensorField:
    """First variation of R_{p̄q}{}^r{}_s along ∂_t g = ``gdot``.

    ∂_tΓ = g⁻¹∂ġ − g⁻¹ ġ g⁻¹ ∂g and ∂_t R = −∂̄(∂_tΓ); slots ``"Llul"``.
    """
    grid = g.grid
    gdot = np.asarray(gdot)
    dg = dz_all(g.g, grid)
    dgd = dz_all(gdot, grid)
    dgam = np.einsum("...ag,...kgb->...akb", g.inv, dgd) - np.einsum(
        "...ag,...gh,...hc,...kcb->...akb", g.inv, gdot, g.inv, dg
    )
    n = grid.ndim
    d = dz_all(dgam, grid, conjugate=True)  # [p, r, q, s]
    return TensorField(grid, "Llul", -np.moveaxis(d, n + 2, n + 1))


def ricci_tilde(rm: TensorField, g: MetricField) -> TensorField:
    """R̃_{p̄q}: lower the endomorphism index into the p̄ slot and trace the 2-form pair.

    R̃_{p̄q} = g^{j k̄} g_{p̄ r} R_{k̄ j}{}^r{}_q.
    """
    if rm.slots != "Llul":
        raise ValueError(f"ricci_tilde expects curvature slots 'Llul', got {rm.slots!r}")
    data = np.einsum("...jk,...pr,...kjrq->...pq", g.inv, g.g, rm.data)
    return TensorField(g.grid, "Ll", data)


def chern_ricci(rm: TensorField) -> TensorField:
    """R_{p̄q} = R_{p̄q}{}^r{}_r, the endomorphism trace."""
    return TensorField(rm.grid, "Ll", np.einsum("...pqrr->...pq", rm.data))


# --------------------------------------------------------------------------
# covariant derivatives


def _flat(a: np.ndarray, grid: GridSpec) -> np.ndarray:
    return a.reshape((grid.npoints,) + a.shape[grid.ndim :])


def _connection_terms(A: TensorField, gam: np.ndarray, barred: bool) -> np.ndarray:
    """Sum of connection corrections for ∇_k (or ∇_{k̄}) on every slot of A.

    Returns flattened array [P, k, comps...].
    """
    grid = A.grid
    P = grid.npoints
    a = _flat(A.data, grid)
    G = gam.reshape(P, 3, 3, 3)
    out = np.zeros((P, 3) + a.shape[1:], dtype=complex)
    up, down = ("U", "L") if barred else ("u", "l")
    for j, s in enumerate(A.slots):
        if s not in (up, down):
            continue
        moved = np.moveaxis(a, 1 + j, -1)  # [P, rest..., 3]
        rest = moved.shape[1:-1]
        m = moved.reshape(P, -1, 3)
        if s == up:
            term = np.einsum("pcks,pms->pkmc", G, m)
        else:
            term = -np.einsum("pskc,pms->pkmc", G, m)
        term = term.reshape((P, 3) + rest + (3,))
        out += np.moveaxis(term, -1, 2 + j)
    return out


def _guard_rank(A: TensorField) -> None:
    if A.rank + 1 > MAX_RANK:
        raise ValueError(f"covariant derivative would produce rank {A.rank + 1} > {MAX_RANK}")


def nabla(A: TensorField, g: MetricField) -> TensorField:
    """∇_k A: prepends an unbarred lower index."""
    if A.grid != g.grid:
        raise ValueError("tensor and metric live on different grids")
    _guard_rank(A)
    grid = A.grid
    d = _flat(dz_all(A.data, grid), grid)
    d = d + _connection_terms(A, g.christoffel, barred=False)
    return TensorField(grid, "l" + A.slots, d.reshape(grid.shape + d.shape[1:]))


def nabla_bar(A: TensorField, g: MetricField) -> TensorField:
    """∇_{k̄} A: prepends a barred lower index."""
    if A.grid != g.grid:
        raise ValueError("tensor and metric live on different grids")
    _guard_rank(A)
    grid = A.grid
    d = _flat(dz_all(A.data, grid, conjugate=True), grid)
    d = d + _connection_terms(A, np.conj(g.christoffel), barred=True)
    return TensorField(grid, "L" + A.slots, d.reshape(grid.shape + d.shape[1:]))


def scalar_tensor(f: ScalarField | np.ndarray, grid: GridSpec | None = None) -> TensorField:
    if isinstance(f, ScalarField):
        return TensorField(f.grid, "", f.values.astype(complex))
    return TensorField(grid, "", np.asarray(f, dtype=complex))


# --------------------------------------------------------------------------
# norms


def _slot_matrix(s: str, g: MetricField) -> np.ndarray:
    # B[b] = sum_a M[a, b] A[a]; then |A|^2 = sum_b B[b] conj(A[b]).
    if s == "l":
        return g.inv  # g^{a b̄}
    if s == "L":
        return np.swapaxes(g.inv, -1, -2)  # g^{b ā}
    if s == "u":
        return np.swapaxes(g.g, -1, -2)  # g_{b̄ a}
    return g.g  # g_{ā b}


def tensor_norm_sq(A: TensorField, g: MetricField) -> np.ndarray:
    """Pointwise |A|^2 with every index contracted through g; real, shape ``grid.shape``."""
    grid = A.grid
    if A.rank == 0:
        return np.abs(A.data) ** 2
    P = grid.npoints
    b = _flat(A.data, grid)
    for j, s in enumerate(A.slots):
        M = _slot_matrix(s, g).reshape(P, 3, 3)
        moved = np.moveaxis(b, 1 + j, -1)
        moved = np.einsum("p...a,pab->p...b", moved, M)
        b = np.moveaxis(moved, -1, 1 + j)
    val = np.sum((b * np.conj(_flat(A.data, grid))).reshape(P, -1), axis=1)
    return np.real(val).reshape(grid.shape)


def derivative_tower(A: TensorField, g: MetricField, order: int) -> dict[tuple[int, int], TensorField]:
    """All ∇^m ∇̄^l A with m + l <= order (∇̄ applied first, as in |D^q A|)."""
    if A.rank + order > MAX_RANK:
        raise ValueError(f"derivative order {order} on rank {A.rank} exceeds rank guard {MAX_RANK}")
    tower = {(0, 0): A}
    for l in range(1, order + 1):
        tower[(0, l)] = nabla_bar(tower[(0, l - 1)], g)
    for l in range(order + 1):
        for m in range(1, order - l + 1):
            tower[(m, l)] = nabla(tower[(m - 1, l)], g)
    return tower


def dq_norm_sq(
    A: TensorField,
    g: MetricField,
    q: int,
    max_order: int = 3,
    tower: dict[tuple[int, int], TensorField] | None = None,
) -> np.ndarray:
    """|D^q A|^2 = Σ_{m+l=q} |∇^m ∇̄^l A|^2 pointwise."""
    if q < 0 or q > max_order:
        raise ValueError(f"derivative order {q} outside the allowed range 0..{max_order}")
    if tower is None or any((m, q - m) not in tower for m in range(q + 1)):
        tower = derivative_tower(A, g, q)
    return sum(tensor_norm_sq(tower[(m, q - m)], g) for m in range(q + 1))
