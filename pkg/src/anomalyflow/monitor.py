"""Measured bounds, test functions, α′ thresholds and the extension certificate.

Threshold arithmetic is exact: every input is converted to :class:`fractions.Fraction`
(floats convert exactly from their binary value) so the bounds are rational numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .flow import FlowState
from .forms import balanced_residual
from .lattice import integrate
from .tensors import (
    MetricField,
    TensorField,
    derivative_tower,
    dq_norm_sq,
    nabla,
    tensor_norm_sq,
)

EXTENDABLE, NOT_CERTIFIED = "EXTENDABLE", "NOT_CERTIFIED"
# C0 at or below this is treated as the flat regime
FLAT_C0 = 1e-10
MAX_RM_ORDER = 2

Number = int | float | Fraction | str


def _q(x: Number) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float) and not math.isfinite(x):
        raise ValueError(f"non-finite threshold input {x}")
    return Fraction(x)


# --------------------------------------------------------------------------
# measurements


class Derived:
    """Lazily computed derivative towers of T, T̄ and Rm for one state."""

    def __init__(self, s: FlowState, max_order: int = MAX_RM_ORDER):
        if not 0 <= max_order <= MAX_RM_ORDER:
            raise ValueError(f"derivative order capped at {MAX_RM_ORDER} for Rm (got {max_order})")
        self.s = s
        self.max_order = max_order

    @cached_property
    def rm_tower(self) -> dict[tuple[int, int], TensorField]:
        return derivative_tower(self.s.Rm, self.s.g, self.max_order)

    @cached_property
    def t_tower(self) -> dict[tuple[int, int], TensorField]:
        return derivative_tower(self.s.T, self.s.g, self.max_order + 1)

    @cached_property
    def tbar_tower(self) -> dict[tuple[int, int], TensorField]:
        return derivative_tower(self.s.T.conj(), self.s.g, self.max_order + 1)

    def rm_sq(self, q: int) -> np.ndarray:
        return dq_norm_sq(self.s.Rm, self.s.g, q, self.max_order, self.rm_tower)

    def t_sq(self, q: int) -> np.ndarray:
        return dq_norm_sq(self.s.T, self.s.g, q, self.max_order + 1, self.t_tower)

    def tbar_sq(self, q: int) -> np.ndarray:
        return dq_norm_sq(self.s.T.conj(), self.s.g, q, self.max_order + 1, self.tbar_tower)

    def G(self, k: int) -> np.ndarray:
        """G_k = |D^k Rm|² + |D^{k+1} T|²."""
        return self.rm_sq(k) + self.t_sq(k + 1)


@dataclass(frozen=True)
class AssumptionBounds:
    """B, C0 and C_q measured on one state; B_min and B_max are inf and sup of 1/2‖Ω‖."""

    B: float
    C0: float
    Cq: tuple[float, ...] = ()
    a0: float = 1.0
    measured_at: float = 0.0
    B_min: float | None = None
    B_max: float | None = None

    def __post_init__(self):
        if not self.B >= 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if not self.C0 >= 0:
            raise ValueError(f"C0 must be >= 0, got {self.C0}")
        if not self.a0 > 0:
            raise ValueError(f"a0 must be > 0, got {self.a0}")

    @property
    def flat(self) -> bool:
        return self.C0 <= FLAT_C0


def _sup(x: np.ndarray) -> float:
    return float(np.sqrt(np.max(x, initial=0.0)))


def measure_bounds(s: FlowState, a0: float = 1.0, max_order: int = MAX_RM_ORDER, derived: Derived | None = None) -> AssumptionBounds:
    d = derived or Derived(s, max_order)
    if d.max_order < max_order:
        raise ValueError("derived towers are shallower than the requested order")
    u = s.omega_norm.dilaton
    lo, hi = float(np.min(u)), float(np.max(u))
    B = max(hi, 1.0 / lo)
    t_sq = tensor_norm_sq(s.T, s.g)
    c0 = max(_sup(t_sq), _sup(tensor_norm_sq(s.Rm, s.g)), _sup(d.t_sq(1)), _sup(d.tbar_sq(1)))
    cq = tuple(
        max(_sup(d.rm_sq(q)), _sup(d.t_sq(q + 1)), _sup(d.tbar_sq(q + 1))) for q in range(1, max_order + 1)
    )
    return AssumptionBounds(B=B, C0=c0, Cq=cq, a0=a0, measured_at=s.t, B_min=lo, B_max=hi)


def default_mu(a0: Number, B: Number, p: Number) -> Fraction:
    """Weight μ (and μ′): 1/(100 a0 B² p) for p ≥ 3, 1/(300 a0 B²) below."""
    a0, B, p = _q(a0), _q(B), _q(p)
    if p >= 3:
        return 1 / (100 * a0 * B**2 * p)
    return 1 / (300 * a0 * B**2)


@dataclass(frozen=True)
class ShiQuantities:
    G0: np.ndarray = field(repr=False)
    G1: np.ndarray = field(repr=False)
    G2: np.ndarray = field(repr=False)
    G_weighted: np.ndarray = field(repr=False)
    Gprime_weighted: np.ndarray = field(repr=False)
    mu: float
    mu_prime: float
    p: float
    lp_integrals: dict[tuple[str, float], float]

    def sup(self) -> float:
        """Largest pointwise value among all test functions."""
        return max(float(np.max(np.abs(a), initial=0.0)) for a in self.fields().values())

    def fields(self) -> dict[str, np.ndarray]:
        return {"G0": self.G0, "G1": self.G1, "G2": self.G2, "G": self.G_weighted, "Gprime": self.Gprime_weighted}


def shi_quantities(
    s: FlowState,
    alpha_prime: float,
    p: float = 3,
    mu: float | None = None,
    mu_prime: float | None = None,
    a0: float = 1.0,
    derived: Derived | None = None,
) -> ShiQuantities:
    """G_0, G_1, G_2, the weighted G and G′, and their L^p integrals."""
    d = derived or Derived(s, MAX_RM_ORDER)
    if d.max_order < 2:
        raise ValueError("test functions need derivative order 2")
    if mu is None or mu_prime is None:
        B = measure_bounds(s, a0, derived=d).B
        mu = float(default_mu(a0, B, p)) if mu is None else mu
        mu_prime = float(default_mu(a0, B, p)) if mu_prime is None else mu_prime
    g0, g1, g2 = d.G(0), d.G(1), d.G(2)
    G = (alpha_prime * g0 + mu) * g1
    Gp = (alpha_prime * g0 + mu_prime) * g2
    fields = {"G0": g0, "G1": g1, "G2": g2, "G": G, "Gprime": Gp}
    lp = {(name, p): float(np.real(integrate(np.maximum(f, 0.0) ** p, s.g))) for name, f in fields.items()}
    return ShiQuantities(g0, g1, g2, G, Gp, float(mu), float(mu_prime), float(p), lp)


# --------------------------------------------------------------------------
# thresholds


@dataclass(frozen=True)
class ThresholdEntry:
    name: str
    formula: str
    k: str
    bound: Fraction | None  # None means +inf
    applies: bool
    alpha_prime: Fraction | None = None
    satisfied: bool | None = None


@dataclass(frozen=True)
class ThresholdReport:
    a0: Fraction
    B: Fraction
    C0: Fraction
    p: Fraction
    entries: tuple[ThresholdEntry, ...]
    mu: Fraction
    mu_prime: Fraction
    flat: bool
    alpha_prime: Fraction | None = None
    pi1_value: Fraction | None = None
    pi2_value: Fraction | None = None
    pi1_bound: Fraction | None = None
    pi2_bound: Fraction | None = None

    def __getitem__(self, name: str) -> ThresholdEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def pi1_ok(self) -> bool | None:
        if self.pi1_value is None:
            return None
        return self.flat or self.pi1_value < self.pi1_bound

    @property
    def pi2_ok(self) -> bool | None:
        if self.pi2_value is None:
            return None
        return self.flat or self.pi2_value < self.pi2_bound


# diagnostics CSV column -> threshold entry
THRESHOLD_CSV_COLUMNS = {
    "threshold_thm3_2": "shi_k2_p",
    "threshold_cor4_1": "linf_k2",
    "threshold_thm5_1": "extension",
}


def alpha_thresholds(
    a0: Number,
    B: Number,
    C0: Number,
    p: Number = 3,
    alpha_prime: Number | None = None,
    B_min: Number | None = None,
    B_max: Number | None = None,
) -> ThresholdReport:
    """Every α′ smallness condition evaluated exactly.

    Bounds whose denominator carries C0 itself are infinite (``None``) at C0 = 0; at or
    below ``FLAT_C0`` every condition is reported as vacuously satisfied.
    """
    a0, B, C0, p = _q(a0), _q(B), _q(C0), _q(p)
    if a0 <= 0 or B < 1 or C0 < 0 or p < 1:
        raise ValueError("need a0 > 0, B >= 1, C0 >= 0 and p >= 1")
    flat = C0 <= _q(FLAT_C0)
    m = max(Fraction(1), C0) ** 2
    big = p >= 3

    def over_c0(den: Fraction) -> Fraction | None:
        # bounds of the form 1/(... C0) are infinite at C0 = 0
        return None if C0 == 0 else 1 / (den * C0)

    half = Fraction(1, 2)
    rows = [
        ("shi_k2_p", "1/(4 a0 B^2 C0 (p+1/2))", "k>=2", over_c0(4 * a0 * B**2 * (p + half)), big),
        ("shi_k2_small_p", "1/(14 a0 B^2 C0)", "k>=2", over_c0(14 * a0 * B**2), not big),
        ("linf_k3", "1/(16 a0 B^2 C0)", "k>=3", over_c0(16 * a0 * B**2), True),
        ("shi_k2_next_p", "1/(4 a0 B^2 C0 (2p+1/2))", "k=2", over_c0(4 * a0 * B**2 * (2 * p + half)), big),
        ("linf_k2", "1/(26 a0 B^2 C0)", "k>=2", over_c0(26 * a0 * B**2), True),
        ("shi_k1_p", "1/(10^6 a0 B^6 max(1,C0)^2 p)", "k=1", 1 / (10**6 * a0 * B**6 * m * p), big),
        ("shi_k1_small_p", "1/(3*10^6 a0 B^6 max(1,C0)^2)", "k=1", 1 / (3 * 10**6 * a0 * B**6 * m), not big),
        ("shi_k1_next_p", "1/(10^7 a0 B^6 max(1,C0)^2 p)", "k=1", 1 / (10**7 * a0 * B**6 * m * p), big),
        ("shi_k1_next_small_p", "1/(3*10^7 a0 B^6 max(1,C0)^2)", "k=1", 1 / (3 * 10**7 * a0 * B**6 * m), not big),
        ("extension", "1/(3*10^7 a0 B^6 max(1,C0)^2)", "k=1", 1 / (3 * 10**7 * a0 * B**6 * m), True),
    ]
    bmin = _q(B_min) if B_min is not None else 1 / B
    bmax = _q(B_max) if B_max is not None else B
    if bmin <= 0 or bmax < bmin:
        raise ValueError("need 0 < B_min <= B_max")
    split_k1 = min(Fraction(1), bmin) ** 3 / (3 * 10**7 * a0 * max(Fraction(1), bmax) ** 3 * m)
    rows += [
        ("extension_split", "min(1,Bmin)^3/(3*10^7 a0 max(1,Bmax)^3 max(1,C0)^2)", "k=1", split_k1, True),
        ("linf_k2_split", "Bmin/(26 a0 Bmax C0)", "k>=2", over_c0(26 * a0 * bmax / bmin), True),
    ]
    ap = _q(alpha_prime) if alpha_prime is not None else None

    def holds(bound: Fraction | None) -> bool | None:
        if ap is None:
            return None
        return flat or bound is None or ap < bound

    entries = tuple(
        ThresholdEntry(name, formula, k, bound, applies, ap, holds(bound)) for name, formula, k, bound, applies in rows
    )
    mu = default_mu(a0, B, p)
    pi = {}
    if ap is not None:
        pi = dict(
            pi1_value=ap * C0**2,
            pi2_value=ap * C0,
            pi1_bound=min(Fraction(1), bmin) ** 3 / (3 * 10**7 * a0 * max(Fraction(1), bmax) ** 3),
            pi2_bound=bmin / (26 * a0 * bmax),
        )
    return ThresholdReport(a0, B, C0, p, entries, mu, mu, flat, ap, **pi)


def thresholds_from_bounds(b: AssumptionBounds, p: Number = 3, alpha_prime: Number | None = None) -> ThresholdReport:
    return alpha_thresholds(b.a0, b.B, b.C0, p, alpha_prime, b.B_min, b.B_max)


# --------------------------------------------------------------------------
# certificate


@dataclass(frozen=True)
class Certificate:
    verdict: str
    bound: Fraction
    alpha_prime: Fraction
    margin: float
    explanation: str


def extension_certificate(b: AssumptionBounds, alpha_prime: Number) -> Certificate:
    """EXTENDABLE iff α′ < 1/(3·10⁷ a0 B⁶ max(1,C0)²), or the state is flat.

    NOT_CERTIFIED only says the hypothesis fails; it makes no claim about breakdown.
    """
    ap = _q(alpha_prime)
    if ap < 0:
        raise ValueError("alpha_prime must be >= 0")
    a0, B, C0 = _q(b.a0), _q(b.B), _q(b.C0)
    bound = 1 / (3 * 10**7 * a0 * B**6 * max(Fraction(1), C0) ** 2)
    margin = float(bound - ap)
    if b.flat:
        return Certificate(
            EXTENDABLE, bound, ap, margin,
            f"flat regime (C0 = {float(b.C0):.3e} <= {FLAT_C0:g}); every smallness condition holds vacuously",
        )
    ok = ap < bound
    rel = "<" if ok else ">="
    text = (
        f"alpha' = {float(ap):.6e} {rel} 1/(3e7 a0 B^6 max(1,C0)^2) = {float(bound):.6e} "
        f"with a0 = {float(b.a0):g}, B = {float(b.B):.6g}, C0 = {float(b.C0):.6g}; margin {margin:.3e}"
    )
    return Certificate(EXTENDABLE if ok else NOT_CERTIFIED, bound, ap, margin, text)


# --------------------------------------------------------------------------
# Grönwall envelope


@dataclass(frozen=True)
class GronwallFit:
    name: str
    p: float
    samples: tuple[tuple[float, float], ...]
    Lambda: float
    envelope_violated: bool
    worst_ratio: float


def gronwall_check(series, reference: str | float = "fitted", name: str = "", p: float = 3) -> GronwallFit:
    """Check value(t) <= (1 + value(0)) e^{Λt} (1 + 1e-9) for every sample.

    In fitted mode Λ is the largest slope of log(1 + value) between consecutive
    samples, clipped at zero; otherwise ``reference`` is a fixed Λ.
    """
    pts = [(float(t), float(v)) for t, v in series]
    if not pts:
        raise ValueError("Grönwall check needs at least one sample")
    ts = np.array([t for t, _ in pts])
    vs = np.array([v for _, v in pts])
    if np.any(np.diff(ts) <= 0):
        raise ValueError("sample times must be strictly increasing")
    if reference == "fitted":
        lam = 0.0
        if len(pts) > 1:
            slopes = np.diff(np.log1p(vs)) / np.diff(ts)
            lam = max(0.0, float(np.max(slopes)))
    else:
        lam = float(reference)
    env = (1 + vs[0]) * np.exp(lam * (ts - ts[0]))
    ratio = vs / env
    violated = bool(np.any(vs > env * (1 + 1e-9)))
    return GronwallFit(name, float(p), tuple(pts), lam, violated, float(np.max(ratio)))


# --------------------------------------------------------------------------
# reference metric


@dataclass(frozen=True)
class ReferenceDiagnostics:
    h: TensorField = field(repr=False)
    S: TensorField = field(repr=False)
    hatDq_g_norms: tuple[float, ...]
    h_sup: float
    h_inv_sup: float
    s_identity_residual: float


S_IDENTITY_TOL = 1e-9


def reference_diagnostics(s: FlowState | MetricField, g_hat: MetricField, max_order: int = 2) -> ReferenceDiagnostics:
    """h = ĝ^{-1}g, S = Γ̂ − Γ and sup |D̂^q g|_ĝ for q = 0..max_order.

    S is computed twice, once as a Christoffel difference and once as
    −g^{αγ̄}∇̂_k g_{γ̄β}; disagreement beyond 1e-9 (relative) raises.
    """
    g = s.g if isinstance(s, FlowState) else s
    if g_hat.grid != g.grid:
        raise ValueError("reference metric lives on a different grid")
    if not 0 <= max_order <= 3:
        raise ValueError("reference derivative order must lie in 0..3")
    h = np.einsum("...ag,...gb->...ab", g_hat.inv, g.g)
    S = g_hat.christoffel - g.christoffel
    hat_dg = nabla(g.as_tensor(), g_hat).data  # [k, γ̄, β]
    S_alt = -np.einsum("...ag,...kgb->...akb", g.inv, hat_dg)
    resid = float(np.max(np.abs(S - S_alt), initial=0.0)) / max(1.0, float(np.max(np.abs(S), initial=0.0)))
    if resid > S_IDENTITY_TOL:
        raise ArithmeticError(f"Christoffel-difference identity violated (residual {resid:.3e})")
    tower = derivative_tower(g.as_tensor(), g_hat, max_order)
    norms = tuple(_sup(dq_norm_sq(g.as_tensor(), g_hat, q, max_order, tower)) for q in range(max_order + 1))
    sv = np.linalg.svd(h, compute_uv=False)
    return ReferenceDiagnostics(
        TensorField(g.grid, "ul", h),
        TensorField(g.grid, "ulu", S),
        norms,
        float(np.max(sv)),
        float(1.0 / np.min(sv)),
        resid,
    )


# --------------------------------------------------------------------------
# per-sample report


@dataclass(frozen=True)
class MonitorSettings:
    p: float = 3.0
    a0: float = 1.0
    cadence: int = 10
    max_order: int = 2


@dataclass(frozen=True)
class MonitorReport:
    t: float
    step: int
    bounds: AssumptionBounds
    shi: ShiQuantities = field(repr=False)
    balanced_residual: float
    thresholds: ThresholdReport = field(repr=False)
    certificate: Certificate
    min_eigenvalue: float


def monitor_state(s: FlowState, alpha_prime: float, settings: MonitorSettings = MonitorSettings()) -> MonitorReport:
    d = Derived(s, MAX_RM_ORDER)
    b = measure_bounds(s, settings.a0, settings.max_order, d)
    mu = float(default_mu(settings.a0, b.B, settings.p))
    shi = shi_quantities(s, alpha_prime, settings.p, mu, mu, settings.a0, d)
    th = thresholds_from_bounds(b, settings.p, alpha_prime)
    cert = extension_certificate(b, alpha_prime)
    lam = float(np.min(s.g.eigenvalues()[..., 0]))
    return MonitorReport(s.t, s.step_count, b, shi, balanced_residual(s.g), th, cert, lam)


def make_monitor(alpha_prime: float, settings: MonitorSettings = MonitorSettings()):
    return lambda s: monitor_state(s, alpha_prime, settings)
