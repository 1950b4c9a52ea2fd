"""Time integration of ∂_t(‖Ω‖ω²) = i∂∂̄ω − α′(tr(Rm∧Rm) − Φ).

Two right-hand sides are provided. ``rhs_psi`` assembles the (2,2)-form directly;
``rhs_metric`` assembles ∂_t g from curvature and torsion contractions without any
form algebra. The stepper evolves Ψ (default) or g with classical RK4, halving dt
whenever a stage loses positivity.

Φ is held fixed in time; no evolution law for it is modelled.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np

from .forms import (
    FormField,
    PsiPositivityError,
    closed_residual,
    constant_form,
    i_ddbar,
    lefschetz_contract,
    metric_from_psi,
    omega_from_metric,
    omega_norm,
    psi_from_metric,
    trace_rm_wedge_rm,
)
from .lattice import GridSpec
from .tensors import (
    MetricField,
    SingularMetricError,
    TensorField,
    curvature,
    ricci_tilde,
    torsion,
)

RHS_MODES = ("psi_evolution", "metric_evolution", "cross_check")
PHI_KINDS = ("zero", "constant_form", "chern_weil_background")
PHI_CLOSED_TOL = 1e-8
DT_MIN = 1e-12


class FlowError(RuntimeError):
    """Base class for stepping failures."""


class FlowBreakdown(FlowError):
    """The flow could not be continued; carries the last good state and a location."""

    def __init__(self, message: str, state: FlowState | None = None, location: tuple[int, ...] | None = None):
        super().__init__(message)
        self.state = state
        self.location = location
        self.trajectory: list = []


class CrossCheckError(FlowError):
    """Ψ-evolution and metric-evolution disagreed beyond the configured tolerance."""


@dataclass(frozen=True)
class PhiSource:
    """Background (2,2)-form Φ.

    ``coefficients`` is the Hermitian 3×3 dual matrix of a constant form; ``reference``
    is the metric whose tr(Rm∧Rm) is used as a Chern–Weil representative.
    """

    kind: str = "zero"
    coefficients: np.ndarray | None = field(default=None, repr=False)
    reference: MetricField | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in PHI_KINDS:
            raise ValueError(f"phi_source must be one of {PHI_KINDS}, got {self.kind!r}")
        if self.kind == "constant_form" and self.coefficients is None:
            raise ValueError("constant_form Φ needs a 3x3 coefficient matrix")
        if self.kind == "chern_weil_background" and self.reference is None:
            raise ValueError("chern_weil_background Φ needs a reference metric")

    def build(self, grid: GridSpec) -> FormField:
        if self.kind == "zero":
            return FormField.zeros(grid, 2, 2)
        if self.kind == "constant_form":
            return constant_form(grid, self.coefficients)
        if self.reference.grid != grid:
            raise ValueError("Φ reference metric lives on a different grid")
        return trace_rm_wedge_rm(curvature(self.reference))


@dataclass(frozen=True)
class FlowConfig:
    """Flow parameters. ``dt_initial`` doubles as the largest step ever taken."""

    alpha_prime: float = 0.0
    phi_source: PhiSource = field(default_factory=PhiSource)
    dt_initial: float = 1e-3
    dt_safety: float = 0.1
    t_max: float = 0.1
    rhs_mode: str = "psi_evolution"
    cross_check_tol: float = 1e-6
    max_retries: int = 40

    def __post_init__(self):
        if not self.alpha_prime >= 0:
            raise ValueError("alpha_prime must be >= 0")
        if not self.dt_initial > 0:
            raise ValueError("dt_initial must be > 0")
        if not 0 < self.dt_safety <= 1:
            raise ValueError("dt_safety must lie in (0, 1]")
        if not self.t_max > 0:
            raise ValueError("t_max must be > 0")
        if self.rhs_mode not in RHS_MODES:
            raise ValueError(f"rhs_mode must be one of {RHS_MODES}, got {self.rhs_mode!r}")

    def phi(self, grid: GridSpec) -> FormField:
        """Build Φ on ``grid`` and check that it is closed."""
        phi = self.phi_source.build(grid)
        res = closed_residual(phi)
        if res > PHI_CLOSED_TOL:
            raise ValueError(f"Φ is not closed (max |dΦ| = {res:.3e})")
        return phi


@dataclass(frozen=True)
class FlowState:
    """Immutable snapshot of the flow at time ``t``."""

    t: float
    g: MetricField
    psi: FormField = field(repr=False)
    last_dt: float = 0.0
    step_count: int = 0

    @classmethod
    def from_metric(cls, g: MetricField, t: float = 0.0) -> FlowState:
        return cls(t=t, g=g, psi=psi_from_metric(g))

    @classmethod
    def from_psi(cls, psi: FormField, t: float = 0.0) -> FlowState:
        return cls(t=t, g=metric_from_psi(psi), psi=psi)

    @property
    def grid(self) -> GridSpec:
        return self.g.grid

    @cached_property
    def T(self) -> TensorField:
        return torsion(self.g)

    @cached_property
    def Rm(self) -> TensorField:
        return curvature(self.g)

    @cached_property
    def omega_norm(self):
        return omega_norm(self.g)


# --------------------------------------------------------------------------
# right-hand sides


def rhs_psi(s: FlowState, c: FlowConfig, phi: FormField | None = None) -> FormField:
    """i∂∂̄ω − α′(tr(Rm∧Rm) − Φ) as a (2,2)-form."""
    out = i_ddbar(omega_from_metric(s.g))
    if c.alpha_prime:
        phi = c.phi(s.grid) if phi is None else phi
        out = out - (trace_rm_wedge_rm(s.Rm) - phi) * c.alpha_prime
    return out


def _phi_tensor(phi: FormField) -> np.ndarray:
    # Φ_{p̄ s r̄ q} from the form coefficients Φ[s, q, r̄, p̄]
    return np.einsum("...sqrp->...psrq", phi.coeffs)


def rhs_metric(s: FlowState, c: FlowConfig, phi: FormField | None = None) -> TensorField:
    """∂_t g_{p̄q} assembled from curvature and torsion; slots ``"Ll"``.

    (1/2‖Ω‖)[−R̃_{p̄q} + g^{αβ̄}g^{sr̄}T_{β̄sq}T̄_{αr̄p̄} − α′ g^{sr̄}(R_{[p̄s}R_{r̄q]} − Φ_{p̄sr̄q})]
    where the bracket is the four-term alternation over the barred pair (p̄, r̄) and the
    unbarred pair (s, q) of R_{p̄s}{}^α{}_β R_{r̄q}{}^β{}_α.
    """
    g = s.g
    rm = s.Rm.data
    t = s.T.data
    out = -ricci_tilde(s.Rm, g).data
    out = out + np.einsum("...ab,...sr,...bsq,...arp->...pq", g.inv, g.inv, t, np.conj(t))
    if c.alpha_prime:
        phi = c.phi(s.grid) if phi is None else phi
        x = np.einsum("...psab,...rqba->...psrq", rm, rm)
        bracket = (
            x
            - np.einsum("...psrq->...rspq", x)
            - np.einsum("...psrq->...pqrs", x)
            + np.einsum("...psrq->...rqps", x)
        )
        # both index orders of the alternation are written as X(p̄,s,r̄,q)
        quad = np.einsum("...sr,...psrq->...pq", g.inv, bracket - _phi_tensor(phi))
        out = out - c.alpha_prime * quad
    dil = s.omega_norm.dilaton
    out = dil[..., None, None] * out
    return TensorField(s.grid, "Ll", 0.5 * (out + np.conj(np.swapaxes(out, -1, -2))))


def metric_rate_from_psi_rate(x: FormField, g: MetricField) -> np.ndarray:
    """∂_t g induced by ∂_tΨ = x: (1/2‖Ω‖) Λ x."""
    dil = omega_norm(g).dilaton
    out = dil[..., None, None] * lefschetz_contract(x, g)
    return 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))


# --------------------------------------------------------------------------
# stepping


def _herm_metric(grid: GridSpec, g: np.ndarray) -> MetricField:
    herm = np.max(np.abs(g - np.conj(np.swapaxes(g, -1, -2))), initial=0.0)
    if herm > 1e-12 * max(1.0, float(np.max(np.abs(g)))):
        raise FlowError(f"Hermitian symmetry lost during stepping ({herm:.3e})")
    return MetricField(grid, 0.5 * (g + np.conj(np.swapaxes(g, -1, -2))))


def _rk4(y0, f: Callable, dt: float, add: Callable):
    k1 = f(y0)
    k2 = f(add(y0, k1, dt / 2))
    k3 = f(add(y0, k2, dt / 2))
    k4 = f(add(y0, k3, dt))
    return add(y0, k1 * (1 / 6) + k2 * (1 / 3) + k3 * (1 / 3) + k4 * (1 / 6), dt)


def _advance_psi(s: FlowState, c: FlowConfig, phi: FormField, dt: float) -> FlowState:
    def f(st: FlowState) -> FormField:
        return rhs_psi(st, c, phi)

    def add(st: FlowState, k: FormField, h: float) -> FlowState:
        return FlowState.from_psi(st.psi + k * h, st.t)

    new = _rk4(s, f, dt, add)
    return replace(new, t=s.t + dt, last_dt=dt, step_count=s.step_count + 1)


def _advance_metric(s: FlowState, c: FlowConfig, phi: FormField, dt: float) -> FlowState:
    class _G:
        # thin wrapper so the RK4 combination can scale and add arrays
        def __init__(self, a):
            self.a = a

        def __mul__(self, h):
            return _G(self.a * h)

        __rmul__ = __mul__

        def __add__(self, o):
            return _G(self.a + o.a)

    def f(st: FlowState) -> _G:
        return _G(rhs_metric(st, c, phi).data)

    def add(st: FlowState, k: _G, h: float) -> FlowState:
        return FlowState(st.t, _herm_metric(st.grid, st.g.g + h * k.a), psi=None)

    new = _rk4(s, f, dt, add)
    return FlowState(s.t + dt, new.g, psi_from_metric(new.g), last_dt=dt, step_count=s.step_count + 1)


def metric_rate(s: FlowState, c: FlowConfig, phi: FormField | None = None) -> np.ndarray:
    """∂_t g at ``s`` through the configured formulation (used for step-size control)."""
    if c.rhs_mode == "metric_evolution":
        return rhs_metric(s, c, phi).data
    return metric_rate_from_psi_rate(rhs_psi(s, c, phi), s.g)


def choose_dt(s: FlowState, c: FlowConfig, phi: FormField | None = None) -> float:
    """min(dt_initial, dt_safety·λ_min(g)/max|∂_t g|, t_max − t)."""
    dt = c.dt_initial
    rate = float(np.max(np.abs(metric_rate(s, c, phi))))
    lam = float(np.min(s.g.eigenvalues()[..., 0]))
    if rate > 0:
        dt = min(dt, c.dt_safety * lam / rate)
    remaining = c.t_max - s.t
    if remaining > 0:
        dt = min(dt, remaining)
    return dt


def _min_eig_location(s: FlowState) -> tuple[int, ...]:
    lam = s.g.eigenvalues()[..., 0]
    if lam.ndim == 0:
        return ()
    return tuple(int(i) for i in np.unravel_index(int(np.argmin(lam)), lam.shape))


def step(s: FlowState, c: FlowConfig, dt: float | None = None, phi: FormField | None = None) -> FlowState:
    """Advance by one accepted RK4 step.

    With ``dt=None`` the step size is chosen adaptively; an explicit ``dt`` (which may be
    negative) is used as the first attempt. Positivity failures halve dt and retry.
    """
    phi = c.phi(s.grid) if phi is None else phi
    if dt is None:
        dt = choose_dt(s, c, phi)
    advance = _advance_metric if c.rhs_mode == "metric_evolution" else _advance_psi
    last_loc = _min_eig_location(s)
    for _ in range(c.max_retries + 1):
        if abs(dt) < DT_MIN:
            raise FlowBreakdown(
                f"time step underflow (|dt| < {DT_MIN:g}) at t = {s.t:.6g}, "
                f"grid point {last_loc}",
                state=s,
                location=last_loc,
            )
        try:
            new = advance(s, c, phi, dt)
        except PsiPositivityError as exc:
            last_loc = exc.location
        except SingularMetricError:
            last_loc = _min_eig_location(s)
        else:
            if c.rhs_mode == "cross_check":
                _cross_check(s, new, c, phi, dt)
            return new
        dt = dt / 2
    raise FlowBreakdown(
        f"positivity lost after {c.max_retries} step halvings at t = {s.t:.6g}, grid point {last_loc}",
        state=s,
        location=last_loc,
    )


def _cross_check(s: FlowState, new: FlowState, c: FlowConfig, phi: FormField, dt: float) -> None:
    other = _advance_metric(s, c, phi, dt)
    scale = max(1.0, float(np.max(np.abs(new.g.g))))
    diff = float(np.max(np.abs(other.g.g - new.g.g))) / scale
    if diff > c.cross_check_tol:
        raise CrossCheckError(
            f"Ψ-evolution and metric evolution differ by {diff:.3e} at t = {s.t:.6g} "
            f"(tolerance {c.cross_check_tol:g})"
        )


@dataclass
class RunResult:
    trajectory: list = field(default_factory=list)
    final: FlowState | None = None
    breakdown: FlowBreakdown | None = None
    states: list = field(default_factory=list)


def run(
    g0: MetricField,
    c: FlowConfig,
    cadence: int = 1,
    monitor: Callable[[FlowState], object] | None = None,
    on_sample: Callable[[FlowState, object], None] | None = None,
    keep_states: bool = False,
    max_steps: int | None = None,
) -> RunResult:
    """Integrate from ``g0`` to ``t_max``, sampling ``monitor`` every ``cadence`` steps.

    The initial and final states are always sampled. A breakdown is raised with the
    partial trajectory and last good state attached.
    """
    if cadence < 1:
        raise ValueError("monitor cadence must be >= 1")
    phi = c.phi(g0.grid)
    s = FlowState.from_metric(g0)
    result = RunResult()

    def sample(state: FlowState) -> None:
        report = monitor(state) if monitor is not None else None
        result.trajectory.append((state.t, report))
        if keep_states:
            result.states.append(state)
        if on_sample is not None:
            on_sample(state, report)

    sample(s)
    sampled = s.step_count
    end = c.t_max * (1 - 1e-14)
    while s.t < end:
        if max_steps is not None and s.step_count >= max_steps:
            break
        try:
            s = step(s, c, phi=phi)
        except FlowBreakdown as exc:
            exc.trajectory = result.trajectory
            result.final = exc.state
            result.breakdown = exc
            raise
        if s.step_count % cadence == 0:
            sample(s)
            sampled = s.step_count
    if sampled != s.step_count:
        sample(s)
    result.final = s
    return result
