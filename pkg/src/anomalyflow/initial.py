"""Closed-form initial metrics used by the CLI, the audit and the tests."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .forms import FormField, i_ddbar, metric_from_psi, psi_from_metric, scalar_form
from .lattice import GridSpec, axis_index
from .tensors import MetricField

# Hermitian direction pattern of the balanced perturbation; rolled per complex direction so
# that each active axis perturbs the block transverse to its own coordinate.
_BALANCED_PATTERN = np.array([[0, 0, 0], [0, 1, 0.3 + 0.2j], [0, 0.3 - 0.2j, 0.5]])


def profile(x: np.ndarray, decay: float = 0.0) -> np.ndarray:
    """Periodic profile Σ_{k≥1} decay^(k-1) cos(2πkx); plain cos(2πx) when decay = 0.

    A positive decay gives geometrically decaying Fourier content, which is what
    spectral-convergence checks need (a single cosine is resolved exactly at any N).
    """
    if not 0 <= decay < 1:
        raise ValueError("profile decay must lie in [0, 1)")
    th = 2 * np.pi * x
    return (np.cos(th) - decay) / (1 - 2 * decay * np.cos(th) + decay**2)


def _axes(axes: str | int | Sequence[str | int]) -> list[int]:
    if isinstance(axes, (str, int)):
        axes = [axes]
    return [axis_index(a) for a in axes]


def _summed_profile(grid: GridSpec, amplitude: float, axes, decay: float) -> np.ndarray:
    u = np.zeros(grid.shape)
    for a in _axes(axes):
        u = u + amplitude * profile(grid.coordinate(a), decay)
    return u


def flat(grid: GridSpec) -> MetricField:
    return MetricField.identity(grid)


def conformal(grid: GridSpec, amplitude: float, axes="x1", decay: float = 0.0) -> MetricField:
    """g = e^u · I with u = amplitude · profile along each listed axis."""
    u = _summed_profile(grid, amplitude, axes, decay)
    return MetricField(grid, np.exp(u)[..., None, None] * np.eye(3))


def kahler_potential(grid: GridSpec, amplitude: float, axes="x1", decay: float = 0.0) -> MetricField:
    """ω = ω_flat + i∂∂̄φ with φ = amplitude · profile (a Kähler metric)."""
    phi = _summed_profile(grid, amplitude, axes, decay)
    w = i_ddbar(scalar_form(phi.astype(complex), grid))
    g = np.eye(3) - 1j * np.swapaxes(w.coeffs, -1, -2)
    return MetricField(grid, 0.5 * (g + np.conj(np.swapaxes(g, -1, -2))))


def balanced_psi_form(grid: GridSpec, amplitude: float, axes="x1", decay: float = 0.0) -> FormField:
    """Closed positive Ψ = Ψ_flat + i∂∂̄β with β a real (1,1)-form built from the profile."""
    psi = psi_from_metric(MetricField.identity(grid))
    for a in _axes(axes):
        f = amplitude * profile(grid.coordinate(a), decay)
        shift = a // 2
        perm = np.roll(np.eye(3), shift, axis=0)
        h = perm @ _BALANCED_PATTERN @ perm.T
        beta = FormField(grid, 1, 1, 1j * f[..., None, None] * h.T)
        psi = psi + i_ddbar(beta)
    return psi


def balanced_psi(grid: GridSpec, amplitude: float, axes="x1", decay: float = 0.0) -> MetricField:
    """Conformally balanced metric recovered from a closed Ψ."""
    return metric_from_psi(balanced_psi_form(grid, amplitude, axes, decay))


GENERATORS = {
    "flat": lambda grid, amplitude=0.0, axes="x1", decay=0.0: flat(grid),
    "conformal": conformal,
    "kahler_potential": kahler_potential,
    "balanced_psi": balanced_psi,
}


def make_metric(kind: str, grid: GridSpec, amplitude: float = 0.0, axes="x1", decay: float = 0.0) -> MetricField:
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise ValueError(f"unknown initial data kind {kind!r}; choose from {sorted(GENERATORS)}") from None
    return gen(grid, amplitude, axes, decay)
