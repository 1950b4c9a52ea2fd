"""Periodic sampling grid on the flat torus C^3 / Z^6 and spectral calculus on it.

Real axes are numbered 0..5 as (x1, y1, x2, y2, x3, y3) with z^a = x^a + i y^a.
Fields only vary along the grid's *active* axes; every other real direction is
treated as constant, which keeps arrays at N**len(active_axes) points.

Field arrays always carry the grid axes first and any component axes after
them, so ``values.shape == grid.shape + component_shape``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

AXIS_NAMES = ("x1", "y1", "x2", "y2", "x3", "y3")


def axis_index(name: str | int) -> int:
    """Resolve ``"x2"`` style names (or plain integers) to a real-axis number."""
    if isinstance(name, (int, np.integer)):
        if not 0 <= int(name) < 6:
            raise ValueError(f"real axis {name} out of range 0..5")
        return int(name)
    try:
        return AXIS_NAMES.index(name.strip().lower())
    except ValueError:
        raise ValueError(f"unknown axis {name!r}; expected one of {AXIS_NAMES}") from None


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid; ``points_per_axis`` samples on each active real axis."""

    points_per_axis: int
    active_axes: tuple[int, ...] = ()
    periods: tuple[float, ...] = (1.0,) * 6

    def __post_init__(self):
        n = self.points_per_axis
        if n < 4 or n % 2:
            raise ValueError(f"points_per_axis must be even and >= 4, got {n}")
        axes = tuple(sorted({axis_index(a) for a in self.active_axes}))
        object.__setattr__(self, "active_axes", axes)
        periods = tuple(float(p) for p in self.periods)
        if len(periods) == 1:
            periods = periods * 6
        if len(periods) != 6 or any(not p > 0 for p in periods):
            raise ValueError("periods must be six positive reals")
        object.__setattr__(self, "periods", periods)

    @property
    def ndim(self) -> int:
        return len(self.active_axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.ndim

    @property
    def npoints(self) -> int:
        return self.points_per_axis**self.ndim

    @property
    def active_mask(self) -> int:
        return sum(1 << a for a in self.active_axes)

    @property
    def cell_volume(self) -> float:
        """Euclidean volume of one grid cell in the 6 real dimensions."""
        vol = 1.0
        for a in range(6):
            if a in self.active_axes:
                vol *= self.periods[a] / self.points_per_axis
            else:
                vol *= self.periods[a]
        return vol

    def coordinates(self) -> dict[int, np.ndarray]:
        """Broadcastable coordinate arrays for each active real axis."""
        n = self.points_per_axis
        out = {}
        for i, a in enumerate(self.active_axes):
            x = np.arange(n) * (self.periods[a] / n)
            shape = [1] * self.ndim
            shape[i] = n
            out[a] = x.reshape(shape)
        return out

    def coordinate(self, axis: str | int) -> np.ndarray:
        """Coordinate of one real axis broadcast to ``self.shape`` (zeros if inactive)."""
        a = axis_index(axis)
        coords = self.coordinates()
        if a not in coords:
            return np.zeros(self.shape)
        return np.broadcast_to(coords[a], self.shape).copy()

    @cached_property
    def _multipliers(self) -> tuple[np.ndarray | None, ...]:
        # Fourier symbols of d/dz^a = (d/dx - i d/dy)/2, one per complex direction.
        n = self.points_per_axis
        mults = []
        for a in range(3):
            sym = np.zeros(self.shape, dtype=complex)
            used = False
            for part, axis in enumerate((2 * a, 2 * a + 1)):
                if axis not in self.active_axes:
                    continue
                used = True
                i = self.active_axes.index(axis)
                k = np.fft.fftfreq(n, d=1.0 / n)
                k[n // 2] = 0.0  # odd derivative: drop the Nyquist mode
                ik = 2j * np.pi * k / self.periods[axis]
                shape = [1] * self.ndim
                shape[i] = n
                ik = ik.reshape(shape)
                # x-part contributes ik/2, y-part contributes -i*(ik)/2
                sym = sym + (0.5 * ik if part == 0 else -0.5j * ik)
            mults.append(sym if used else None)
        return tuple(mults)


def _grid_axes(grid: GridSpec) -> tuple[int, ...]:
    return tuple(range(grid.ndim))


def dz_all(values: np.ndarray, grid: GridSpec, conjugate: bool = False) -> np.ndarray:
    """Stack of d/dz^a (or d/dzbar^a) for a = 1, 2, 3 as a new *leading component* axis.

    The returned array has shape ``grid.shape + (3,) + values.shape[grid.ndim:]``.
    """
    comp_shape = values.shape[grid.ndim :]
    out = np.zeros(grid.shape + (3,) + comp_shape, dtype=complex)
    if grid.ndim == 0:
        return out
    axes = _grid_axes(grid)
    spectrum = np.fft.fftn(values, axes=axes)
    extra = (1,) * len(comp_shape)
    for a, sym in enumerate(grid._multipliers):
        if sym is None:
            continue
        if conjugate:
            # d/dzbar symbol is the mirror of d/dz: (ik_x + k_y)/2 -> (ik_x - k_y)/2
            sym = -np.conj(sym)
        out[(slice(None),) * grid.ndim + (a,)] = np.fft.ifftn(
            spectrum * sym.reshape(sym.shape + extra), axes=axes
        )
    return out


def dz(values: np.ndarray, grid: GridSpec, a: int, conjugate: bool = False) -> np.ndarray:
    """Single complex-direction derivative, ``a`` in 0..2; keeps the array shape."""
    sym = grid._multipliers[a]
    if sym is None or grid.ndim == 0:
        return np.zeros(values.shape, dtype=complex)
    if conjugate:
        sym = -np.conj(sym)
    axes = _grid_axes(grid)
    extra = (1,) * (values.ndim - grid.ndim)
    return np.fft.ifftn(np.fft.fftn(values, axes=axes) * sym.reshape(sym.shape + extra), axes=axes)


@dataclass(frozen=True)
class ScalarField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != self.grid.shape:
            raise ValueError(f"scalar field shape {vals.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", vals)

    def conj(self) -> ScalarField:
        return ScalarField(self.grid, np.conj(self.values))


def _check_complex_axis(a: int) -> int:
    if a not in (1, 2, 3):
        raise ValueError(f"complex axis must be 1, 2 or 3, got {a}")
    return a - 1


def partial_z(f: ScalarField, a: int) -> ScalarField:
    """d f / d z^a for a in {1, 2, 3} by Fourier differentiation."""
    return ScalarField(f.grid, dz(f.values.astype(complex), f.grid, _check_complex_axis(a)))


def partial_zbar(f: ScalarField, a: int) -> ScalarField:
    """d f / d zbar^a for a in {1, 2, 3}."""
    i = _check_complex_axis(a)
    return ScalarField(f.grid, dz(f.values.astype(complex), f.grid, i, conjugate=True))


def integrate(f: ScalarField | np.ndarray, g) -> complex:
    """Quadrature of ``f`` against the metric volume form det(g) dx^1 dy^1 ... dy^3.

    ``g`` is a :class:`~anomalyflow.tensors.MetricField`. On a periodic grid the
    rectangle rule is spectrally accurate.
    """
    if isinstance(f, ScalarField):
        if f.grid != g.grid:
            raise ValueError("grid mismatch between integrand and metric")
        values = f.values
    else:
        values = np.asarray(f)
    det = g.det()
    if np.any(det <= 0):
        idx = np.unravel_index(int(np.argmin(det)), det.shape) if det.ndim else ()
        raise ValueError(f"metric determinant is not positive at grid point {idx}")
    total = np.sum(values * det) * g.grid.cell_volume
    return complex(total)
