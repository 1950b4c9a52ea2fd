"""Run configuration: a small ``[section]`` / ``key = value`` format.

Lines starting with ``#`` (or text after `` #``) are comments. Every key has a
default, and :func:`parse_config` returns a fully populated :class:`RunConfig`;
:func:`render_config` writes every key back so that parse(render(c)) == c.

Example::

    [grid]
    N = 16
    active_axes = x1

    [initial]
    kind = balanced_psi
    amplitude = 0.01

    [flow]
    alpha_prime = 0.0
    t_max = 0.1

Φ is static in time; ``phi_source = chern_weil_background`` uses tr(Rm∧Rm) of
``phi_reference`` (``initial`` or a snapshot path) for the whole run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any, Callable

from .lattice import AXIS_NAMES, axis_index

INITIAL_KINDS = ("flat", "conformal", "kahler_potential", "balanced_psi", "snapshot")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class GridSection:
    N: int = 16
    active_axes: tuple[str, ...] = ("x1",)
    periods: tuple[float, ...] = (1.0,)


@dataclass(frozen=True)
class InitialSection:
    kind: str = "flat"
    amplitude: float = 0.0
    axes: tuple[str, ...] = ("x1",)
    decay: float = 0.0
    path: str = ""


@dataclass(frozen=True)
class FlowSection:
    alpha_prime: float = 0.0
    phi_source: str = "zero"
    phi_coefficients: tuple[complex, ...] = (0j,) * 9
    phi_reference: str = "initial"
    dt_initial: float = 1e-3
    dt_safety: float = 0.1
    t_max: float = 0.1
    rhs_mode: str = "psi_evolution"
    cross_check_tol: float = 1e-6
    max_retries: int = 40


@dataclass(frozen=True)
class MonitorSection:
    p: float = 3.0
    a0: float = 1.0
    cadence: int = 10
    max_order: int = 2


@dataclass(frozen=True)
class OutputSection:
    directory: str = "anomalyflow_out"
    emit_snapshots: bool = True
    emit_plot_data: bool = True
    emit_figures: bool = True


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    initial: InitialSection = field(default_factory=InitialSection)
    flow: FlowSection = field(default_factory=FlowSection)
    monitor: MonitorSection = field(default_factory=MonitorSection)
    output: OutputSection = field(default_factory=OutputSection)


SECTIONS = {
    "grid": GridSection,
    "initial": InitialSection,
    "flow": FlowSection,
    "monitor": MonitorSection,
    "output": OutputSection,
}


# --------------------------------------------------------------------------
# value parsers


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"expected an integer, got {text!r}") from None


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"expected a real number, got {text!r}") from None


def _list(item: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        parts = [p.strip() for p in text.split(",") if p.strip()]
        return tuple(item(p) for p in parts)

    return parse


def _axis(text: str) -> str:
    return AXIS_NAMES[axis_index(text)]


def _complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", ""))
    except ValueError:
        raise ValueError(f"expected a complex number, got {text!r}") from None


def _str(text: str) -> str:
    return text


_PARSERS: dict[type, Callable[[str], Any]] = {int: _int, float: _float, bool: _bool, str: _str}
_LIST_PARSERS = {
    ("grid", "active_axes"): _list(_axis),
    ("grid", "periods"): _list(_float),
    ("initial", "axes"): _list(_axis),
    ("flow", "phi_coefficients"): _list(_complex),
}


def _parser(section: str, f) -> Callable[[str], Any]:
    if (section, f.name) in _LIST_PARSERS:
        return _LIST_PARSERS[(section, f.name)]
    return _PARSERS[type(f.default)]


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, complex):
        return repr(value).strip("()")
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


# --------------------------------------------------------------------------
# validation


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise ValueError(message)


_VALIDATORS: dict[tuple[str, str], Callable[[Any], None]] = {
    ("grid", "N"): lambda v: _check(v >= 4 and v % 2 == 0, "N must be an even integer >= 4"),
    ("grid", "active_axes"): lambda v: _check(len(set(v)) == len(v), "active_axes must not repeat"),
    ("grid", "periods"): lambda v: _check(
        len(v) in (1, 6) and all(p > 0 for p in v), "periods must be one or six positive reals"
    ),
    ("initial", "kind"): lambda v: _check(v in INITIAL_KINDS, f"kind must be one of {', '.join(INITIAL_KINDS)}"),
    ("initial", "decay"): lambda v: _check(0 <= v < 1, "decay must lie in [0, 1)"),
    ("initial", "axes"): lambda v: _check(len(v) >= 1, "axes needs at least one axis"),
    ("flow", "alpha_prime"): lambda v: _check(v >= 0, "alpha_prime must be ≥ 0"),
    ("flow", "phi_source"): lambda v: _check(
        v in ("zero", "constant_form", "chern_weil_background"),
        "phi_source must be zero, constant_form or chern_weil_background",
    ),
    ("flow", "phi_coefficients"): lambda v: _check(len(v) == 9, "phi_coefficients needs 9 entries (3x3, row-major)"),
    ("flow", "dt_initial"): lambda v: _check(v > 0, "dt_initial must be > 0"),
    ("flow", "dt_safety"): lambda v: _check(0 < v <= 1, "dt_safety must lie in (0, 1]"),
    ("flow", "t_max"): lambda v: _check(v > 0, "t_max must be > 0"),
    ("flow", "rhs_mode"): lambda v: _check(
        v in ("psi_evolution", "metric_evolution", "cross_check"),
        "rhs_mode must be psi_evolution, metric_evolution or cross_check",
    ),
    ("flow", "cross_check_tol"): lambda v: _check(v > 0, "cross_check_tol must be > 0"),
    ("flow", "max_retries"): lambda v: _check(v >= 0, "max_retries must be >= 0"),
    ("monitor", "p"): lambda v: _check(v >= 1, "p must be >= 1"),
    ("monitor", "a0"): lambda v: _check(v > 0, "a0 must be > 0"),
    ("monitor", "cadence"): lambda v: _check(v >= 1, "cadence must be >= 1"),
    ("monitor", "max_order"): lambda v: _check(0 <= v <= 2, "max_order must lie in 0..2"),
}


def _cross_validate(cfg: RunConfig, lines: dict[tuple[str, str], int]) -> None:
    def fail(msg: str, key: tuple[str, str]) -> None:
        raise ConfigError(msg, lines.get(key))

    if cfg.initial.kind == "snapshot" and not cfg.initial.path:
        fail("initial kind snapshot needs a path", ("initial", "kind"))
    if cfg.initial.kind not in ("flat", "snapshot"):
        missing = [a for a in cfg.initial.axes if a not in cfg.grid.active_axes]
        if missing:
            fail(f"initial axes {', '.join(missing)} are not active grid axes", ("initial", "axes"))
    if cfg.flow.phi_source == "chern_weil_background" and not cfg.flow.phi_reference:
        fail("chern_weil_background needs phi_reference", ("flow", "phi_source"))


# --------------------------------------------------------------------------
# parse / render


def parse_config(text: str) -> RunConfig:
    values: dict[str, dict[str, Any]] = {name: {} for name in SECTIONS}
    lines: dict[tuple[str, str], int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(" #", 1)[0].strip() if not raw.lstrip().startswith("#") else ""
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if section is None:
            raise ConfigError("key outside of any [section]", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        known = {f.name: f for f in fields(SECTIONS[section])}
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
        if key in values[section]:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", lineno)
        try:
            parsed = _parser(section, known[key])(val)
            check = _VALIDATORS.get((section, key))
            if check:
                check(parsed)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: {exc}", lineno) from None
        values[section][key] = parsed
        lines[(section, key)] = lineno
    cfg = RunConfig(**{name: cls(**values[name]) for name, cls in SECTIONS.items()})
    _cross_validate(cfg, lines)
    return cfg


def render_config(cfg: RunConfig) -> str:
    out = []
    for name in SECTIONS:
        sec = getattr(cfg, name)
        out.append(f"[{name}]")
        for f in fields(sec):
            out.append(f"{f.name} = {_fmt(getattr(sec, f.name))}")
        out.append("")
    return "\n".join(out)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
