"""Single-memristor model: linear dopant drift with a window function.

A device is described by its normalized boundary position ``x`` in [0, 1]
(1 = fully doped, low resistance).  Memristance is affine in ``x`` and the
state moves at ``k * i * f(x, i)`` where ``f`` is either the Biolek or the
Prodromakis window.

All array-valued helpers accept numpy arrays so that the circuit solver can
advance every device of a grid in one call.  The dataclass wrappers
(:class:`DeviceState`, :class:`Fuse`) are thin value types over the same
functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np


class ModelValidityError(ValueError):
    """Raised when a charge-domain law is evaluated outside [r_on, r_off]."""


@dataclass(frozen=True)
class Biolek:
    p: int = 1

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"Biolek exponent must be an integer >= 1, got {self.p}")


@dataclass(frozen=True)
class Prodromakis:
    j: float = 1.0
    p: int = 10

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"Prodromakis exponent must be an integer >= 1, got {self.p}")
        if not 0.0 < self.j <= 1.0:
            raise ValueError(f"Prodromakis scale j must lie in (0, 1], got {self.j}")


Window = Union[Biolek, Prodromakis]


@dataclass(frozen=True)
class DeviceParams:
    """Fixed device parameters.

    ``k`` aggregates ion mobility, R_on and film thickness
    (``k = mu_v * r_on / D**2``) and has units of 1/(A*s).
    """

    r_on: float = 100.0
    r_off: float = 16000.0
    k: float = 1e4
    window: Window = field(default_factory=Prodromakis)

    def __post_init__(self):
        if not 0.0 < self.r_on < self.r_off:
            raise ValueError(f"need 0 < r_on < r_off, got r_on={self.r_on}, r_off={self.r_off}")
        if self.k <= 0:
            raise ValueError(f"k must be positive, got {self.k}")


@dataclass(frozen=True)
class DeviceState:
    x: float
    params: DeviceParams = field(default_factory=DeviceParams)

    def __post_init__(self):
        if not 0.0 <= self.x <= 1.0:
            raise ValueError(f"state x must lie in [0, 1], got {self.x}")

    @classmethod
    def from_resistance(cls, r_init: float, params: DeviceParams | None = None) -> "DeviceState":
        params = params or DeviceParams()
        return cls(float(state_for_resistance(r_init, params.r_on, params.r_off)), params)


@dataclass(frozen=True)
class Fuse:
    """Two memristors in anti-series.

    ``a`` faces the fuse's first node and ``b`` its second.  For inter-layer
    fuses ``a`` is cM1 (layer 1 side) and ``b`` is cM2 (layer 2 side).
    """

    a: DeviceState
    b: DeviceState


# -- vectorized primitives ---------------------------------------------------


def state_for_resistance(r, r_on, r_off):
    """Invert the memristance law: the ``x`` giving resistance ``r``."""
    r = np.asarray(r, dtype=float)
    if np.any((r < r_on) | (r > r_off)):
        raise ValueError("resistance outside [r_on, r_off]")
    return (r_off - r) / (r_off - r_on)


def memristance_x(x, r_on, r_off):
    return x * r_on + (1.0 - x) * r_off


def prodromakis(x, j=1.0, p=10):
    x = np.asarray(x, dtype=float)
    return j * (1.0 - ((x - 0.5) ** 2 + 0.75) ** p)


def biolek(x, i, p=1):
    # step(-i) is 1 when the current is non-positive: the state heads for 0
    x = np.asarray(x, dtype=float)
    toward = np.where(np.asarray(i) <= 0, 1.0, 0.0)
    return 1.0 - (x - toward) ** (2 * p)


def window_value(window: Window, x, i):
    if isinstance(window, Prodromakis):
        return prodromakis(x, window.j, window.p)
    if isinstance(window, Biolek):
        return biolek(x, i, window.p)
    raise TypeError(f"unknown window {window!r}")


def drift(x, i, k, window: Window):
    """dx/dt for arrays of states and currents."""
    return k * np.asarray(i, dtype=float) * window_value(window, x, i)


def euler_update(x, i, k, window: Window, dt):
    return np.clip(x + dt * drift(x, i, k, window), 0.0, 1.0)


# -- scalar operations on value types -----------------------------------------


def memristance(state: DeviceState) -> float:
    p = state.params
    return float(memristance_x(state.x, p.r_on, p.r_off))


def window_prodromakis(x: float, j: float = 1.0, p: int = 10) -> float:
    return float(prodromakis(x, j, p))


def window_biolek(x: float, i: float, p: int = 1) -> float:
    return float(biolek(x, i, p))


def state_derivative(state: DeviceState, i: float) -> float:
    p = state.params
    return float(drift(state.x, i, p.k, p.window))


def step_device(state: DeviceState, i: float, dt: float) -> DeviceState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    p = state.params
    return replace(state, x=float(euler_update(state.x, i, p.k, p.window, dt)))


def fuse_resistance(fuse: Fuse) -> float:
    return memristance(fuse.a) + memristance(fuse.b)


# -- charge-domain laws --------------------------------------------------------
#
# Both laws use the same R_off >> R_on simplification, so that
# d(flux)/dq is exactly memristance_of_charge.


def charge_limit(params: DeviceParams) -> float:
    """Largest charge for which memristance_of_charge stays >= r_on."""
    return (1.0 - params.r_on / params.r_off) / params.k


def _check_charge(q, params: DeviceParams):
    q = np.asarray(q, dtype=float)
    if np.any(q < 0) or np.any(q > charge_limit(params) * (1 + 1e-12)):
        raise ModelValidityError(
            f"charge outside [0, {charge_limit(params):.6g}] C: memristance leaves [r_on, r_off]"
        )
    return q


def memristance_of_charge(q, params: DeviceParams):
    q = _check_charge(q, params)
    m = params.r_off * (1.0 - params.k * q)
    return float(m) if m.ndim == 0 else m


def flux_of_charge(q, params: DeviceParams):
    q = _check_charge(q, params)
    phi = params.r_off * q - 0.5 * params.r_off * params.k * q**2
    return float(phi) if phi.ndim == 0 else phi


# -- quasi-static drive ---------------------------------------------------------


def sinusoidal_iv(
    params: DeviceParams,
    x0: float,
    amplitude: float,
    frequency: float,
    periods: int = 1,
    steps_per_period: int = 20000,
):
    """Drive one device with ``amplitude * sin(2 pi f t)``.

    Returns ``(t, v, i, x)`` sampled at every integration step.
    """
    n = periods * steps_per_period
    dt = 1.0 / (frequency * steps_per_period)
    t = np.arange(n + 1) * dt
    v = amplitude * np.sin(2 * np.pi * frequency * t)
    i = np.empty_like(t)
    x = np.empty_like(t)
    x[0] = x0
    for n_ in range(n + 1):
        i[n_] = v[n_] / memristance_x(x[n_], params.r_on, params.r_off)
        if n_ < n:
            x[n_ + 1] = euler_update(x[n_], i[n_], params.k, params.window, dt)
    return t, v, i, x


def _shoelace(v, i):
    return 0.5 * abs(float(np.dot(v, np.roll(i, -1)) - np.dot(i, np.roll(v, -1))))


def loop_area(v, i) -> float:
    """Total area of the lobes of a pinched I-V trajectory.

    Each same-sign run of ``v`` is closed through the origin and measured on
    its own, so lobes traversed in opposite senses do not cancel.
    """
    v = np.asarray(v, dtype=float)
    i = np.asarray(i, dtype=float)
    sign = np.sign(v)
    cuts = np.flatnonzero(np.diff(sign) != 0) + 1
    area = 0.0
    for seg in np.split(np.arange(v.size), cuts):
        if seg.size >= 3 and sign[seg[0]] != 0:
            area += _shoelace(np.append(v[seg], 0.0), np.append(i[seg], 0.0))
    return area
