"""Optical flow: a memristive-grid estimate and a Horn-Schunck reference.

The grid method biases a single hexagonal layer from a transient map
(disappearing pixels become +40 mV sources, appearing pixels are tied to
ground) and reads the direction of motion off the fuses around each moving
edge pixel: current runs from where the object was to where it now is.
"""
from __future__ import annotations

import colorsys
import csv
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .detection import Transient, TransientMap
from .device import DeviceParams
from .netpbm import write_ppm
from .solver import DEFAULT_DT, SimulationTrace, run
from .stimulus import V_MAX, constant_stimulus
from .topology import UNIT_VECTORS, build_hex_layer


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel (u, v) with x to the right and y down the rows.

    For the grid method (u, v) is a unit direction and ``magnitude`` the
    length of the raw vector sum in ohm/second; for Horn-Schunck (u, v) is
    in pixels/frame and ``magnitude`` their Euclidean norm.
    """

    u: np.ndarray
    v: np.ndarray
    mask: np.ndarray
    magnitude: np.ndarray

    @property
    def shape(self):
        return self.mask.shape

    def angles(self) -> np.ndarray:
        return np.arctan2(self.v, self.u)

    def merge(self, other: "FlowField") -> "FlowField":
        """Combine two fields; ``other`` wins where both are valid."""
        m = other.mask
        return FlowField(
            np.where(m, other.u, self.u),
            np.where(m, other.v, self.v),
            self.mask | other.mask,
            np.where(m, other.magnitude, self.magnitude),
        )


@dataclass(frozen=True)
class GradientField:
    ix: np.ndarray
    iy: np.ndarray
    it: np.ndarray


@dataclass(frozen=True, eq=False)
class Biasing:
    source_mask: np.ndarray
    ground_mask: np.ndarray
    volts: float = V_MAX


def transient_to_sources(tmap: TransientMap, volts: float = V_MAX) -> Biasing:
    """Disappearing pixels drive the grid, appearing pixels sink to ground."""
    src = tmap.classes == Transient.DISAPPEARING
    gnd = tmap.classes == Transient.APPEARING
    if not src.any() or not gnd.any():
        raise ValueError("transient map needs both appearing and disappearing pixels")
    return Biasing(src, gnd, volts)


def flow_pass(
    biasing: Biasing,
    params: DeviceParams | None = None,
    r_series: float = 1000.0,
    r_init: float = 200.0,
    duration: float = 1.0 / 15.0,
    dt: float = DEFAULT_DT,
    sample_every: float | None = None,
) -> SimulationTrace:
    """Simulate a single layer biased by ``biasing`` for ``duration`` seconds."""
    rows, cols = biasing.source_mask.shape
    topo = build_hex_layer(
        rows, cols, params, r_series, r_init, source_mask=biasing.source_mask, ground_mask=biasing.ground_mask
    )
    volts = np.where(biasing.source_mask, biasing.volts, 0.0)
    return run(topo, constant_stimulus(volts, duration), dt=dt, sample_every=sample_every)


def flow_vectors(trace: SimulationTrace, mask, sample: int = -1) -> FlowField:
    """Vector sum of fuse activity around each masked pixel.

    Each of a pixel's fuses contributes its rate magnitude along the
    direction towards the neighbour, signed by the current leaving the
    pixel through that fuse.
    """
    topo = trace.topology
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (topo.rows, topo.cols):
        raise ValueError("mask does not match the grid")
    s = sample % trace.times.size
    if s < 1:
        raise ValueError("rates are undefined at the first sample")
    activity = trace.activity_at(s)
    volts = trace.voltages[s]
    fuse, sign, direction = topo.incidence(1)
    valid = fuse >= 0
    f = np.where(valid, fuse, 0)
    i_out = sign * (volts[topo.fuse_a[f]] - volts[topo.fuse_b[f]])
    weight = np.where(valid, np.sign(i_out) * activity[f], 0.0)
    vec = np.einsum("rcd,dk->rck", weight, UNIT_VECTORS[:6])
    mag = np.hypot(vec[..., 0], vec[..., 1])
    safe = np.where(mag > 0, mag, 1.0)
    u = np.where(mask, vec[..., 0] / safe, 0.0)
    v = np.where(mask, vec[..., 1] / safe, 0.0)
    return FlowField(u, v, mask.copy(), np.where(mask, mag, 0.0))


def grid_flow(tmap: TransientMap, **kwargs) -> FlowField:
    """Transient map -> biased flow pass -> vectors at the map's moving-edge pixels."""
    trace = flow_pass(transient_to_sources(tmap), **kwargs)
    return flow_vectors(trace, tmap.support())


# -- Horn-Schunck reference ----------------------------------------------------------------

_HS_KERNEL = np.array([[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]])


def _as_float(frame):
    a = np.asarray(frame)
    return a.astype(float) / 255.0 if a.dtype == np.uint8 else a.astype(float)


def image_gradients(frame_a, frame_b) -> GradientField:
    a, b = _as_float(frame_a), _as_float(frame_b)
    if a.shape != b.shape:
        raise ValueError(f"frames differ in shape: {a.shape} vs {b.shape}")
    iy, ix = np.gradient(0.5 * (a + b))
    return GradientField(ix, iy, b - a)


def local_average(field: np.ndarray) -> np.ndarray:
    return ndimage.convolve(field, _HS_KERNEL, mode="nearest")


def hs_residual(grad: GradientField, u, v, lam) -> float:
    """RMS of both Euler-Lagrange residuals with the Laplacian taken as (avg - value)."""
    data = grad.ix * u + grad.iy * v + grad.it
    ru = grad.ix * data - lam * (local_average(u) - u)
    rv = grad.iy * data - lam * (local_average(v) - v)
    return float(np.sqrt(np.mean(ru**2 + rv**2)))


def horn_schunck(frame_a, frame_b, lam: float = 0.1, iterations: int = 200, history: list | None = None) -> FlowField:
    """Horn-Schunck flow between two frames (uint8 input is scaled to [0, 1]).

    If ``history`` is a list, the residual after each iteration is appended.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if iterations < 1:
        raise ValueError("need at least one iteration")
    g = image_gradients(frame_a, frame_b)
    u = np.zeros_like(g.ix)
    v = np.zeros_like(g.ix)
    denom = lam + g.ix**2 + g.iy**2
    for _ in range(iterations):
        ub, vb = local_average(u), local_average(v)
        common = (g.ix * ub + g.iy * vb + g.it) / denom
        u = ub - g.ix * common
        v = vb - g.iy * common
        if history is not None:
            history.append(hs_residual(g, u, v, lam))
    return FlowField(u, v, np.ones(u.shape, dtype=bool), np.hypot(u, v))


# -- comparison and export ---------------------------------------------------------------------


def angular_difference(a: FlowField, b: FlowField, mask=None) -> np.ndarray:
    """Absolute angle between the two fields, in degrees, where both are defined and non-zero."""
    m = a.mask & b.mask & (a.magnitude > 0) & (b.magnitude > 0)
    if mask is not None:
        m &= np.asarray(mask, dtype=bool)
    d = np.abs(np.angle(np.exp(1j * (a.angles() - b.angles()))))
    return np.degrees(d[m])


def write_flow_csv(field: FlowField, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "u", "v"])
        for r, c in zip(*np.nonzero(field.mask)):
            w.writerow([r, c, repr(float(field.u[r, c])), repr(float(field.v[r, c]))])


def flow_to_rgb(field: FlowField) -> np.ndarray:
    """Colour wheel: hue is direction, saturation is magnitude relative to the largest."""
    peak = float(field.magnitude[field.mask].max(initial=0.0)) or 1.0
    hue = (np.arctan2(field.v, field.u) / (2 * np.pi)) % 1.0
    sat = np.clip(field.magnitude / peak, 0.0, 1.0)
    rgb = np.full(field.shape + (3,), 255, dtype=np.uint8)
    for r, c in zip(*np.nonzero(field.mask)):
        rgb[r, c] = np.round(np.array(colorsys.hsv_to_rgb(hue[r, c], sat[r, c], 1.0)) * 255)
    return rgb


def write_flow_ppm(field: FlowField, path) -> None:
    write_ppm(path, flow_to_rgb(field))
