"""Edge and transient detection from simulation traces.

Two edge detectors are provided: the state-variance rule, which looks at
the accumulated memristance change around a pixel, and the rate rule, which
looks at how fast the surrounding fuses are changing right now.  Only the
rate rule follows moving edges, because memristors do not forget.

Transient detection reads the two devices of each inter-layer fuse of a
double-layer run: current from layer 2 into layer 1 lowers cM1 and raises
cM2 (class A), the opposite flow gives class B.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .netpbm import write_pgm
from .solver import SimulationTrace
from .topology import Direction, GridTopology, hex_neighbor


class Transient(enum.IntEnum):
    NONE = 0
    APPEARING = 1
    DISAPPEARING = 2
    # raw, polarity not yet resolved
    CLASS_A = 3
    CLASS_B = 4


class Polarity(enum.Enum):
    RAW = "raw"
    ON = "on"
    OFF = "off"


@dataclass(frozen=True, eq=False)
class EdgeMap:
    mask: np.ndarray  # (rows, cols) bool
    time: float = float("nan")
    frame: int | None = None

    @property
    def shape(self):
        return self.mask.shape

    def labels(self) -> np.ndarray:
        return self.mask.astype(np.int8)


@dataclass(frozen=True, eq=False)
class TransientMap:
    classes: np.ndarray  # (rows, cols) int8 of Transient values
    polarity: Polarity = Polarity.RAW
    time: float = float("nan")
    frame: int | None = None

    @property
    def shape(self):
        return self.classes.shape

    def labels(self) -> np.ndarray:
        return self.classes

    def support(self) -> np.ndarray:
        return self.classes != Transient.NONE

    def count(self, kind: Transient) -> int:
        return int(np.count_nonzero(self.classes == kind))


# -- thresholds --------------------------------------------------------------------


@dataclass(frozen=True)
class AdaptiveThreshold:
    """``max(median_factor * median, fraction * quantile, floor)`` of a statistic.

    The median term alone collapses when most of the scene is static, so a
    fraction of a high quantile sets the working level; ``floor`` keeps
    solver round-off out of otherwise empty maps.
    """

    median_factor: float = 5.0
    fraction: float = 0.6
    quantile: float = 99.0
    floor: float = 1e-3

    def __call__(self, values) -> float:
        v = np.abs(np.asarray(values, dtype=float)).ravel()
        v = v[np.isfinite(v)]
        if v.size == 0:
            return self.floor
        return float(
            max(self.median_factor * np.median(v), self.fraction * np.percentile(v, self.quantile), self.floor)
        )


DEFAULT_THRESHOLD = AdaptiveThreshold()


def _resolve(theta, values, rule: AdaptiveThreshold | None) -> float:
    if theta is not None:
        return float(theta)
    return (rule or DEFAULT_THRESHOLD)(values)


def _sample(trace: SimulationTrace, t: float | None, frame: int | None) -> int:
    if frame is not None:
        return trace.frame_sample(frame)
    if t is None:
        raise ValueError("give either t or frame")
    s = trace.sample_index(t)
    if s < 1:
        raise ValueError("rates are undefined at the first sample")
    return s


def _gather(topology: GridTopology, per_fuse: np.ndarray, layer: int = 1):
    fuse, sign, _ = topology.incidence(layer)
    valid = fuse >= 0
    return np.where(valid, per_fuse[np.where(valid, fuse, 0)], np.nan), sign, valid


# -- edge maps -------------------------------------------------------------------


def edge_map_rate_threshold(
    trace: SimulationTrace,
    t: float | None = None,
    theta_rate: float | None = None,
    min_count: int = 2,
    *,
    frame: int | None = None,
    layer: int = 1,
    statistic: str = "activity",
    rule: AdaptiveThreshold | None = None,
) -> EdgeMap:
    """Pixels where at least ``min_count`` incident fuses change faster than ``theta_rate``.

    ``statistic`` selects the per-fuse rate: ``"activity"`` sums the
    magnitudes of both device rates, ``"fuse"`` uses |dM/dt| of the
    series memristance.  ``theta_rate=None`` applies the adaptive rule over
    all intra-layer fuses of the layer at that instant.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if statistic not in ("activity", "fuse"):
        raise ValueError(f"unknown statistic {statistic!r}")
    s = _sample(trace, t, frame)
    per_fuse = trace.activity_at(s) if statistic == "activity" else np.abs(trace.rate_at(s))
    stat, _, valid = _gather(trace.topology, per_fuse, layer)
    theta = _resolve(theta_rate, stat[valid], rule)
    count = np.sum(np.where(valid, stat > theta, False), axis=-1)
    return EdgeMap(count >= min_count, float(trace.times[s]), frame)


def edge_map_state_threshold(
    trace: SimulationTrace,
    t: float | None = None,
    theta_var: float | None = None,
    *,
    frame: int | None = None,
    layer: int = 1,
    rule: AdaptiveThreshold | None = None,
) -> EdgeMap:
    """Pixels whose incident fuses have drifted unevenly since t = 0.

    The statistic is the variance, over the pixel's intra-layer fuses, of
    ``M_f(t) - M_f(0)``.
    """
    s = _sample(trace, t, frame) if frame is not None else trace.sample_index(t)
    mem = trace.memristance
    change = mem[s] - mem[0]
    stat, _, valid = _gather(trace.topology, change, layer)
    var = np.nanvar(np.where(valid, stat, np.nan), axis=-1)
    theta = _resolve(theta_var, var, rule)
    return EdgeMap(var > theta, float(trace.times[s]), frame)


# -- transient maps ------------------------------------------------------------------


def transient_raw(
    trace: SimulationTrace,
    t: float | None = None,
    theta_transient: float | None = None,
    *,
    frame: int | None = None,
    rule: AdaptiveThreshold | None = None,
) -> TransientMap:
    """Classify pixels by the rate signs of their inter-layer fuse devices.

    (dcM1/dt < 0, dcM2/dt > 0) is class A, (> 0, < 0) class B; pixels whose
    larger device rate does not exceed the threshold, or whose signs agree,
    are NONE.
    """
    topo = trace.topology
    if topo.layers != 2:
        raise ValueError("transient detection needs a double-layer trace")
    s = _sample(trace, t, frame)
    inter = topo.inter_fuses()
    ra, rb = trace.device_rates_at(s)
    ra, rb = ra[inter], rb[inter]
    stat = np.maximum(np.abs(ra), np.abs(rb))
    theta = _resolve(theta_transient, stat, rule)
    active = stat > theta
    out = np.zeros(stat.shape, dtype=np.int8)
    out[active & (ra < 0) & (rb > 0)] = Transient.CLASS_A
    out[active & (ra > 0) & (rb < 0)] = Transient.CLASS_B
    return TransientMap(out, Polarity.RAW, float(trace.times[s]), frame)


def object_intensity(previous, current, window: int = 15) -> np.ndarray:
    """Per-pixel intensity of whatever is moving.

    A changed pixel shows the moving object in one frame and the background
    in the other.  The background level is the local median of the previous
    frame over ``window`` pixels; of the two observed values the one farther
    from it is taken as the object.  Unchanged pixels keep their value.
    """
    prev = np.asarray(previous, dtype=float)
    cur = np.asarray(current, dtype=float)
    if prev.shape != cur.shape:
        raise ValueError("frames differ in shape")
    background = ndimage.median_filter(prev, size=window, mode="nearest")
    take_cur = np.abs(cur - background) >= np.abs(prev - background)
    return np.where(take_cur, cur, prev)


def split_on_off(raw: TransientMap, frame, intensity_split: float = 128):
    """Separate a raw map into OFF (dark mover) and ON (light mover) responses.

    ``frame`` gives the intensity each pixel is judged by; pass
    :func:`object_intensity` of the two frames to judge by the moving
    object.  Dark pixels: class A appears, class B disappears.  Light
    pixels: the other way round.
    """
    frame = np.asarray(frame)
    if frame.shape != raw.shape:
        raise ValueError(f"frame is {frame.shape}, map is {raw.shape}")
    dark = frame < intensity_split
    c = raw.classes
    off = np.zeros_like(c)
    on = np.zeros_like(c)
    off[dark & (c == Transient.CLASS_A)] = Transient.APPEARING
    off[dark & (c == Transient.CLASS_B)] = Transient.DISAPPEARING
    on[~dark & (c == Transient.CLASS_B)] = Transient.APPEARING
    on[~dark & (c == Transient.CLASS_A)] = Transient.DISAPPEARING
    return (
        TransientMap(on, Polarity.ON, raw.time, raw.frame),
        TransientMap(off, Polarity.OFF, raw.time, raw.frame),
    )


# -- metrics -----------------------------------------------------------------------


def _labels(m):
    return m.labels() if hasattr(m, "labels") else np.asarray(m)


def mismatch_rate(a, b) -> float:
    """Fraction of pixels classified differently; lists of maps are averaged."""
    if isinstance(a, (list, tuple)):
        if not isinstance(b, (list, tuple)) or len(a) != len(b) or not a:
            raise ValueError("map sequences must be non-empty and of equal length")
        return float(np.mean([mismatch_rate(x, y) for x, y in zip(a, b)]))
    la, lb = _labels(a), _labels(b)
    if la.shape != lb.shape:
        raise ValueError(f"map shapes differ: {la.shape} vs {lb.shape}")
    return float(np.count_nonzero(la != lb)) / la.size


def f1_score(detected, truth) -> float:
    d = np.asarray(detected.mask if isinstance(detected, EdgeMap) else detected, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    denom = d.sum() + t.sum()
    if denom == 0:
        return 1.0
    return 2.0 * np.count_nonzero(d & t) / denom


def outline_truth(frame, min_count: int = 2) -> np.ndarray:
    """Ideal edge map of a frame on the hexagonal lattice.

    A pixel is an edge when at least ``min_count`` of its lattice neighbours
    have a different intensity, i.e. the rate rule applied to an infinitely
    sharp, unsmoothed response.
    """
    img = np.asarray(frame)
    rows, cols = img.shape
    count = np.zeros(img.shape, dtype=int)
    for r in range(rows):
        for c in range(cols):
            for d in list(Direction)[:6]:
                rr, cc = hex_neighbor(r, c, d)
                if 0 <= rr < rows and 0 <= cc < cols and img[rr, cc] != img[r, c]:
                    count[r, c] += 1
    return count >= min_count


def band_thickness_speed(tmap: TransientMap, axis: str = "horizontal") -> float:
    """Median run length of consecutive APPEARING pixels along ``axis``.

    Runs are collected from every row (or column) that crosses the band.
    """
    band = tmap.classes == Transient.APPEARING
    if not band.any():
        raise ValueError("transient map has no appearing band")
    if axis == "vertical":
        band = band.T
    elif axis != "horizontal":
        raise ValueError(f"axis must be horizontal or vertical, got {axis!r}")
    runs = []
    for line in band:
        padded = np.concatenate([[False], line, [False]]).astype(np.int8)
        edges = np.flatnonzero(np.diff(padded))
        runs.extend(edges[1::2] - edges[::2])
    return float(np.median(runs))


# -- export --------------------------------------------------------------------------

_PGM_LEVEL = {Transient.NONE: 255, Transient.APPEARING: 0, Transient.DISAPPEARING: 128,
              Transient.CLASS_A: 0, Transient.CLASS_B: 128}


def map_to_image(m) -> np.ndarray:
    """Edge / appearing / class A -> 0, disappearing / class B -> 128, background -> 255."""
    if isinstance(m, EdgeMap):
        return np.where(m.mask, 0, 255).astype(np.uint8)
    img = np.full(m.shape, 255, dtype=np.uint8)
    for kind, level in _PGM_LEVEL.items():
        img[m.classes == kind] = level
    return img


def write_map_pgm(m, path) -> None:
    write_pgm(path, map_to_image(m))


def write_map_csv(m, path) -> None:
    """Listing of the non-background pixels: row, col, class."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "class"])
        if isinstance(m, EdgeMap):
            for r, c in zip(*np.nonzero(m.mask)):
                w.writerow([r, c, "edge"])
        else:
            for r, c in zip(*np.nonzero(m.classes)):
                w.writerow([r, c, Transient(int(m.classes[r, c])).name.lower()])
