"""Frame sequences and the per-pixel voltage schedules that bias a grid.

Intensities (0..255) map linearly onto 0..40 mV.  The voltage of every
channel is held constant for one frame period; for a double-layer grid the
second layer sees the same schedule one frame late, with the first frame
held during the initial period.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .netpbm import PGMError, numbered_files, read_pgm, write_pgm

V_MAX = 0.040  # volts at intensity 255


@dataclass(frozen=True, eq=False)
class FrameSequence:
    frames: np.ndarray  # (n, rows, cols) uint8
    frame_rate: float = 15.0

    def __post_init__(self):
        f = np.asarray(self.frames)
        if f.ndim != 3 or f.shape[0] < 1:
            raise ValueError("frames must have shape (n, rows, cols) with n >= 1")
        if self.frame_rate <= 0:
            raise ValueError("frame rate must be positive")
        if f.dtype != np.uint8:
            if f.min() < 0 or f.max() > 255:
                raise ValueError("intensities must lie in 0..255")
            object.__setattr__(self, "frames", f.astype(np.uint8))

    @property
    def rows(self) -> int:
        return int(self.frames.shape[1])

    @property
    def cols(self) -> int:
        return int(self.frames.shape[2])

    def __len__(self) -> int:
        return int(self.frames.shape[0])

    @property
    def period(self) -> float:
        return 1.0 / self.frame_rate

    def complement(self) -> "FrameSequence":
        return FrameSequence(255 - self.frames, self.frame_rate)


@dataclass(frozen=True, eq=False)
class Stimulus:
    """Step schedule per channel; channels are indexed (layer, row, col).

    ``volts`` has shape (n_frames, layers, rows, cols).  With ``ramp > 0``
    each frame starts with a linear ramp of that length from the previous
    level.
    """

    volts: np.ndarray
    frame_period: float
    ramp: float = 0.0

    def __post_init__(self):
        if self.ramp < 0 or self.ramp >= self.frame_period:
            raise ValueError("ramp must lie in [0, frame period)")

    @property
    def n_frames(self) -> int:
        return int(self.volts.shape[0])

    @property
    def duration(self) -> float:
        return self.n_frames * self.frame_period

    @property
    def n_channels(self) -> int:
        return int(np.prod(self.volts.shape[1:]))

    def frame_index(self, t: float) -> int:
        return int(min(max(np.floor(t / self.frame_period), 0), self.n_frames - 1))

    def at(self, t: float) -> np.ndarray:
        """Flat channel voltages at time ``t``."""
        n = self.frame_index(t)
        level = self.volts[n].ravel()
        if self.ramp > 0 and n > 0:
            into = t - n * self.frame_period
            if into < self.ramp:
                prev = self.volts[n - 1].ravel()
                return prev + (level - prev) * (into / self.ramp)
        return level

    def max_voltage(self) -> float:
        return float(self.volts.max(initial=0.0))


def quantize_to_voltage(intensity):
    """Intensity 0..255 to volts (255 -> 40 mV)."""
    a = np.asarray(intensity)
    if np.any(a < 0) or np.any(a > 255) or np.any(np.asarray(a, dtype=float) != np.round(a)):
        raise ValueError("intensity must be an integer in 0..255")
    v = a.astype(float) * 40.0 / 255.0 / 1000.0
    return float(v) if v.ndim == 0 else v


def build_stimulus(frames: FrameSequence, layers: int = 1, ramp: float = 0.0) -> Stimulus:
    if layers not in (1, 2):
        raise ValueError("layers must be 1 or 2")
    v1 = quantize_to_voltage(frames.frames)
    if layers == 1:
        volts = v1[:, None]
    else:
        delayed = np.concatenate([v1[:1], v1[:-1]], axis=0)
        volts = np.stack([v1, delayed], axis=1)
    return Stimulus(np.ascontiguousarray(volts), frames.period, ramp)


def constant_stimulus(volts, duration: float) -> Stimulus:
    """A single-frame schedule holding ``volts`` (layers, rows, cols) for ``duration``."""
    volts = np.asarray(volts, dtype=float)
    if volts.ndim == 2:
        volts = volts[None]
    return Stimulus(volts[None].copy(), float(duration))


def scale_brightness(frames: FrameSequence, factor: float) -> FrameSequence:
    if not 0.0 < factor <= 1.0:
        raise ValueError("brightness factor must lie in (0, 1]")
    scaled = np.floor(frames.frames.astype(float) * factor + 0.5)
    return FrameSequence(np.clip(scaled, 0, 255).astype(np.uint8), frames.frame_rate)


def load_frames(prefix, frame_rate: float = 15.0) -> FrameSequence:
    paths = numbered_files(prefix)
    if not paths:
        raise FileNotFoundError(f"no PGM frames match {prefix!r}")
    images = [read_pgm(p) for p in paths]
    shape = images[0].shape
    for p, im in zip(paths, images):
        if im.shape != shape:
            raise PGMError(f"{p}: frame is {im.shape}, expected {shape}")
    return FrameSequence(np.stack(images), frame_rate)


def save_frames(frames: FrameSequence, prefix) -> list[str]:
    prefix = os.fspath(prefix)
    folder = os.path.dirname(prefix)
    if folder:
        os.makedirs(folder, exist_ok=True)
    paths = []
    for n, frame in enumerate(frames.frames, start=1):
        path = f"{prefix}{n:04d}.pgm"
        write_pgm(path, frame)
        paths.append(path)
    return paths


def write_stimulus_csv(stim: Stimulus, path) -> None:
    """One row per (frame start, channel): time, layer, row, col, volts."""
    _, layers, rows, cols = stim.volts.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "layer", "row", "col", "volts"])
        for n in range(stim.n_frames):
            t = n * stim.frame_period
            for (lyr, r, c), v in np.ndenumerate(stim.volts[n]):
                w.writerow([f"{t:.9g}", lyr + 1, r, c, f"{v:.9g}"])


# -- synthetic scenes -------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    top: int
    left: int
    height: int
    width: int
    intensity: int = 0
    # per-transition displacement (drow, dcol); a single pair repeats
    moves: Sequence = ((0, 0),)


def fast_then_slow_moves(frames: int = 15, fast: int = 2, slow: int = 1, switch: int = 5):
    """Horizontal displacements: ``fast`` px/frame up to frame ``switch``, then ``slow``."""
    return tuple((0, fast if n + 1 <= switch else slow) for n in range(1, frames))


def synth_scene(
    rows: int,
    cols: int,
    boxes: Iterable[Box],
    frames: int = 15,
    background: int = 255,
    frame_rate: float = 15.0,
) -> FrameSequence:
    """Rectangles translating over a flat background; later boxes paint on top."""
    out = np.full((frames, rows, cols), background, dtype=np.uint8)
    for box in boxes:
        moves = list(box.moves)
        if len(moves) == 1:
            moves = moves * (frames - 1)
        if len(moves) < frames - 1:
            raise ValueError("not enough displacements for the requested frame count")
        r, c = box.top, box.left
        for n in range(frames):
            if n > 0:
                r += moves[n - 1][0]
                c += moves[n - 1][1]
            if r < 0 or c < 0 or r + box.height > rows or c + box.width > cols:
                raise ValueError(f"box leaves the {rows}x{cols} frame at frame {n + 1}")
            out[n, r : r + box.height, c : c + box.width] = box.intensity
    return FrameSequence(out, frame_rate)


def box_positions(box: Box, frames: int) -> np.ndarray:
    """(top, left) of ``box`` in every frame."""
    moves = list(box.moves)
    if len(moves) == 1:
        moves = moves * (frames - 1)
    pos = np.zeros((frames, 2), dtype=int)
    pos[0] = box.top, box.left
    for n in range(1, frames):
        pos[n] = pos[n - 1] + np.asarray(moves[n - 1])
    return pos


def synth_box(
    rows: int = 17,
    cols: int = 30,
    box: tuple = (5, 1, 7, 8),
    moves=None,
    frames: int = 15,
    polarity: str = "black-on-white",
    frame_rate: float = 15.0,
) -> FrameSequence:
    """One box moving over a flat background.

    ``box`` is (top, left, height, width).  ``moves`` defaults to 2 px/frame
    to the right through frame 5 and 1 px/frame afterwards.
    """
    if moves is None:
        moves = fast_then_slow_moves(frames)
    seq = synth_scene(rows, cols, [Box(*box, intensity=0, moves=moves)], frames, 255, frame_rate)
    if polarity == "black-on-white":
        return seq
    if polarity == "white-on-black":
        return seq.complement()
    raise ValueError(f"unknown polarity {polarity!r}")


def synth_two_objects(
    rows: int = 35,
    cols: int = 40,
    speed: int = 1,
    frames: int = 2,
    background: int = 110,
    frame_rate: float = 15.0,
) -> FrameSequence:
    """A light and a dark box side by side, both moving ``speed`` px/frame down the rows."""
    h, w = max(rows // 6, 2), max(cols * 3 // 10, 2)
    top = max(rows // 9, 1)
    boxes = [
        Box(top, cols // 8, h, w, 230, ((speed, 0),)),
        Box(top + 2, cols * 6 // 10, h, w, 20, ((speed, 0),)),
    ]
    return synth_scene(rows, cols, boxes, frames, background, frame_rate)


def synth_sinusoid(rows: int = 32, cols: int = 32, shift=(1.0, 0.0), period: float = 16.0) -> np.ndarray:
    """Two float frames of a smooth plaid, the second translated by ``shift`` = (dx, dy) pixels."""
    y, x = np.mgrid[0:rows, 0:cols].astype(float)

    def plaid(xx, yy):
        return 0.5 + 0.2 * np.sin(2 * np.pi * xx / period) + 0.2 * np.sin(2 * np.pi * yy / period)

    return np.stack([plaid(x, y), plaid(x - shift[0], y - shift[1])])
