"""Hexagonal memristive grids.

Pixels sit on an odd-row-offset hexagonal lattice: odd rows are shifted half
a column to the right, so every interior node touches six neighbours (E, W
and four diagonals).  Each grid node is biased from its own source node
through a series resistor; a double-layer grid stacks two such layers and
joins corresponding nodes with one inter-layer fuse.

Node ids are dense: grid nodes first (layer-major, then row-major), then
source nodes, then the single ground node.
"""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .device import DeviceParams, DeviceState, Fuse, Window, state_for_resistance


class Direction(enum.IntEnum):
    E = 0
    W = 1
    NE = 2
    NW = 3
    SE = 4
    SW = 5
    INTER = 6


OPPOSITE = {
    Direction.E: Direction.W,
    Direction.W: Direction.E,
    Direction.NE: Direction.SW,
    Direction.SW: Direction.NE,
    Direction.NW: Direction.SE,
    Direction.SE: Direction.NW,
    Direction.INTER: Direction.INTER,
}

_H = np.sqrt(3.0) / 2.0
# image-plane unit vectors (x to the right, y down the rows)
UNIT_VECTORS = np.array(
    [
        [1.0, 0.0],  # E
        [-1.0, 0.0],  # W
        [0.5, -_H],  # NE
        [-0.5, -_H],  # NW
        [0.5, _H],  # SE
        [-0.5, _H],  # SW
        [0.0, 0.0],  # INTER
    ]
)


class NodeKind(enum.IntEnum):
    GRID = 0
    SOURCE = 1
    GROUND = 2


class ElementCounts(NamedTuple):
    nodes: int
    fuses: int
    resistors: int
    sources: int


class Neighbor(NamedTuple):
    node: int
    direction: Direction
    unit: tuple


def hex_neighbor(row: int, col: int, direction: Direction) -> tuple[int, int]:
    """Lattice position of the neighbour of (row, col) in ``direction``."""
    odd = row & 1
    if direction == Direction.E:
        return row, col + 1
    if direction == Direction.W:
        return row, col - 1
    dr = -1 if direction in (Direction.NE, Direction.NW) else 1
    if direction in (Direction.NE, Direction.SE):
        return row + dr, col + odd
    return row + dr, col - 1 + odd


def intra_fuse_count(rows: int, cols: int) -> int:
    return rows * (cols - 1) + (rows - 1) * (2 * cols - 1)


def closed_form_counts(rows: int, cols: int, layers: int) -> ElementCounts:
    pixels = rows * cols
    fuses = layers * intra_fuse_count(rows, cols) + (pixels if layers == 2 else 0)
    return ElementCounts(2 * layers * pixels, fuses, layers * pixels, layers * pixels)


@dataclass(frozen=True, eq=False)
class GridTopology:
    rows: int
    cols: int
    layers: int
    window: Window
    # node table
    node_kind: np.ndarray
    node_layer: np.ndarray
    node_row: np.ndarray
    node_col: np.ndarray
    # fuses; device arrays have shape (n_fuses, 2): column 0 is device a
    fuse_a: np.ndarray
    fuse_b: np.ndarray
    fuse_dir: np.ndarray
    r_on: np.ndarray
    r_off: np.ndarray
    k: np.ndarray
    x0: np.ndarray
    # source + series resistor branches
    res_source: np.ndarray
    res_grid: np.ndarray
    r_series: np.ndarray
    channel: np.ndarray  # flat index into a (layers, rows, cols) stimulus
    ground_ties: np.ndarray  # grid nodes tied straight to ground

    @property
    def n_grid(self) -> int:
        return self.layers * self.rows * self.cols

    @property
    def n_fuses(self) -> int:
        return int(self.fuse_a.size)

    @property
    def n_devices(self) -> int:
        return 2 * self.n_fuses

    @property
    def ground(self) -> int:
        return int(self.node_kind.size - 1)

    def grid_node(self, layer: int, row: int, col: int) -> int:
        if not (1 <= layer <= self.layers and 0 <= row < self.rows and 0 <= col < self.cols):
            raise IndexError(f"no grid node at layer={layer} row={row} col={col}")
        return (layer - 1) * self.rows * self.cols + row * self.cols + col

    def intra_mask(self) -> np.ndarray:
        return self.fuse_dir != Direction.INTER

    def inter_fuses(self) -> np.ndarray:
        """Inter-layer fuse index per pixel, shape (rows, cols)."""
        idx = np.flatnonzero(self.fuse_dir == Direction.INTER)
        if idx.size == 0:
            raise ValueError("topology has no inter-layer fuses")
        order = np.argsort(self.fuse_a[idx])
        return idx[order].reshape(self.rows, self.cols)

    def fuse(self, index: int) -> Fuse:
        a = DeviceState(float(self.x0[index, 0]), self._params(index, 0))
        b = DeviceState(float(self.x0[index, 1]), self._params(index, 1))
        return Fuse(a, b)

    def _params(self, f, d) -> DeviceParams:
        return DeviceParams(
            float(self.r_on[f, d]), float(self.r_off[f, d]), float(self.k[f, d]), self.window
        )

    def incidence(self, layer: int = 1):
        """Intra-layer fuses around each pixel of ``layer``.

        Returns ``(fuse, sign, direction)`` arrays of shape (rows, cols, 6),
        indexed by the direction seen from the pixel.  Missing neighbours
        hold fuse -1.  ``sign`` is +1 where the pixel is the fuse's node a.
        """
        shape = (self.rows * self.cols, 6)
        fuse = np.full(shape, -1, dtype=np.int64)
        sign = np.zeros(shape, dtype=np.int8)
        base = (layer - 1) * self.rows * self.cols
        intra = np.flatnonzero(self.intra_mask())
        a = self.fuse_a[intra] - base
        b = self.fuse_b[intra] - base
        d = self.fuse_dir[intra].astype(np.int64)
        sel = (a >= 0) & (a < shape[0])
        opp = np.array([OPPOSITE[Direction(v)] for v in range(6)], dtype=np.int64)
        fuse[a[sel], d[sel]] = intra[sel]
        sign[a[sel], d[sel]] = 1
        fuse[b[sel], opp[d[sel]]] = intra[sel]
        sign[b[sel], opp[d[sel]]] = -1
        r, c = self.rows, self.cols
        return fuse.reshape(r, c, 6), sign.reshape(r, c, 6), np.broadcast_to(np.arange(6), (r, c, 6))

    def with_devices(self, r_on, r_off, k, x0) -> "GridTopology":
        return replace(self, r_on=r_on, r_off=r_off, k=k, x0=x0)

    def to_netlist(self) -> str:
        """Deterministic text netlist, one element per line."""
        out = io.StringIO()
        out.write(f"* memgrid rows={self.rows} cols={self.cols} layers={self.layers} window={self.window!r}\n")
        kinds = {0: "grid", 1: "source", 2: "ground"}
        for n in range(self.node_kind.size):
            out.write(
                f"N{n} {kinds[int(self.node_kind[n])]} {self.node_layer[n]} {self.node_row[n]} {self.node_col[n]}\n"
            )
        for f in range(self.n_fuses):
            dev = " ".join(
                f"{self.r_on[f, d]:.6g} {self.r_off[f, d]:.6g} {self.k[f, d]:.6g} {self.x0[f, d]:.17g}"
                for d in (0, 1)
            )
            out.write(f"F{f} N{self.fuse_a[f]} N{self.fuse_b[f]} {Direction(int(self.fuse_dir[f])).name} {dev}\n")
        for r in range(self.res_source.size):
            out.write(f"R{r} N{self.res_source[r]} N{self.res_grid[r]} {self.r_series[r]:.6g}\n")
        for r in range(self.res_source.size):
            lyr, row, col = np.unravel_index(self.channel[r], (self.layers, self.rows, self.cols))
            out.write(f"V{r} N{self.res_source[r]} N{self.ground} ch={lyr + 1},{row},{col}\n")
        for g in self.ground_ties:
            out.write(f"G N{g} N{self.ground}\n")
        return out.getvalue()


def _lattice_fuses(rows, cols, offset):
    """Intra-layer fuses of one layer as (a, b, direction) arrays."""
    a, b, d = [], [], []
    for r in range(rows):
        for c in range(cols):
            here = offset + r * cols + c
            for direction in (Direction.E, Direction.SE, Direction.SW):
                rr, cc = hex_neighbor(r, c, direction)
                if 0 <= rr < rows and 0 <= cc < cols:
                    a.append(here)
                    b.append(offset + rr * cols + cc)
                    d.append(direction)
    return a, b, d


def _assemble(rows, cols, layers, params, r_init, r_series, source_mask, ground_mask):
    if rows < 2 or cols < 2:
        raise ValueError(f"grid must be at least 2x2, got {rows}x{cols}")
    if r_series <= 0:
        raise ValueError("series resistance must be positive")
    pixels = rows * cols
    n_grid = layers * pixels

    fa, fb, fd = [], [], []
    for layer in range(layers):
        a, b, d = _lattice_fuses(rows, cols, layer * pixels)
        fa += a
        fb += b
        fd += d
    if layers == 2:
        fa += list(range(pixels))
        fb += list(range(pixels, 2 * pixels))
        fd += [Direction.INTER] * pixels

    if source_mask is None:
        source_mask = np.ones((layers, rows, cols), dtype=bool)
    source_mask = np.broadcast_to(np.asarray(source_mask, dtype=bool), (layers, rows, cols))
    channels = np.flatnonzero(source_mask.ravel())
    n_src = channels.size

    kind = np.concatenate(
        [np.zeros(n_grid, np.int8), np.ones(n_src, np.int8), np.array([NodeKind.GROUND], np.int8)]
    )
    lyr, row, col = np.unravel_index(np.arange(n_grid), (layers, rows, cols))
    s_lyr, s_row, s_col = np.unravel_index(channels, (layers, rows, cols))
    node_layer = np.concatenate([lyr + 1, s_lyr + 1, [0]])
    node_row = np.concatenate([row, s_row, [-1]])
    node_col = np.concatenate([col, s_col, [-1]])

    n_f = len(fa)
    x_init = float(state_for_resistance(r_init, params.r_on, params.r_off))
    ground_ties = (
        np.flatnonzero(np.broadcast_to(np.asarray(ground_mask, bool), (layers, rows, cols)).ravel())
        if ground_mask is not None
        else np.zeros(0, dtype=np.int64)
    )
    if np.intersect1d(ground_ties, channels).size:
        raise ValueError("a pixel cannot be both source-biased and tied to ground")

    return GridTopology(
        rows=rows,
        cols=cols,
        layers=layers,
        window=params.window,
        node_kind=kind,
        node_layer=node_layer.astype(np.int64),
        node_row=node_row.astype(np.int64),
        node_col=node_col.astype(np.int64),
        fuse_a=np.asarray(fa, dtype=np.int64),
        fuse_b=np.asarray(fb, dtype=np.int64),
        fuse_dir=np.asarray(fd, dtype=np.int8),
        r_on=np.full((n_f, 2), params.r_on),
        r_off=np.full((n_f, 2), params.r_off),
        k=np.full((n_f, 2), params.k),
        x0=np.full((n_f, 2), x_init),
        res_source=np.arange(n_grid, n_grid + n_src, dtype=np.int64),
        res_grid=channels.astype(np.int64),
        r_series=np.full(n_src, float(r_series)),
        channel=channels.astype(np.int64),
        ground_ties=ground_ties.astype(np.int64),
    )


def build_hex_layer(
    rows: int,
    cols: int,
    params: DeviceParams | None = None,
    r_series: float = 1000.0,
    r_init: float = 200.0,
    source_mask=None,
    ground_mask=None,
) -> GridTopology:
    """Single hexagonal layer with one series-resistor source per pixel.

    ``source_mask`` restricts which pixels get a source and ``ground_mask``
    ties pixels straight to ground; the remaining pixels float.
    """
    return _assemble(rows, cols, 1, params or DeviceParams(), r_init, r_series, source_mask, ground_mask)


def build_double_layer(
    rows: int,
    cols: int,
    params: DeviceParams | None = None,
    r_series: float = 1000.0,
    r_init: float = 200.0,
) -> GridTopology:
    """Two hexagonal layers joined pixel-by-pixel by inter-layer fuses.

    Device a of each inter-layer fuse (cM1) faces layer 1, device b (cM2)
    faces layer 2.
    """
    return _assemble(rows, cols, 2, params or DeviceParams(), r_init, r_series, None, None)


def neighbors(topology: GridTopology, node: int) -> list[Neighbor]:
    if not 0 <= node < topology.n_grid:
        raise ValueError(f"node {node} is not a grid node")
    layer = int(topology.node_layer[node])
    row, col = int(topology.node_row[node]), int(topology.node_col[node])
    out = []
    for direction in Direction:
        if direction == Direction.INTER:
            continue
        rr, cc = hex_neighbor(row, col, direction)
        if 0 <= rr < topology.rows and 0 <= cc < topology.cols:
            out.append(
                Neighbor(
                    topology.grid_node(layer, rr, cc),
                    direction,
                    tuple(float(u) for u in UNIT_VECTORS[direction]),
                )
            )
    return out


def count_elements(topology: GridTopology) -> ElementCounts:
    n_src = int(topology.res_source.size)
    return ElementCounts(topology.n_grid + n_src, topology.n_fuses, n_src, n_src)


@dataclass(frozen=True)
class FaultSpec:
    fraction: float
    seed: int
    r_on_choices: tuple = tuple(range(50, 101, 10))
    r_off_choices: tuple = tuple(range(10000, 20001, 500))
    r_init_multipliers: tuple = tuple(range(2, 21))

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"fault fraction must lie in [0, 1], got {self.fraction}")


def inject_faults(topology: GridTopology, spec: FaultSpec) -> GridTopology:
    """Re-initialise a seeded random subset of devices.

    ``round(fraction * n_devices)`` devices are drawn without replacement and
    get an independent R_on, R_off and an R_init that is a multiple of the
    new R_on.  ``k`` is left unchanged.  Graph structure is never touched.
    """
    n = topology.n_devices
    count = int(np.floor(spec.fraction * n + 0.5))
    if count == 0:
        return topology
    rng = np.random.default_rng(spec.seed)
    picked = rng.choice(n, size=count, replace=False)
    r_on = rng.choice(np.asarray(spec.r_on_choices, dtype=float), size=count)
    r_off = rng.choice(np.asarray(spec.r_off_choices, dtype=float), size=count)
    r_init = r_on * rng.choice(np.asarray(spec.r_init_multipliers), size=count)

    new_on = topology.r_on.copy().ravel()
    new_off = topology.r_off.copy().ravel()
    new_x0 = topology.x0.copy().ravel()
    new_on[picked] = r_on
    new_off[picked] = r_off
    new_x0[picked] = (r_off - r_init) / (r_off - r_on)
    shape = topology.r_on.shape
    return topology.with_devices(
        new_on.reshape(shape), new_off.reshape(shape), topology.k.copy(), new_x0.reshape(shape)
    )
