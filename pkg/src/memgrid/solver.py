"""Time-stepping of memristive grids.

Each step freezes all memristances, solves the purely resistive network by
nodal analysis (source + series resistor branches become Norton current
injections), derives fuse currents and advances every device state by one
explicit Euler step.  Voltages of the previous step warm-start the
Jacobi-preconditioned conjugate-gradient solve.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .device import euler_update, memristance_x
from .stimulus import Stimulus
from .topology import GridTopology

log = logging.getLogger(__name__)

DEFAULT_DT = 1e-4


class SolverError(RuntimeError):
    pass


class SingularCircuitError(SolverError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class LinearSystem:
    """Nodal equations ``G v = i`` over the non-ground grid nodes."""

    matrix: sp.csr_matrix
    injection: np.ndarray
    nodes: np.ndarray  # grid-node id of each unknown


def pcg(A, b, x0=None, tol=1e-12, atol=1e-18, maxiter=None):
    """Jacobi-preconditioned conjugate gradients.

    Stops when ``max|b - A x| <= tol * max|b|`` (or ``<= atol`` for b = 0).
    Returns ``(x, iterations, relative residual)``.
    """
    n = b.size
    maxiter = 10 * n if maxiter is None else maxiter
    bnorm = float(np.max(np.abs(b), initial=0.0))
    goal = max(tol * bnorm, atol)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    inv_d = 1.0 / A.diagonal()
    r = b - A @ x
    res = float(np.max(np.abs(r), initial=0.0))
    it = 0
    while res > goal:
        z = inv_d * r
        p = z.copy()
        rz = float(r @ z)
        while it < maxiter:
            it += 1
            q = A @ p
            alpha = rz / float(p @ q)
            x += alpha * p
            r -= alpha * q
            if np.max(np.abs(r)) <= goal:
                break
            z = inv_d * r
            rz_new = float(r @ z)
            p *= rz_new / rz
            p += z
            rz = rz_new
        # guard against drift of the recursive residual
        r = b - A @ x
        res = float(np.max(np.abs(r), initial=0.0))
        if it >= maxiter and res > goal:
            raise ConvergenceError(f"CG did not converge in {maxiter} iterations", res / (bnorm or 1.0))
    return x, it, res / (bnorm or 1.0)


def solve_node_voltages(system: LinearSystem, x0=None, tol=1e-12) -> np.ndarray:
    v, _, _ = pcg(system.matrix, system.injection, x0=x0, tol=tol)
    return v


class _Assembler:
    """Precomputed sparsity pattern: only fuse conductances change per step."""

    def __init__(self, topo: GridTopology):
        n_grid = topo.n_grid
        grounded = np.zeros(n_grid, dtype=bool)
        grounded[topo.ground_ties] = True
        self.unknown = np.flatnonzero(~grounded)
        index = np.full(n_grid, -1, dtype=np.int64)
        index[self.unknown] = np.arange(self.unknown.size)
        self.index = index
        n = self.unknown.size

        ua, ub = index[topo.fuse_a], index[topo.fuse_b]
        f = np.arange(topo.n_fuses)
        rows, cols, sign, fuse = [], [], [], []
        for r_, c_, s_, m in (
            (ua, ua, 1.0, ua >= 0),
            (ub, ub, 1.0, ub >= 0),
            (ua, ub, -1.0, (ua >= 0) & (ub >= 0)),
            (ub, ua, -1.0, (ua >= 0) & (ub >= 0)),
        ):
            rows.append(r_[m])
            cols.append(c_[m])
            sign.append(np.full(m.sum(), s_))
            fuse.append(f[m])
        ug = index[topo.res_grid]
        keep = ug >= 0
        rows.append(ug[keep])
        cols.append(ug[keep])
        const = np.concatenate([np.zeros(sum(s.size for s in sign)), 1.0 / topo.r_series[keep]])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        keys = rows * n + cols
        uniq, slot = np.unique(keys, return_inverse=True)
        self.slot = slot
        self.n_fuse_entries = sum(s.size for s in sign)
        self.sign = np.concatenate(sign)
        self.fuse = np.concatenate(fuse)
        self.const = np.bincount(slot, weights=const, minlength=uniq.size)
        self.indices = (uniq % n).astype(np.int32)
        counts = np.bincount(uniq // n, minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.n = n
        self.res_unknown = ug[keep]
        self.res_channel = topo.channel[keep]
        self.res_g = 1.0 / topo.r_series[keep]
        self._check_grounded(topo, ua, ub, grounded)

    def _check_grounded(self, topo, ua, ub, grounded):
        if self.n == 0:
            return
        both = (ua >= 0) & (ub >= 0)
        adj = sp.coo_matrix((np.ones(both.sum()), (ua[both], ub[both])), shape=(self.n, self.n))
        ncomp, label = connected_components(adj, directed=False)
        anchored = np.zeros(ncomp, dtype=bool)
        anchored[label[self.res_unknown]] = True
        touches_ground = (ua >= 0) & grounded[topo.fuse_b] | (ub >= 0) & grounded[topo.fuse_a]
        anchored[label[np.where(ua >= 0, ua, ub)[touches_ground]]] = True
        if not anchored.all():
            lonely = self.unknown[np.flatnonzero(~anchored[label])]
            raise SingularCircuitError(
                f"{lonely.size} grid nodes have no path to a source or ground (first: {lonely[0]})"
            )

    def matrix(self, g_fuse: np.ndarray) -> sp.csr_matrix:
        w = self.sign * g_fuse[self.fuse]
        data = self.const + np.bincount(self.slot[: self.n_fuse_entries], weights=w, minlength=self.const.size)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def injection(self, channel_volts: np.ndarray) -> np.ndarray:
        return np.bincount(
            self.res_unknown, weights=channel_volts[self.res_channel] * self.res_g, minlength=self.n
        )


@dataclass(eq=False)
class SimulationTrace:
    """Sampled run history.

    ``m_a`` and ``m_b`` hold the memristance of each fuse's two devices,
    shape (samples, fuses); ``voltages`` holds all grid-node voltages.
    """

    topology: GridTopology
    times: np.ndarray
    m_a: np.ndarray
    m_b: np.ndarray
    voltages: np.ndarray
    frame_period: float
    dt: float
    kcl: np.ndarray | None = None  # worst relative KCL residual per sample
    final_state: np.ndarray | None = None

    @property
    def memristance(self) -> np.ndarray:
        return self.m_a + self.m_b

    def _diff(self, m):
        out = np.full_like(m, np.nan)
        out[1:] = np.diff(m, axis=0) / np.diff(self.times)[:, None]
        return out

    @property
    def rate(self) -> np.ndarray:
        """Backward-difference dM/dt of the fuse memristance (NaN at sample 0)."""
        return self._diff(self.memristance)

    @property
    def rate_a(self) -> np.ndarray:
        return self._diff(self.m_a)

    @property
    def rate_b(self) -> np.ndarray:
        return self._diff(self.m_b)

    @property
    def activity(self) -> np.ndarray:
        """|dM_a/dt| + |dM_b/dt| per fuse: first order in the fuse current."""
        return np.abs(self.rate_a) + np.abs(self.rate_b)

    def _diff_at(self, m, s):
        if s < 1:
            raise ValueError("rates are defined from the second sample onward")
        return (m[s] - m[s - 1]) / (self.times[s] - self.times[s - 1])

    def rate_at(self, s: int) -> np.ndarray:
        return self._diff_at(self.m_a, s) + self._diff_at(self.m_b, s)

    def device_rates_at(self, s: int) -> tuple[np.ndarray, np.ndarray]:
        return self._diff_at(self.m_a, s), self._diff_at(self.m_b, s)

    def activity_at(self, s: int) -> np.ndarray:
        ra, rb = self.device_rates_at(s)
        return np.abs(ra) + np.abs(rb)

    def sample_index(self, t: float) -> int:
        if not self.times[0] - 1e-12 <= t <= self.times[-1] + 1e-12:
            raise ValueError(f"t={t} outside trace [{self.times[0]}, {self.times[-1]}]")
        return int(np.argmin(np.abs(self.times - t)))

    def frame_sample(self, frame: int) -> int:
        """Last sample whose backward difference lies inside ``frame`` (1-based)."""
        end = frame * self.frame_period
        s = int(np.searchsorted(self.times, end + 1e-12, side="right") - 1)
        if s < 1 or self.times[s - 1] < (frame - 1) * self.frame_period - 1e-12:
            raise ValueError(f"frame {frame} is not covered by two samples")
        return s

    @property
    def n_frames(self) -> int:
        return int(round(self.times[-1] / self.frame_period))

    def frame_samples(self) -> list[int]:
        return [self.frame_sample(n) for n in range(1, self.n_frames + 1)]

    def write_csv(self, path, samples=None) -> None:
        """Long-format listing; ``samples`` restricts the rows to those sample indices."""
        idx = np.arange(self.times.size) if samples is None else np.asarray(samples, dtype=int)
        rate = self.rate
        mem = self.memristance
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "fuse", "memristance", "rate"])
            for s in idx:
                t = self.times[s]
                for f in range(mem.shape[1]):
                    w.writerow([f"{t:.9g}", f, repr(float(mem[s, f])), repr(float(rate[s, f]))])

    def write_binary(self, path, samples=None) -> None:
        write_trace_binary(self, path, samples)


# Binary trace layout (little-endian):
#   header  : 8s magic b"MGTRACE1", u32 samples, u32 fuses
#   records : samples*fuses x (f64 time, u32 fuse, f64 memristance, f64 rate)
#             ordered by sample then fuse, 28 bytes each, rate NaN at sample 0
TRACE_MAGIC = b"MGTRACE1"
TRACE_RECORD = np.dtype([("time", "<f8"), ("fuse", "<u4"), ("memristance", "<f8"), ("rate", "<f8")])


def write_trace_binary(trace: SimulationTrace, path, samples=None) -> None:
    idx = np.arange(trace.times.size) if samples is None else np.asarray(samples, dtype=int)
    s, f = idx.size, trace.m_a.shape[1]
    rec = np.empty(s * f, dtype=TRACE_RECORD)
    rec["time"] = np.repeat(trace.times[idx], f)
    rec["fuse"] = np.tile(np.arange(f, dtype=np.uint32), s)
    rec["memristance"] = trace.memristance[idx].ravel()
    rec["rate"] = trace.rate[idx].ravel()
    with open(path, "wb") as fh:
        fh.write(TRACE_MAGIC)
        fh.write(np.array([s, f], dtype="<u4").tobytes())
        fh.write(rec.tobytes())


def read_trace_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(8) != TRACE_MAGIC:
            raise ValueError(f"{path}: not a memgrid binary trace")
        s, f = np.frombuffer(fh.read(8), dtype="<u4")
        rec = np.frombuffer(fh.read(), dtype=TRACE_RECORD)
    if rec.size != int(s) * int(f):
        raise ValueError(f"{path}: expected {int(s) * int(f)} records, found {rec.size}")
    return rec


class Simulation:
    """Mutable simulation state for one topology under one stimulus."""

    def __init__(self, topology: GridTopology, stimulus: Stimulus, tol: float = 1e-12):
        if topology.channel.size and topology.channel.max() >= stimulus.n_channels:
            raise ValueError("stimulus has fewer channels than the topology references")
        self.topology = topology
        self.stimulus = stimulus
        self.tol = tol
        self.asm = _Assembler(topology)
        self.x = topology.x0.astype(float).copy()
        self.t = 0.0
        self.steps = 0
        self.cg_iterations = 0
        self._v = np.zeros(self.asm.n)
        self._drive_sign = np.array([-1.0, 1.0])

    def memristances(self) -> np.ndarray:
        tp = self.topology
        return memristance_x(self.x, tp.r_on, tp.r_off)

    def fuse_resistance(self) -> np.ndarray:
        return self.memristances().sum(axis=1)

    def assemble(self, t: float, resistances=None) -> LinearSystem:
        r = self.fuse_resistance() if resistances is None else resistances
        return LinearSystem(self.asm.matrix(1.0 / r), self.asm.injection(self.stimulus.at(t)), self.asm.unknown)

    def solve(self, t: float, resistances=None) -> np.ndarray:
        """Grid-node voltages (grounded nodes at 0) at time ``t`` for the current states."""
        system = self.assemble(t, resistances)
        v, it, _ = pcg(system.matrix, system.injection, x0=self._v, tol=self.tol)
        self.cg_iterations += it
        self._v = v
        full = np.zeros(self.topology.n_grid)
        full[self.asm.unknown] = v
        return full

    def step(self, dt: float) -> np.ndarray:
        """Advance by ``dt``; returns the voltages used for the step."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        t_mid = self.t + 0.5 * dt
        r = self.fuse_resistance()
        v = self.solve(t_mid, r)
        tp = self.topology
        i = (v[tp.fuse_a] - v[tp.fuse_b]) / r
        # current flowing toward the node a device faces raises its x
        drive = i[:, None] * self._drive_sign
        self.x = euler_update(self.x, drive, tp.k, tp.window, dt)
        self.last_solve = (t_mid, v, r)
        self.t += dt
        self.steps += 1
        return v

    def kcl(self) -> float:
        """KCL residual of the most recent solve (see :func:`kcl_residual`)."""
        t, v, r = self.last_solve
        return kcl_residual(self.topology, v, r, self.stimulus.at(t))


def branch_currents(voltages: np.ndarray, topology: GridTopology, resistances: np.ndarray) -> np.ndarray:
    """Signed a->b current of every fuse."""
    return (voltages[topology.fuse_a] - voltages[topology.fuse_b]) / resistances


def run(
    topology: GridTopology,
    stimulus: Stimulus,
    dt: float = DEFAULT_DT,
    sample_every: float | None = None,
    duration: float | None = None,
    tol: float = 1e-12,
    check_kcl: bool = True,
) -> SimulationTrace:
    """Simulate over the stimulus duration, sampling every ``sample_every`` seconds."""
    sample_every = 10 * dt if sample_every is None else sample_every
    if sample_every < dt * (1 - 1e-9):
        raise ValueError("sample_every must be >= dt")
    duration = stimulus.duration if duration is None else duration
    stride = max(1, int(round(sample_every / dt)))
    n_steps = int(math.ceil(duration / dt - 1e-9))
    n_samples = n_steps // stride + 1

    sim = Simulation(topology, stimulus, tol=tol)
    F = topology.n_fuses
    times = np.zeros(n_samples)
    m_a = np.empty((n_samples, F))
    m_b = np.empty((n_samples, F))
    volts = np.empty((n_samples, topology.n_grid))
    kcl = np.zeros(n_samples)

    m = sim.memristances()
    m_a[0], m_b[0] = m[:, 0], m[:, 1]
    volts[0] = sim.solve(0.5 * dt)
    s = 1
    for n in range(1, n_steps + 1):
        v = sim.step(dt)
        if n % stride == 0 and s < n_samples:
            times[s] = n * dt
            m = sim.memristances()
            m_a[s], m_b[s] = m[:, 0], m[:, 1]
            volts[s] = v
            if check_kcl:
                kcl[s] = sim.kcl()
            s += 1
    log.debug("run: %d steps, %d CG iterations", n_steps, sim.cg_iterations)
    return SimulationTrace(topology, times, m_a, m_b, volts, stimulus.frame_period, dt, kcl, sim.x.copy())


def kcl_residual(topology: GridTopology, voltages: np.ndarray, resistances: np.ndarray, source_volts):
    """Worst net current at any solved grid node, relative to the largest branch current.

    ``resistances`` are fuse resistances and ``source_volts`` the flat
    channel voltages used for the solve.
    """
    i_f = (voltages[topology.fuse_a] - voltages[topology.fuse_b]) / resistances
    i_r = (np.asarray(source_volts)[topology.channel] - voltages[topology.res_grid]) / topology.r_series
    n = topology.n_grid
    net = (
        np.bincount(topology.fuse_b, weights=i_f, minlength=n)
        - np.bincount(topology.fuse_a, weights=i_f, minlength=n)
        + np.bincount(topology.res_grid, weights=i_r, minlength=n)
    )
    net[topology.ground_ties] = 0.0
    largest = max(np.max(np.abs(i_f), initial=0.0), np.max(np.abs(i_r), initial=0.0))
    worst = float(np.max(np.abs(net), initial=0.0))
    if largest == 0.0:
        return worst
    return worst / largest
