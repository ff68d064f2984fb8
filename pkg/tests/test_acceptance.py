"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) and then
asserts.  Expensive simulations are module-scoped fixtures shared between
criteria; the last test re-checks numerical hygiene on every trace produced.
"""
import json
import time

import numpy as np
import pytest

from memgrid import device as dev
from memgrid.detection import (
    Transient,
    band_thickness_speed,
    edge_map_rate_threshold,
    edge_map_state_threshold,
    f1_score,
    mismatch_rate,
    object_intensity,
    outline_truth,
    split_on_off,
    transient_raw,
)
from memgrid.device import Biolek, DeviceParams, Prodromakis
from memgrid.flow import angular_difference, flow_pass, flow_vectors, horn_schunck, transient_to_sources
from memgrid.pipeline import RunConfig, run_pipeline
from memgrid.solver import run
from memgrid.stimulus import FrameSequence, build_stimulus, scale_brightness, synth_box, synth_sinusoid, synth_two_objects
from memgrid.topology import FaultSpec, build_double_layer, build_hex_layer, count_elements, inject_faults

ROWS, COLS = 17, 30
TRACES = {}


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def edge_maps(trace, n_frames):
    return [edge_map_rate_threshold(trace, frame=n) for n in range(1, n_frames + 1)]


@pytest.fixture(scope="module")
def clip():
    return synth_box(ROWS, COLS)


@pytest.fixture(scope="module")
def single(clip):
    trace, secs = timed(run, build_hex_layer(ROWS, COLS), build_stimulus(clip, 1))
    TRACES["single"] = trace
    return trace, secs


@pytest.fixture(scope="module")
def double(clip):
    out, total = {}, 0.0
    for name, seq in (("black", clip), ("white", clip.complement())):
        trace, secs = timed(run, build_double_layer(ROWS, COLS), build_stimulus(seq, 2))
        TRACES[f"double-{name}"] = trace
        out[name] = (seq, trace)
        total += secs
    return out, total


def test_criterion_01_element_counts(report):
    counts, secs = timed(lambda: count_elements(build_double_layer(70, 80)))
    ok = tuple(counts) == (22400, 38602, 11200, 11200) and secs < 1.0
    report(1, "80x70 double-layer element counts", ok, f"{tuple(counts)} in {secs:.2f}s")
    assert ok


def test_criterion_02_device_laws(report):
    t0 = time.perf_counter()
    p = DeviceParams()
    q = np.linspace(0, dev.charge_limit(p), 102)[1:-1]
    h = dev.charge_limit(p) * 1e-6
    fd = (dev.flux_of_charge(q + h, p) - dev.flux_of_charge(q - h, p)) / (2 * h)
    rel = float(np.max(np.abs(fd - dev.memristance_of_charge(q, p)) / dev.memristance_of_charge(q, p)))
    pinched, shrinking = True, True
    for window in (Prodromakis(), Biolek(1)):
        areas = []
        for f in (1.0, 2.0, 4.0):
            _, v, i, _ = dev.sinusoidal_iv(DeviceParams(window=window), 0.5, 1.0, f)
            pinched &= bool(np.all(np.abs(i[np.abs(v) < 1e-12]) < 1e-12))
            areas.append(dev.loop_area(v, i))
        shrinking &= areas[0] > areas[1] > areas[2]
    secs = time.perf_counter() - t0
    ok = q.size == 100 and rel < 1e-6 and pinched and shrinking and secs < 5
    report(2, "device laws", ok, f"dphi/dq rel err {rel:.1e}, pinched={pinched}, area shrinks={shrinking}, {secs:.1f}s")
    assert ok


def test_criterion_03_moving_edges(report, clip, single):
    trace, secs = single
    rate = edge_maps(trace, len(clip))
    state = [edge_map_state_threshold(trace, frame=n) for n in range(1, len(clip) + 1)]
    f1 = [f1_score(m, outline_truth(clip.frames[n])) for n, m in enumerate(rate)]
    diverge = [mismatch_rate(a, b) for a, b in zip(rate, state)][2:]
    ok = min(f1) >= 0.8 and min(diverge) > 0.05 and secs < 120
    report(3, "rate-rule edges on 17x30 box clip", ok,
           f"F1 min {min(f1):.3f}, state-vs-rate mismatch min {min(diverge):.3f} (frames>=3), {secs:.1f}s")
    assert ok


def _polarity_maps(seq, trace, n):
    raw = transient_raw(trace, frame=n)
    return split_on_off(raw, object_intensity(seq.frames[n - 2], seq.frames[n - 1]))


def test_criterion_04_transient_polarity(report, double):
    runs, secs = double
    seq, trace = runs["black"]
    cseq, ctrace = runs["white"]
    on_empty = off_ok = swapped = True
    for n in range(2, len(seq) + 1):
        on, off = _polarity_maps(seq, trace, n)
        c_on, c_off = _polarity_maps(cseq, ctrace, n)
        on_empty &= not on.support().any()
        appear = off.classes == Transient.APPEARING
        # leading edge: pixels the box covers now but did not cover before
        leading = (seq.frames[n - 1] == 0) & (seq.frames[n - 2] != 0)
        off_ok &= bool(appear.any()) and np.array_equal(appear, leading)
        swapped &= np.array_equal(c_on.classes, off.classes) and not c_off.support().any()
    ok = on_empty and off_ok and swapped and secs < 180
    report(4, "ON/OFF transient polarity", ok,
           f"ON empty={on_empty}, OFF appearing=leading edge {off_ok}, complement swaps={swapped}, {secs:.1f}s")
    assert ok


def test_criterion_05_speed_from_thickness(report, double):
    runs, _ = double
    seq, trace = runs["black"]
    speeds = {n: band_thickness_speed(_polarity_maps(seq, trace, n)[1]) for n in range(2, len(seq) + 1)}
    ok = all(speeds[n] == 2.0 for n in range(2, 6)) and all(speeds[n] == 1.0 for n in range(7, 16))
    report(5, "speed from band thickness", ok,
           f"frames 2-5: {[speeds[n] for n in range(2, 6)]}, frames 7-15: {sorted({speeds[n] for n in range(7, 16)})}")
    assert ok


def test_criterion_06_brightness(report, clip, single):
    trace, _ = single
    dim, secs = timed(run, build_hex_layer(ROWS, COLS), build_stimulus(scale_brightness(clip, 0.5), 1))
    TRACES["half-brightness"] = dim
    m = mismatch_rate(edge_maps(trace, len(clip)), edge_maps(dim, len(clip)))
    ok = m <= 0.10 and secs < 120
    report(6, "half brightness edge maps", ok, f"mean mismatch {m:.4f}, {secs:.1f}s")
    assert ok


def test_criterion_07_faults(report, clip, single):
    trace, _ = single
    base = edge_maps(trace, len(clip))
    t0 = time.perf_counter()
    details, ok = [], True
    for frac in (0.5, 0.8):
        topo = inject_faults(build_hex_layer(ROWS, COLS), FaultSpec(frac, 2024))
        faulty = run(topo, build_stimulus(clip, 1))
        TRACES[f"faults-{frac}"] = faulty
        maps = edge_maps(faulty, len(clip))
        f1 = min(f1_score(m, outline_truth(clip.frames[n])) for n, m in enumerate(maps))
        mis = mismatch_rate(maps, base)
        ok &= f1 >= 0.6 and mis <= 0.15
        details.append(f"{int(frac * 100)}%: F1 min {f1:.3f}, mismatch {mis:.3f}")
    secs = time.perf_counter() - t0
    ok &= secs < 240
    report(7, "fault tolerance (seed 2024)", ok, "; ".join(details) + f", {secs:.1f}s")
    assert ok


def test_criterion_08_flow_direction(report):
    t0 = time.perf_counter()
    seq = synth_two_objects(35, 40)
    trace = run(build_double_layer(35, 40), build_stimulus(seq, 2))
    TRACES["flow-double"] = trace
    on, off = _polarity_maps(seq, trace, 2)
    down, angles = [], []
    hs = horn_schunck(seq.frames[0], seq.frames[1])
    for name, tmap in (("on", on), ("off", off)):
        ftrace = flow_pass(transient_to_sources(tmap))
        TRACES[f"flow-pass-{name}"] = ftrace
        field = flow_vectors(ftrace, tmap.support())
        down.append(field.v[field.mask] > 0)
        angles.append(angular_difference(field, hs))
    secs = time.perf_counter() - t0
    frac = float(np.mean(np.concatenate(down)))
    ang = float(np.mean(np.concatenate(angles)))
    ok = frac >= 0.7 and ang < 45 and secs < 180
    report(8, "flow direction on two objects moving down (40x35)", ok,
           f"{frac:.0%} of {np.concatenate(down).size} vectors point down, mean angle vs oracle {ang:.1f} deg, {secs:.1f}s")
    assert ok


def test_criterion_09_oracle_sanity(report):
    a, b = synth_sinusoid()
    f, secs = timed(horn_schunck, a, b)
    u, v = float(f.u.mean()), float(np.abs(f.v).mean())
    ok = 0.8 <= u <= 1.2 and v < 0.1 and secs < 10
    report(9, "Horn-Schunck on translated sinusoid", ok, f"mean u {u:.3f}, mean |v| {v:.4f}, {secs:.2f}s")
    assert ok


def test_criterion_10_numerical_hygiene(report, tmp_path, single, double):
    kcl = max(float(t.kcl[1:].max()) for t in TRACES.values())
    lo = min(float(t.final_state.min()) for t in TRACES.values())
    hi = max(float(t.final_state.max()) for t in TRACES.values())

    seq = FrameSequence(synth_box(ROWS, COLS).frames[:3])
    a = run(build_hex_layer(ROWS, COLS), build_stimulus(seq, 1), dt=1e-4)
    b = run(build_hex_layer(ROWS, COLS), build_stimulus(seq, 1), dt=5e-5, sample_every=1e-3)
    dt_change = float(np.max(np.abs(a.memristance[-1] - b.memristance[-1]) / b.memristance[-1]))

    hashes = []
    for name in ("a", "b"):
        cfg = RunConfig(scenario="faults", seed=99, frames=3, fault_fractions=(0.8,), out=str(tmp_path / name))
        assert run_pipeline(cfg)[0] == 0
        art = json.loads((tmp_path / name / "manifest.json").read_text())["artifacts"]
        hashes.append({x["path"]: x["sha256"] for x in art if x["path"] != "metrics.json"})
    identical = hashes[0] == hashes[1] and len(hashes[0]) > 0

    ok = kcl < 1e-9 and 0.0 <= lo and hi <= 1.0 and dt_change < 0.01 and identical
    report(10, "numerical hygiene", ok,
           f"KCL max {kcl:.1e} over {len(TRACES)} traces, states in [{lo:.4f}, {hi:.4f}], "
           f"dt-halving change {dt_change:.1e}, seeded artifacts identical={identical}")
    assert ok
