import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from memgrid.detection import (
    AdaptiveThreshold,
    EdgeMap,
    Polarity,
    Transient,
    TransientMap,
    band_thickness_speed,
    edge_map_rate_threshold,
    edge_map_state_threshold,
    f1_score,
    map_to_image,
    mismatch_rate,
    object_intensity,
    outline_truth,
    split_on_off,
    transient_raw,
    write_map_csv,
)
from memgrid.solver import run
from memgrid.stimulus import FrameSequence, build_stimulus, constant_stimulus
from memgrid.topology import build_double_layer, build_hex_layer

A, B = Transient.CLASS_A, Transient.CLASS_B


def test_outline_truth_single_pixel():
    img = np.full((5, 5), 200, np.uint8)
    img[2, 2] = 0
    t = outline_truth(img)
    assert t[2, 2] and t.sum() == 1
    assert outline_truth(img, min_count=1).sum() == 7


def test_f1_and_mismatch():
    a = np.array([[1, 1, 0, 0]], bool)
    b = np.array([[1, 0, 1, 0]], bool)
    assert f1_score(a, b) == pytest.approx(0.5)
    assert f1_score(np.zeros((2, 2), bool), np.zeros((2, 2), bool)) == 1.0
    assert mismatch_rate(EdgeMap(a, 0.0), EdgeMap(b, 0.0)) == pytest.approx(0.5)
    assert mismatch_rate([a, a], [a, b]) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        mismatch_rate(a, np.zeros((2, 2), bool))


@given(arrays(bool, (4, 5)), arrays(bool, (4, 5)))
def test_metric_properties(a, b):
    assert mismatch_rate(a, b) == mismatch_rate(b, a)
    assert 0.0 <= f1_score(a, b) <= 1.0
    assert mismatch_rate(a, a) == 0.0


def test_adaptive_threshold():
    rule = AdaptiveThreshold()
    v = np.r_[np.zeros(98), 10.0, 10.0]
    assert rule(v) == pytest.approx(0.6 * np.percentile(v, 99))
    assert rule(np.zeros(10)) == 1e-3
    assert rule(np.full(10, 4.0)) == pytest.approx(20.0)


def test_band_thickness():
    m = np.zeros((5, 10), np.int8)
    m[1:4, 3:5] = Transient.APPEARING
    m[1:4, 0:1] = Transient.DISAPPEARING
    tmap = TransientMap(m, Polarity.OFF)
    assert band_thickness_speed(tmap) == 2.0
    assert band_thickness_speed(tmap, "vertical") == 3.0
    with pytest.raises(ValueError):
        band_thickness_speed(TransientMap(np.zeros((3, 3), np.int8), Polarity.OFF))


def test_split_on_off_rules():
    raw = TransientMap(np.array([[A, B, A, B]], np.int8), Polarity.RAW)
    on, off = split_on_off(raw, np.array([[0, 0, 255, 255]]))
    assert off.classes.tolist() == [[Transient.APPEARING, Transient.DISAPPEARING, 0, 0]]
    assert on.classes.tolist() == [[0, 0, Transient.DISAPPEARING, Transient.APPEARING]]


def test_object_intensity_picks_the_mover():
    prev = np.full((5, 9), 200)
    cur = prev.copy()
    prev[2, 2] = 10
    cur[2, 3] = 10
    obj = object_intensity(prev, cur)
    assert obj[2, 2] == 10 and obj[2, 3] == 10 and obj[0, 0] == 200


def test_map_image_and_csv(tmp_path):
    m = TransientMap(np.array([[0, 1, 2]], np.int8), Polarity.OFF)
    assert map_to_image(m).tolist() == [[255, 0, 128]]
    assert map_to_image(EdgeMap(np.array([[True, False]]), 0.0)).tolist() == [[0, 255]]
    p = tmp_path / "m.csv"
    write_map_csv(m, p)
    assert p.read_text().splitlines() == ["row,col,class", "0,1,appearing", "0,2,disappearing"]


def test_static_uniform_scene_has_no_edges():
    trace = run(build_hex_layer(5, 6), constant_stimulus(np.full((5, 6), 0.03), 0.01))
    assert not edge_map_rate_threshold(trace, t=0.01).mask.any()
    assert not edge_map_state_threshold(trace, t=0.01).mask.any()


def test_rate_statistic_validation():
    trace = run(build_hex_layer(3, 3), constant_stimulus(np.zeros((3, 3)), 0.002))
    with pytest.raises(ValueError):
        edge_map_rate_threshold(trace, t=0.002, statistic="bogus")
    with pytest.raises(ValueError):
        transient_raw(trace, t=0.002)


def test_dark_patch_appearing_is_class_a():
    frames = np.full((2, 6, 6), 255, np.uint8)
    frames[1, 2:4, 2:4] = 0
    trace = run(build_double_layer(6, 6), build_stimulus(FrameSequence(frames), 2))
    raw = transient_raw(trace, frame=2)
    patch = np.zeros((6, 6), bool)
    patch[2:4, 2:4] = True
    assert np.all(raw.classes[patch] == A)
    assert np.all(raw.classes[~patch] == 0)
    on, off = split_on_off(raw, object_intensity(frames[0], frames[1]))
    assert off.count(Transient.APPEARING) == 4 and on.count(Transient.APPEARING) == 0


@given(arrays(bool, (3, 4)), arrays(bool, (3, 4)), arrays(bool, (3, 4)))
def test_mismatch_triangle_inequality(a, b, c):
    assert mismatch_rate(a, c) <= mismatch_rate(a, b) + mismatch_rate(b, c) + 1e-12


def test_complement_maps_mismatch_everywhere():
    a = np.random.default_rng(1).uniform(size=(4, 6)) > 0.5
    assert mismatch_rate(a, ~a) == 1.0


@pytest.fixture(scope="module")
def edge_trace():
    img = np.full((8, 10), 255, np.uint8)
    img[:, :5] = 0
    return run(build_hex_layer(8, 10), build_stimulus(FrameSequence(np.stack([img, img])), 1))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 2e3), st.floats(0.0, 2e3))
def test_rate_edges_shrink_as_threshold_rises(edge_trace, lo, hi):
    lo, hi = sorted((lo, hi))
    a = edge_map_rate_threshold(edge_trace, frame=2, theta_rate=lo).mask
    b = edge_map_rate_threshold(edge_trace, frame=2, theta_rate=hi).mask
    assert not np.any(b & ~a)
