"""Scenario runners: config in, maps, traces, flow fields and metrics out.

Every scenario writes its artifacts below ``RunConfig.out`` plus two JSON
files.  ``metrics.json`` holds only deterministic content (metrics, config
echo, seed) so that repeated runs are byte-identical.  ``manifest.json`` lists
every artifact with its size and SHA-256 and is the only place wall-clock
timestamps and runtimes appear.
"""
from __future__ import annotations

import configparser
import dataclasses
import datetime as _dt
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import device as dev
from .detection import (
    AdaptiveThreshold,
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
    write_map_pgm,
)
from .flow import angular_difference, grid_flow, horn_schunck, write_flow_csv, write_flow_ppm
from .netpbm import PGMError, numbered_files
from .solver import SolverError, run
from .stimulus import (
    FrameSequence,
    build_stimulus,
    load_frames,
    scale_brightness,
    synth_box,
    synth_sinusoid,
    synth_two_objects,
)
from .topology import FaultSpec, build_double_layer, build_hex_layer, closed_form_counts, count_elements, inject_faults

log = logging.getLogger(__name__)

SCENARIOS = ("edges", "transient", "flow", "faults", "brightness", "hs-oracle", "device-check")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVER = 4
EXIT_COUNTS = 5


class ConfigError(ValueError):
    pass


def _input_exists(prefix) -> bool:
    try:
        return bool(numbered_files(prefix))
    except OSError:
        return False


@dataclass
class RunConfig:
    """Everything a scenario needs.  ``input=None`` selects the synthetic scene."""

    scenario: str = "edges"
    input: str | None = None
    out: str = "memgrid-out"
    seed: int | None = None
    frames: int | None = None
    frame_rate: float = 15.0
    # synthetic scene; rows/cols of None mean the scenario's own default
    rows: int | None = None
    cols: int | None = None
    polarity: str = "black-on-white"
    # device and circuit
    r_on: float = 100.0
    r_off: float = 16000.0
    k: float = 1e4
    window: str = "prodromakis"
    window_p: int = 10
    window_j: float = 1.0
    r_init: float = 200.0
    r_series: float = 1000.0
    dt: float = 1e-4
    sample_every: float | None = None
    tol: float = 1e-12
    # detection
    threshold: float | None = None
    transient_threshold: float | None = None
    min_count: int = 2
    median_factor: float = 5.0
    fraction: float = 0.6
    quantile: float = 99.0
    floor: float = 1e-3
    axis: str = "horizontal"
    # scenario specific
    fault_fractions: tuple = (0.5, 0.8)
    scale: float = 0.5
    hs_lambda: float = 0.1
    hs_iterations: int = 200
    full_scale: bool = False
    # trace export: none | frames | full, in binary | csv | both
    trace: str = "frames"
    trace_format: str = "binary"

    def validate(self) -> "RunConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.input is not None and not _input_exists(self.input):
            raise FileNotFoundError(f"input {self.input!r} matches no PGM frames")
        if self.scenario == "faults" and self.seed is None:
            raise ConfigError("the faults scenario needs a seed")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.sample_every is not None and self.sample_every < self.dt:
            raise ConfigError("sample_every must be at least dt")
        if self.frames is not None and self.frames < 1:
            raise ConfigError("frames must be >= 1")
        if not 0 < self.scale <= 1:
            raise ConfigError("scale must lie in (0, 1]")
        if self.trace not in ("none", "frames", "full") or self.trace_format not in ("binary", "csv", "both"):
            raise ConfigError("trace must be none/frames/full and trace_format binary/csv/both")
        if self.axis not in ("horizontal", "vertical"):
            raise ConfigError("axis must be horizontal or vertical")
        for f in self.fault_fractions:
            if not 0 <= f <= 1:
                raise ConfigError(f"fault fraction {f} outside [0, 1]")
        try:
            self.device_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def device_params(self) -> dev.DeviceParams:
        if self.window == "prodromakis":
            window = dev.Prodromakis(self.window_j, self.window_p)
        elif self.window == "biolek":
            window = dev.Biolek(self.window_p)
        else:
            raise ValueError(f"unknown window {self.window!r}")
        return dev.DeviceParams(self.r_on, self.r_off, self.k, window)

    def threshold_rule(self) -> AdaptiveThreshold:
        return AdaptiveThreshold(self.median_factor, self.fraction, self.quantile, self.floor)

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d["fault_fractions"] = list(self.fault_fractions)
        return d


# INI layout: section -> {key in file: RunConfig field}
_SCHEMA = {
    "run": {"scenario": "scenario", "input": "input", "out": "out", "seed": "seed", "frames": "frames",
            "frame_rate": "frame_rate", "trace": "trace", "trace_format": "trace_format"},
    "scene": {"rows": "rows", "cols": "cols", "polarity": "polarity"},
    "device": {"r_on": "r_on", "r_off": "r_off", "k": "k", "window": "window", "p": "window_p",
               "j": "window_j", "r_init": "r_init"},
    "circuit": {"r_series": "r_series", "dt": "dt", "sample_every": "sample_every", "tol": "tol"},
    "detection": {"threshold": "threshold", "transient_threshold": "transient_threshold",
                  "min_count": "min_count", "median_factor": "median_factor", "fraction": "fraction",
                  "quantile": "quantile", "floor": "floor", "axis": "axis"},
    "faults": {"fractions": "fault_fractions"},
    "brightness": {"scale": "scale"},
    "flow": {"lambda": "hs_lambda", "iterations": "hs_iterations", "full_scale": "full_scale"},
}


def _convert(name: str, raw: str):
    default = next(f for f in dataclasses.fields(RunConfig) if f.name == name).default
    raw = raw.strip()
    if raw.lower() in ("", "none"):
        return None
    try:
        if name == "fault_fractions":
            return tuple(float(x) for x in raw.replace(",", " ").split())
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "yes", "1")
        if name in ("seed", "frames", "rows", "cols", "min_count", "hs_iterations", "window_p"):
            return int(raw)
        if isinstance(default, float) or name in ("sample_every", "threshold", "transient_threshold"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read an INI file (may be None) and apply ``overrides`` (None values are ignored)."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                name = _SCHEMA[section][key]
                value = _convert(name, raw)
                if value is not None:
                    values[name] = value
    for name, value in (overrides or {}).items():
        if value is not None:
            values[name] = value
    return RunConfig(**values).validate()


# -- artifacts ----------------------------------------------------------------------


@dataclass
class Artifacts:
    root: str
    paths: list = field(default_factory=list)

    def path(self, *parts) -> str:
        p = os.path.join(self.root, *parts)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        self.paths.append(p)
        return p

    def manifest(self, extra: dict) -> dict:
        items = []
        for p in sorted(set(self.paths)):
            with open(p, "rb") as fh:
                data = fh.read()
            items.append({"path": os.path.relpath(p, self.root), "bytes": len(data),
                          "sha256": hashlib.sha256(data).hexdigest()})
        return {**extra, "artifacts": items}


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


# -- shared helpers ----------------------------------------------------------------


def _frames(cfg: RunConfig, default) -> FrameSequence:
    seq = load_frames(cfg.input, cfg.frame_rate) if cfg.input else default()
    if cfg.frames is not None:
        if cfg.frames > len(seq):
            raise ConfigError(f"asked for {cfg.frames} frames, input has {len(seq)}")
        seq = FrameSequence(seq.frames[: cfg.frames], seq.frame_rate)
    return seq


def _box_clip(cfg: RunConfig) -> FrameSequence:
    rows, cols = cfg.rows or 17, cfg.cols or 30
    return _frames(cfg, lambda: synth_box(rows, cols, polarity=cfg.polarity, frame_rate=cfg.frame_rate))


def _simulate(cfg: RunConfig, seq: FrameSequence, layers: int, topo=None):
    params = cfg.device_params()
    if topo is None:
        build = build_hex_layer if layers == 1 else build_double_layer
        topo = build(seq.rows, seq.cols, params, cfg.r_series, cfg.r_init)
    return run(topo, build_stimulus(seq, layers), dt=cfg.dt, sample_every=cfg.sample_every, tol=cfg.tol)


def _hygiene(trace) -> dict:
    return {
        "kcl_max": float(trace.kcl.max()) if trace.kcl is not None else None,
        "state_min": float(trace.final_state.min()),
        "state_max": float(trace.final_state.max()),
    }


def _export_trace(cfg: RunConfig, art: Artifacts, trace, name: str = "trace") -> None:
    if cfg.trace == "none":
        return
    samples = None if cfg.trace == "full" else [0] + trace.frame_samples()
    if cfg.trace_format in ("binary", "both"):
        trace.write_binary(art.path(f"{name}.bin"), samples)
    if cfg.trace_format in ("csv", "both"):
        trace.write_csv(art.path(f"{name}.csv"), samples)


def _edge_maps(cfg: RunConfig, trace, n_frames: int):
    rule = cfg.threshold_rule()
    return [
        edge_map_rate_threshold(trace, theta_rate=cfg.threshold, min_count=cfg.min_count, frame=n, rule=rule)
        for n in range(1, n_frames + 1)
    ]


def _write_edge_maps(art: Artifacts, maps, folder: str, stem: str) -> None:
    for n, m in enumerate(maps, start=1):
        write_map_pgm(m, art.path(folder, f"{stem}_{n:04d}.pgm"))


def _f1_list(maps, seq: FrameSequence):
    return [f1_score(m, outline_truth(seq.frames[n])) for n, m in enumerate(maps)]


# -- scenarios ------------------------------------------------------------------------


def scenario_edges(cfg: RunConfig, art: Artifacts) -> dict:
    seq = _box_clip(cfg)
    trace = _simulate(cfg, seq, 1)
    rate = _edge_maps(cfg, trace, len(seq))
    rule = cfg.threshold_rule()
    state = [edge_map_state_threshold(trace, frame=n, rule=rule) for n in range(1, len(seq) + 1)]
    _write_edge_maps(art, rate, "edges", "rate")
    _write_edge_maps(art, state, "edges", "state")
    _export_trace(cfg, art, trace)
    f1 = _f1_list(rate, seq)
    return {
        "frames": len(seq),
        "element_counts": count_elements(trace.topology)._asdict(),
        "f1_rate": f1,
        "f1_rate_min": min(f1),
        "f1_state": _f1_list(state, seq),
        "state_vs_rate_mismatch": [mismatch_rate(a, b) for a, b in zip(rate, state)],
        **_hygiene(trace),
    }


def _transient_maps(cfg: RunConfig, trace, seq: FrameSequence, frame: int):
    raw = transient_raw(trace, theta_transient=cfg.transient_threshold, frame=frame, rule=cfg.threshold_rule())
    judged = object_intensity(seq.frames[frame - 2], seq.frames[frame - 1])
    return split_on_off(raw, judged)


def _speed(tmap, axis):
    return band_thickness_speed(tmap, axis) if tmap.count(Transient.APPEARING) else None


def scenario_transient(cfg: RunConfig, art: Artifacts) -> dict:
    seq = _box_clip(cfg)
    if len(seq) < 2:
        raise ConfigError("transient detection needs at least two frames")
    trace = _simulate(cfg, seq, 2)
    per_frame = []
    for n in range(2, len(seq) + 1):
        on, off = _transient_maps(cfg, trace, seq, n)
        write_map_pgm(on, art.path("transient", f"on_{n:04d}.pgm"))
        write_map_pgm(off, art.path("transient", f"off_{n:04d}.pgm"))
        per_frame.append({
            "frame": n,
            "on_pixels": int(np.count_nonzero(on.classes)),
            "off_pixels": int(np.count_nonzero(off.classes)),
            "on_speed": _speed(on, cfg.axis),
            "off_speed": _speed(off, cfg.axis),
        })
    _export_trace(cfg, art, trace)
    return {
        "frames": len(seq),
        "element_counts": count_elements(trace.topology)._asdict(),
        "per_frame": per_frame,
        **_hygiene(trace),
    }


def scenario_flow(cfg: RunConfig, art: Artifacts) -> dict:
    rows, cols = (70, 80) if cfg.full_scale else (35, 40)
    rows, cols = cfg.rows or rows, cfg.cols or cols
    seq = _frames(cfg, lambda: synth_two_objects(rows, cols, frame_rate=cfg.frame_rate))
    if len(seq) < 2:
        raise ConfigError("flow needs two frames")
    seq = FrameSequence(seq.frames[:2], seq.frame_rate)
    trace = _simulate(cfg, seq, 2)
    on, off = _transient_maps(cfg, trace, seq, 2)
    write_map_pgm(on, art.path("flow", "on.pgm"))
    write_map_pgm(off, art.path("flow", "off.pgm"))
    field = None
    params = cfg.device_params()
    used = []
    for name, tmap in (("on", on), ("off", off)):
        if tmap.count(Transient.APPEARING) and tmap.count(Transient.DISAPPEARING):
            f = grid_flow(tmap, params=params, r_series=cfg.r_series, r_init=cfg.r_init,
                          duration=seq.period, dt=cfg.dt, sample_every=cfg.sample_every)
            field = f if field is None else field.merge(f)
            used.append(name)
    hs = horn_schunck(seq.frames[0], seq.frames[1], cfg.hs_lambda, cfg.hs_iterations)
    write_flow_csv(hs, art.path("flow", "hs.csv"))
    write_flow_ppm(hs, art.path("flow", "hs.ppm"))
    metrics = {"element_counts": count_elements(trace.topology)._asdict(), "polarities": used, **_hygiene(trace)}
    if field is None:
        metrics.update(vectors=0, down_fraction=None, mean_angle_deg=None)
        return metrics
    write_flow_csv(field, art.path("flow", "grid.csv"))
    write_flow_ppm(field, art.path("flow", "grid.ppm"))
    ang = angular_difference(field, hs)
    metrics.update(
        vectors=int(field.mask.sum()),
        down_fraction=float(np.mean(field.v[field.mask] > 0)),
        mean_angle_deg=float(ang.mean()) if ang.size else None,
    )
    return metrics


def scenario_faults(cfg: RunConfig, art: Artifacts) -> dict:
    seq = _box_clip(cfg)
    params = cfg.device_params()
    base_topo = build_hex_layer(seq.rows, seq.cols, params, cfg.r_series, cfg.r_init)
    base = _edge_maps(cfg, _simulate(cfg, seq, 1, base_topo), len(seq))
    _write_edge_maps(art, base, "faults/f000", "rate")
    out = {"seed": cfg.seed, "baseline_f1_min": min(_f1_list(base, seq)), "runs": []}
    for frac in cfg.fault_fractions:
        topo = inject_faults(base_topo, FaultSpec(frac, cfg.seed))
        trace = _simulate(cfg, seq, 1, topo)
        maps = _edge_maps(cfg, trace, len(seq))
        _write_edge_maps(art, maps, f"faults/f{round(frac * 100):03d}", "rate")
        f1 = _f1_list(maps, seq)
        out["runs"].append({
            "fraction": frac,
            "f1": f1,
            "f1_min": min(f1),
            "mismatch_vs_baseline": mismatch_rate(maps, base),
            **_hygiene(trace),
        })
    return out


def scenario_brightness(cfg: RunConfig, art: Artifacts) -> dict:
    seq = _box_clip(cfg)
    full = _edge_maps(cfg, _simulate(cfg, seq, 1), len(seq))
    dim_seq = scale_brightness(seq, cfg.scale)
    trace = _simulate(cfg, dim_seq, 1)
    dim = _edge_maps(cfg, trace, len(seq))
    _write_edge_maps(art, full, "brightness/full", "rate")
    _write_edge_maps(art, dim, "brightness/scaled", "rate")
    per = [mismatch_rate(a, b) for a, b in zip(full, dim)]
    return {"scale": cfg.scale, "mismatch": per, "mean_mismatch": float(np.mean(per)), **_hygiene(trace)}


def scenario_hs_oracle(cfg: RunConfig, art: Artifacts) -> dict:
    if cfg.input:
        seq = _frames(cfg, None)
        a, b = seq.frames[0], seq.frames[1]
    else:
        a, b = synth_sinusoid(cfg.rows or 32, cfg.cols or 32)
    history: list = []
    hs = horn_schunck(a, b, cfg.hs_lambda, cfg.hs_iterations, history=history)
    write_flow_csv(hs, art.path("hs", "flow.csv"))
    write_flow_ppm(hs, art.path("hs", "flow.ppm"))
    with open(art.path("hs", "residuals.csv"), "w") as fh:
        fh.write("iteration,residual\n")
        for n, r in enumerate(history, start=1):
            fh.write(f"{n},{r!r}\n")
    head = np.asarray(history[:50])
    return {
        "mean_u": float(hs.u.mean()),
        "mean_abs_v": float(np.abs(hs.v).mean()),
        "residual_first": history[0],
        "residual_last": history[-1],
        "residual_monotone_first_50": bool(np.all(np.diff(head) <= 0)),
    }


def scenario_device_check(cfg: RunConfig, art: Artifacts) -> dict:
    params = cfg.device_params()
    areas = {}
    pinch = 0.0
    for f in (1.0, 2.0, 4.0):
        t, v, i, x = dev.sinusoidal_iv(params, 0.5, 1.0, f)
        areas[f] = dev.loop_area(v, i)
        zero = np.abs(v) <= 1e-12
        pinch = max(pinch, float(np.max(np.abs(i[zero]), initial=0.0)))
        with open(art.path("device", f"iv_{f:g}hz.csv"), "w") as fh:
            fh.write("time,volts,amps,state\n")
            for row in zip(t, v, i, x):
                fh.write(",".join(repr(float(c)) for c in row) + "\n")
    q = np.linspace(0.0, dev.charge_limit(params), 102)[1:-1]
    h = dev.charge_limit(params) * 1e-6
    fd = (dev.flux_of_charge(q + h, params) - dev.flux_of_charge(q - h, params)) / (2 * h)
    m = dev.memristance_of_charge(q, params)
    rel = float(np.max(np.abs(fd - m) / m))
    with open(art.path("device", "flux_check.csv"), "w") as fh:
        fh.write("charge,finite_difference,memristance\n")
        for row in zip(q, fd, m):
            fh.write(",".join(repr(float(c)) for c in row) + "\n")
    a = [areas[f] for f in sorted(areas)]
    return {
        "loop_area": {f"{f:g}hz": areas[f] for f in sorted(areas)},
        "area_decreasing": bool(all(x > y for x, y in zip(a, a[1:]))),
        "pinch_current_max": pinch,
        "flux_derivative_rel_err_max": rel,
    }


_RUNNERS = {
    "edges": scenario_edges,
    "transient": scenario_transient,
    "flow": scenario_flow,
    "faults": scenario_faults,
    "brightness": scenario_brightness,
    "hs-oracle": scenario_hs_oracle,
    "device-check": scenario_device_check,
}


def run_pipeline(cfg: RunConfig) -> tuple[int, dict]:
    """Run the configured scenario; returns (exit status, manifest or error record)."""
    started = time.perf_counter()
    try:
        cfg.validate()
        os.makedirs(cfg.out, exist_ok=True)
        art = Artifacts(cfg.out)
        metrics = _RUNNERS[cfg.scenario](cfg, art)
        _write_json(art.path("metrics.json"), {"scenario": cfg.scenario, "seed": cfg.seed,
                                               "metrics": metrics, "config": cfg.echo()})
    except ConfigError as exc:
        return _failure(cfg, EXIT_CONFIG, "config", exc)
    except (OSError, PGMError) as exc:
        return _failure(cfg, EXIT_IO, "io", exc)
    except SolverError as exc:
        return _failure(cfg, EXIT_SOLVER, "solver", exc)
    manifest = art.manifest({
        "scenario": cfg.scenario,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "runtime_s": round(time.perf_counter() - started, 3),
    })
    _write_json(os.path.join(cfg.out, "manifest.json"), manifest)
    return EXIT_OK, manifest


def _failure(cfg: RunConfig, code: int, kind: str, exc: Exception) -> tuple[int, dict]:
    record = {"error": kind, "exit_code": code, "message": str(exc), "scenario": cfg.scenario}
    log.error("%s error: %s", kind, exc)
    try:
        if os.path.isdir(cfg.out):
            _write_json(os.path.join(cfg.out, "error.json"), record)
    except OSError:
        pass
    return code, record


def validate_counts(rows: int, cols: int, layers: int = 2) -> tuple[bool, dict]:
    """Compare the closed-form element counts with an enumerated topology."""
    expected = closed_form_counts(rows, cols, layers)
    build = build_hex_layer if layers == 1 else build_double_layer
    built = count_elements(build(rows, cols))
    return expected == built, {"rows": rows, "cols": cols, "layers": layers,
                               "closed_form": expected._asdict(), "constructed": built._asdict()}
