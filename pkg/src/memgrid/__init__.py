"""Memristive-grid simulation of moving-edge detection, transient detection and optical flow."""
from .detection import (
    AdaptiveThreshold,
    EdgeMap,
    Polarity,
    Transient,
    TransientMap,
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
from .device import Biolek, DeviceParams, DeviceState, Fuse, ModelValidityError, Prodromakis
from .flow import FlowField, flow_vectors, grid_flow, horn_schunck, transient_to_sources
from .solver import ConvergenceError, SimulationTrace, SingularCircuitError, SolverError, run
from .stimulus import FrameSequence, Stimulus, build_stimulus, load_frames, synth_box, synth_two_objects
from .topology import (
    Direction,
    FaultSpec,
    GridTopology,
    build_double_layer,
    build_hex_layer,
    count_elements,
    inject_faults,
    neighbors,
)

__version__ = "0.1.0"
