"""Moving-edge detection on a single hexagonal memristive grid.

Run:  python demos/02_moving_edges.py

A black box moves across a white 17x30 frame (2 px/frame, then 1 px/frame
after frame 5).  Every pixel drives one grid node through a series
resistor.  Fuses between nodes at different potentials carry current and
change memristance, so the *rate* of change outlines whatever is
currently moving.  The accumulated change does not forget where the box
used to be, which is why the state rule smears out after a few frames.
"""
import numpy as np

from memgrid import build_hex_layer, build_stimulus, run, synth_box
from memgrid.detection import (
    edge_map_rate_threshold,
    edge_map_state_threshold,
    f1_score,
    mismatch_rate,
    outline_truth,
)


def ascii(mask):
    # odd rows are drawn shifted half a cell, like the lattice
    return "\n".join((" " if r % 2 else "") + " ".join("#" if m else "." for m in row) for r, row in enumerate(mask))


clip = synth_box()
trace = run(build_hex_layer(17, 30), build_stimulus(clip, 1))
print(f"simulated {trace.times[-1]:.2f} s, worst KCL residual {trace.kcl.max():.1e}")

for n in (2, 6, 12):
    rate = edge_map_rate_threshold(trace, frame=n)
    state = edge_map_state_threshold(trace, frame=n)
    print(f"\nframe {n}: rate rule F1 {f1_score(rate, outline_truth(clip.frames[n - 1])):.2f}, "
          f"state rule differs on {mismatch_rate(rate, state):.1%} of pixels")
    print(ascii(rate.mask))

print("\nstate rule, frame 12 (note the trail):")
print(ascii(edge_map_state_threshold(trace, frame=12).mask))
