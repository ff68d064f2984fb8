"""Optical flow from transient maps, compared against Horn-Schunck.

Run:  python demos/04_optical_flow.py

Disappearing pixels become +40 mV sources and appearing pixels are tied to
ground on a fresh single layer; the rest float.  Current runs from where
the object was to where it is now, and summing the signed activity of the
six fuses around each moving-edge pixel gives a direction.

Thin bands work best: at 1 px/frame every vector points down.  At 2 px/frame
the outer row of each band also feeds the return current of the floating
part of the grid, and those pixels point sideways or backwards.
"""
import numpy as np

from memgrid import build_double_layer, build_stimulus, run, synth_two_objects
from memgrid.detection import Transient, object_intensity, split_on_off, transient_raw
from memgrid.flow import angular_difference, grid_flow, horn_schunck, write_flow_ppm

ARROWS = ["→", "↘", "↓", "↙", "←", "↖", "↑", "↗"]


def arrow_map(field):
    octant = np.round(np.arctan2(field.v, field.u) / (np.pi / 4)).astype(int) % 8
    return "\n".join("".join(ARROWS[o] if m else "·" for o, m in zip(orow, mrow))
                     for orow, mrow in zip(octant, field.mask))


for speed in (1, 2):
    seq = synth_two_objects(35, 40, speed=speed)
    trace = run(build_double_layer(35, 40), build_stimulus(seq, 2))
    on, off = split_on_off(transient_raw(trace, frame=2), object_intensity(*seq.frames))
    field = grid_flow(on).merge(grid_flow(off))
    hs = horn_schunck(seq.frames[0], seq.frames[1])
    down = np.mean(field.v[field.mask] > 0)
    print(f"\n{speed} px/frame: {field.mask.sum()} vectors, {down:.0%} point down, "
          f"mean angle to Horn-Schunck {angular_difference(field, hs).mean():.1f} deg")
    rows = np.flatnonzero(field.mask.any(axis=1))
    print("\n".join(arrow_map(field).splitlines()[rows.min(): rows.max() + 1]))
    if speed == 1:
        write_flow_ppm(field, "flow_grid.ppm")
        print("(colour wheel written to flow_grid.ppm)")
