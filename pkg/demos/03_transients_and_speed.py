"""ON/OFF transients from a double-layer grid, and speed from band thickness.

Run:  python demos/03_transients_and_speed.py

Layer 2 sees every frame one frame period late.  Where the two layers
disagree, current crosses the inter-layer fuse, and the signs of its two
devices' memristance changes say which way.  Sorting those pixels by the
intensity of the moving object gives the OFF map (dark movers) and the ON
map (light movers).  The appearing band is as wide as the distance moved
in one frame.
"""
from memgrid import build_double_layer, build_stimulus, run, synth_box
from memgrid.detection import Transient, band_thickness_speed, object_intensity, split_on_off, transient_raw

GLYPH = {0: ".", int(Transient.APPEARING): "A", int(Transient.DISAPPEARING): "d"}

for polarity in ("black-on-white", "white-on-black"):
    clip = synth_box(polarity=polarity)
    trace = run(build_double_layer(17, 30), build_stimulus(clip, 2))
    print(f"\n== {polarity} ==")
    for n in range(2, 16):
        raw = transient_raw(trace, frame=n)
        on, off = split_on_off(raw, object_intensity(clip.frames[n - 2], clip.frames[n - 1]))
        live = off if off.support().any() else on
        name = "OFF" if live is off else "ON"
        print(f"frame {n:2d}: {name} map, {live.count(Transient.APPEARING):2d} appearing px, "
              f"speed {band_thickness_speed(live):.0f} px/frame; other map empty: {not (on if live is off else off).support().any()}")
    print("\nframe 15 (A = appearing, d = disappearing):")
    print("\n".join("".join(GLYPH[int(c)] for c in row) for row in live.classes[3:14]))
