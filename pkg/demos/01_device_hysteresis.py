"""A single memristor under sinusoidal drive.

Run:  python demos/01_device_hysteresis.py

The current-voltage trajectory of a memristor passes through the origin
(the loop is "pinched") and the lobes shrink as the drive gets faster,
because the state has less time to move in each half cycle.
"""
import numpy as np

from memgrid import device as dev
from memgrid.device import Biolek, DeviceParams, Prodromakis

for window in (Prodromakis(), Biolek(1)):
    params = DeviceParams(window=window)
    print(f"\n{type(window).__name__} window")
    for f in (1.0, 2.0, 4.0, 8.0):
        t, v, i, x = dev.sinusoidal_iv(params, x0=0.5, amplitude=1.0, frequency=f)
        print(f"  {f:4.0f} Hz  loop area {dev.loop_area(v, i):.3e} V*A   state range [{x.min():.3f}, {x.max():.3f}]")

# %% Charge-controlled view: memristance falls linearly with charge until R_on.
p = DeviceParams()
q = np.linspace(0, dev.charge_limit(p), 6)
print("\ncharge (C)   M(q) (ohm)   flux (Wb)")
for qq, m, phi in zip(q, dev.memristance_of_charge(q, p), dev.flux_of_charge(q, p)):
    print(f"{qq:.3e}   {m:9.1f}   {phi:.4e}")

# Beyond the limit the linear law would go below R_on, so it refuses.
try:
    dev.memristance_of_charge(2 * dev.charge_limit(p), p)
except dev.ModelValidityError as exc:
    print("\nout of range:", exc)
