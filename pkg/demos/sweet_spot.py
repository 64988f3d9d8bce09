"""
Readout sweet spots of a hole spin
==================================

Field directions where g B and g' B are parallel carry no transverse
coupling, so the readout cannot cause leakage there.
"""

import numpy as np

from qmq import sweetspot

pair = sweetspot.synthetic_hole_spin_pair()
spots = sweetspot.sweet_spot_directions(pair)

for v, lam in spots:
    dz, dx, zeeman = sweetspot.decompose_delta(pair, sweetspot.FieldConfig(v))
    print(f"direction {np.round(v, 4)}  eigenvalue {lam:+.4f}  dx {dx:.1e}  dz {dz:+.3f} ueV/T")

# A coarse map shows how quickly the transverse part grows away from them.
dmap = sweetspot.direction_sweep(pair, (37, 72))
frac = np.mean(dmap.delta_x_norm < 0.1)
print(f"\n{frac:.1%} of directions keep dx below 10% of |Delta|")
