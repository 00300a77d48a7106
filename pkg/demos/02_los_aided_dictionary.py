"""The anchored beamspace dictionary and why it matters.

A known direction placed exactly on the grid is recovered without basis
mismatch; the same direction on a uniform grid leaks across many atoms.
"""

import numpy as np

from drisce import GridSpec, UpaGeometry, build_dictionary, los_aided_grid, steering_vector

print("anchored grid, G = 8, anchor 0.3:")
print(" ", np.round(los_aided_grid(8, 0.3), 4))

geom = UpaGeometry(4, 4)
anchor = (0.2137, -0.5871)      # a direction no uniform grid point hits
target = steering_vector(geom, *anchor)

uniform = build_dictionary(geom, GridSpec(4, 4))
anchored = build_dictionary(geom, GridSpec(4, 4, los_anchor=anchor))

for name, d in (("uniform", uniform), ("anchored", anchored)):
    coef, *_ = np.linalg.lstsq(d.atoms, target, rcond=None)
    mags = np.sort(np.abs(coef))[::-1]
    print(f"\n{name} dictionary:")
    print("  largest |coefficient|:", np.round(mags[0], 4))
    print("  energy outside the best atom:",
          np.round(1 - mags[0] ** 2 / np.sum(mags ** 2), 4))
print("\nthe anchored dictionary concentrates the whole path on atom 0,")
print("so the line-of-sight component needs no off-grid refinement at all.")
