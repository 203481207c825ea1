"""
How well does the cost separate good and bad imitations?
========================================================

Five scripted imitations of the stacking demo, scored frame by frame and
normalized on one shared scale.  A useful cost stays near zero for the
correct run, climbs for the wrong one and ignores clutter.
"""

# %%
from pathlib import Path

import numpy as np

from veg import harness

out = Path("shape_out")
curves = harness.cmd_shape(out, "stack", seed=0)

# %%
for name, (raw, norm) in curves.items():
    print(f"{name:16s} max {norm.max():.3f}  final {norm[-1]:.3f}")

# %%
# Clutter leaves every number unchanged: unmatched objects never enter a graph.
print(np.array_equal(curves["cluttered"][0], curves["correct"][0]))

# %%
# The plot is written next to the CSVs.
print((out / "shape.svg").resolve())
