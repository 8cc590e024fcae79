"""Dense flow on a synthetic pair: a shift, then a small rotation.

Run with ``python demos/flow_field.py``.
"""
import numpy as np

from roitrack import estimate_flow, textured_image
from roitrack.flow import warmup

warmup()
img = textured_image(seed=1, width=320, height=240)

# %% A pure translation. With the forward convention, moving the content
# right by 4 and down by 3 gives a flow of (+4, +3) everywhere.
moved = np.roll(img, (3, 4), axis=(0, 1))
flow = estimate_flow(img, moved)
inner = flow[24:-24, 32:-32]
print("median flow (u, v):", np.median(inner[..., 0]), np.median(inner[..., 1]))

# %% A 3 degree rotation about the frame center. The flow should grow
# linearly with the distance from the center.
from roitrack.synthbench import warp_frame  # noqa: E402
from roitrack.geometry import Homography  # noqa: E402

rotated = warp_frame(img, Homography.rotation(3.0, center=(160, 120)))
flow = estimate_flow(img, rotated)
for x in (60, 160, 260):
    print(f"flow at ({x}, 120): u={flow[120, x, 0]:+.2f} v={flow[120, x, 1]:+.2f}")
