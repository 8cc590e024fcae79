"""How rotation and specular reflections affect tracking quality.

Run with ``python demos/robustness_sweep.py``. Each condition reuses the
same seed, so the ROIs and the translation draws match across conditions
and only the named factor changes.
"""
from roitrack import MotionBounds, TrackerConfig, evaluate, generate_scenario, textured_image, track

source = textured_image(seed=202)
conditions = [(0, 0), (5, 0), (10, 0), (0, 10), (0, 25)]

print("rotation  reflections  mean     q25")
for rot, refl in conditions:
    bounds = MotionBounds(max_rotation_deg=rot, n_reflections=refl, n_frames=30, n_rois=10)
    sc = generate_scenario(source, bounds, seed=202)
    traj = track(sc.frames, sc.initial_rois, TrackerConfig("median"))
    s = evaluate(traj, sc.truth).summary()
    print(f"{rot:>8}  {refl:>11}  {s['jaccard_mean']:.3f}   {s['jaccard_q25']:.3f}")
