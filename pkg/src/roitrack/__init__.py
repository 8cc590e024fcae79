"""Region-of-interest tracking in video by aggregating dense optical flow."""
from .flow import FlowConfig, build_pyramid, estimate_flow, sample_flow, to_grayscale
from .geometry import (
    Homography,
    Quad,
    Roi,
    apply_homography,
    jaccard,
    roi_visible_fraction,
    transform_quad,
)
from .synthbench import (
    Evaluation,
    MotionBounds,
    Scenario,
    ScenarioTruth,
    add_reflections,
    evaluate,
    generate_scenario,
    sample_transform,
    textured_image,
    warp_frame,
)
from .tracker import (
    AffineFlowParams,
    Displacement,
    RegionTracker,
    TrackerConfig,
    Trajectory,
    affine_fit,
    median_aggregate,
    step,
    track,
    update_affine,
    update_median,
)

__version__ = "0.1.0"
