"""Monocular docking-port detection and 6-DoF pose estimation toolkit.

Frames (RGB or event-camera histograms) pass through a pixel filter, the
bright navigation ring is skeletonized and fitted with a RANSAC ellipse,
position and two normal hypotheses follow from the projective geometry of a
circle, and a yaw grid search over the projected reflector layout resolves
the remaining ambiguity.  A synthetic renderer provides ground truth; the
evaluation module reproduces the accuracy and sensitivity analyses.
"""

__version__ = "0.1.0"

from .geometry import CameraIntrinsics, PortModel, PortPose  # noqa: F401
from .ellipse import Conic, EllipseAxes, RansacConfig, ransac_ellipse  # noqa: F401
from .pose import PipelineConfig, TemporalFilter, estimate_pose  # noqa: F401
from .synth import SceneConfig, Trajectory, generate_dataset, render_frame  # noqa: F401
from .evaluate import MetricsReport, aggregate, sensitivity_bound  # noqa: F401
