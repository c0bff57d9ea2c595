"""Polar-domain optic disc and cup segmentation.

A numpy/scipy library implementing the full pipeline: ROI cropping and polar
warping of fundus images, a windowed-attention transformer encoder with
per-block bottleneck adapters and split spatial/channel attention gates, a
point-prompted two-channel mask decoder, a joint containment-aware loss,
parameter-partitioned (PEFT) training, and Dice/IoU/CDR evaluation.
"""

__version__ = "0.1.0"

from .polar import PolarGrid, RoiSpec, cart_to_polar_point, crop_roi, polar_to_cart_point, warp_to_cartesian, warp_to_polar  # noqa: F401
from .losses import LossBreakdown, LossWeights, bce_loss, containment_loss, joint_loss  # noqa: F401
from .metrics import MetricReport, cdr, dice, evaluate, iou, vertical_diameter  # noqa: F401
