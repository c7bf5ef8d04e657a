"""Unsupervised traffic anomaly detection from future object localization."""

from .geometry import BBox, BinaryMask, FrameDims, average_boxes, iou, mask_iou, rasterize
from .motion import EgoDelta, EgoPose, PredictionSet

__version__ = "0.1.0"

__all__ = ["BBox", "BinaryMask", "EgoDelta", "EgoPose", "FrameDims", "PredictionSet",
           "average_boxes", "iou", "mask_iou", "rasterize"]
