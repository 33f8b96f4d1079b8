"""Synthetic LiDAR semantic-segmentation datasets in the SemanticKITTI layout."""

from .distribution import ClassDistribution, YieldTable, calibrate_yields, divergence, measure, plan_spawns
from .evalseg import ConfusionMatrix, IoUReport, confusion, iou_report, mean_iou
from .geometry import Hit, build_bvh, nearest_hit, ray_triangle
from .pipeline import GenerationJob, SequenceSpec, run_generation
from .scene import MapTemplate, ego_trajectory, generate_scene, get_template
from .sensor import LidarConfig, Scan, scan_pattern, simulate_scan
from .taxonomy import Taxonomy, default_taxonomy, load_taxonomy, remap

__version__ = "0.1.0"
