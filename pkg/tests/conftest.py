import numpy as np
import pytest

from reid_fuse.core import SampleId
from reid_fuse.records import Detection


def make_detection(camera=1, traj=1, frame=0, bbox=(0.0, 0.0, 300.0, 400.0),
                   occluded=(), masks=("Q1", "Q2"), mask_polys=None):
    """Detection with full-rectangle quarter masks unless overridden."""
    default_polys = {
        "Q1": np.array([[10.0, 20.0], [90.0, 20.0], [90.0, 50.0], [10.0, 50.0]]),
        "Q2": np.array([[10.0, 50.0], [90.0, 50.0], [90.0, 80.0], [10.0, 80.0]]),
    }
    quarter_masks = {}
    for kind in masks:
        poly = (mask_polys or {}).get(kind, default_polys[kind])
        quarter_masks[kind] = np.asarray(poly, dtype=np.float64)
    part_bboxes = {
        "head": (80.0, 30.0, 20.0, 40.0),
        "dorsal_fin": (40.0, 0.0, 30.0, 15.0),
        "tail_fin": (0.0, 30.0, 20.0, 40.0),
    }
    occlusion = {name: name in occluded for name in part_bboxes}
    return Detection(
        sample_id=SampleId(camera, traj, frame),
        fish_bbox=tuple(float(v) for v in bbox),
        part_bboxes=part_bboxes,
        occlusion_flags=occlusion,
        quarter_masks=quarter_masks,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
