import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_detection
from reid_fuse.core import FilterParams, SampleId, SplitSpec
from reid_fuse.errors import (
    DegeneratePolygon,
    DimensionMismatch,
    DuplicateEmbedding,
    DuplicateFrameInTrack,
    MalformedRecord,
    NonFiniteValue,
    OverlappingSplits,
    UnknownStream,
)
from reid_fuse.ingest import (
    EmbeddingSet,
    Track,
    build_split,
    filter_detections,
    foreground_fraction,
    load_embeddings,
    parse_tracks,
)
from reid_fuse.records import format_detection_line, write_embeddings

PARAMS = FilterParams(l_diag=250.0, min_traj_length=20, frame_stride=5,
                      min_foreground_fraction=0.25)


def write_detections(path, detections):
    with open(path, "w", encoding="utf-8") as fh:
        for det in detections:
            fh.write(format_detection_line(det) + "\n")


class TestParseTracks:
    def test_single_track(self, tmp_path):
        path = tmp_path / "det.txt"
        write_detections(path, [make_detection(frame=f) for f in (3, 1, 2)])
        tracks = parse_tracks(path)
        assert len(tracks) == 1
        assert tracks[0].frames == [1, 2, 3]

    def test_two_trajectories(self, tmp_path):
        path = tmp_path / "det.txt"
        write_detections(path, [make_detection(traj=7, frame=0), make_detection(traj=9, frame=0)])
        tracks = parse_tracks(path)
        assert [(t.camera_id, t.trajectory_id) for t in tracks] == [(1, 7), (1, 9)]

    def test_same_traj_id_on_two_cameras_is_two_tracks(self, tmp_path):
        path = tmp_path / "det.txt"
        write_detections(path, [make_detection(camera=1, traj=7), make_detection(camera=2, traj=7)])
        assert len(parse_tracks(path)) == 2

    def test_duplicate_frame_rejected(self, tmp_path):
        path = tmp_path / "det.txt"
        write_detections(path, [make_detection(frame=5), make_detection(frame=5)])
        with pytest.raises(DuplicateFrameInTrack):
            parse_tracks(path)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "det.txt"
        path.write_text(format_detection_line(make_detection()) + "\nbogus line\n")
        with pytest.raises(MalformedRecord) as err:
            parse_tracks(path)
        assert "line 2" in str(err.value)

    def test_comments_and_blanks_skipped(self, tmp_path):
        path = tmp_path / "det.txt"
        path.write_text("# header\n\n" + format_detection_line(make_detection()) + "\n")
        assert len(parse_tracks(path)) == 1


class TestFilterDetections:
    def test_diagonal_rule(self):
        # 300x400 box has diagonal exactly 500
        good = [make_detection(frame=f, bbox=(0, 0, 300, 400)) for f in range(25)]
        small = [make_detection(traj=2, frame=f, bbox=(0, 0, 100, 100)) for f in range(25)]
        tracks = [Track(1, 1, good), Track(1, 2, small)]
        kept = filter_detections(tracks, PARAMS)
        assert [(t.camera_id, t.trajectory_id) for t in kept] == [(1, 1)]

    def test_boundary_diagonal_kept(self):
        # 150x200 -> diagonal exactly 250; only strictly-below is removed
        dets = [make_detection(frame=f, bbox=(0, 0, 150, 200)) for f in range(20)]
        assert len(filter_detections([Track(1, 1, dets)], PARAMS)) == 1

    def test_occlusion_rule(self):
        dets = [make_detection(frame=f, occluded=("head",) if f == 10 else ())
                for f in range(41)]
        kept = filter_detections([Track(1, 1, dets)], PARAMS)
        # occluded frame 10 splits the track; the longer run 11..40 survives
        assert len(kept) == 1
        assert kept[0].frames == list(range(11, 41))

    def test_longest_uninterrupted_run_retained(self):
        frames = list(range(1, 31)) + list(range(35, 51))
        dets = [make_detection(frame=f) for f in frames]
        kept = filter_detections([Track(1, 1, dets)], PARAMS)
        assert kept[0].frames == list(range(1, 31))

    def test_track_below_min_length_removed(self):
        dets = [make_detection(frame=f) for f in range(19)]
        assert filter_detections([Track(1, 1, dets)], PARAMS) == []

    def test_exact_min_length_kept(self):
        dets = [make_detection(frame=f) for f in range(20)]
        assert len(filter_detections([Track(1, 1, dets)], PARAMS)) == 1

    def test_tie_broken_by_earliest_start(self):
        frames = list(range(0, 25)) + list(range(100, 125))
        dets = [make_detection(frame=f) for f in frames]
        kept = filter_detections([Track(1, 1, dets)], PARAMS)
        assert kept[0].frames == list(range(0, 25))

    @given(st.sets(st.integers(0, 120), min_size=1, max_size=80))
    def test_survivors_are_gap_free_and_long_enough(self, frames):
        dets = [make_detection(frame=f) for f in sorted(frames)]
        kept = filter_detections([Track(1, 1, dets)], PARAMS)
        for track in kept:
            fs = track.frames
            assert len(fs) >= PARAMS.min_traj_length
            assert fs == list(range(fs[0], fs[0] + len(fs)))
        # oracle: longest consecutive run decides survival
        best = max(_runs(sorted(frames)), key=len)
        assert bool(kept) == (len(best) >= PARAMS.min_traj_length)
        if kept:
            assert kept[0].frames == best


def _runs(frames):
    runs = [[frames[0]]]
    for prev, cur in zip(frames, frames[1:]):
        if cur == prev + 1:
            runs[-1].append(cur)
        else:
            runs.append([cur])
    return runs


class TestForegroundFraction:
    def test_rectangle_fills_its_box(self):
        poly = [(0, 0), (100, 0), (100, 40), (0, 40)]
        assert foreground_fraction(poly) == 1.0

    def test_right_triangle_is_half(self):
        poly = [(0, 0), (100, 0), (100, 40)]
        assert foreground_fraction(poly) == pytest.approx(0.5)

    def test_thin_triangle_shoelace_oracle(self):
        poly = [(0.0, 0.0), (100.0, 0.0), (100.0, 1.0)]
        # independent shoelace: area = |x1(y2-y3) + x2(y3-y1) + x3(y1-y2)| / 2
        (x1, y1), (x2, y2), (x3, y3) = poly
        area = abs(x1 * (y2 - y3) + x2 * (y3 - y1) + x3 * (y1 - y2)) / 2
        box = (100.0 - 0.0) * (1.0 - 0.0)
        assert foreground_fraction(poly) == pytest.approx(area / box)
        assert foreground_fraction(poly) == pytest.approx(0.5)

    def test_degenerate_polygon(self):
        with pytest.raises(DegeneratePolygon):
            foreground_fraction([(0, 0), (1, 1), (2, 2)])

    @given(
        dx=st.floats(-1e4, 1e4, allow_nan=False),
        dy=st.floats(-1e4, 1e4, allow_nan=False),
        quarter_turns=st.integers(0, 3),
    )
    def test_invariant_under_translation_and_right_angles(self, dx, dy, quarter_turns):
        poly = np.array([(0.0, 0.0), (50.0, 10.0), (80.0, 60.0), (10.0, 40.0)])
        base = foreground_fraction(poly)
        c, s = math.cos(quarter_turns * math.pi / 2), math.sin(quarter_turns * math.pi / 2)
        c, s = round(c), round(s)  # exact rotation matrix entries
        rotated = poly @ np.array([[c, s], [-s, c]]) + np.array([dx, dy])
        assert foreground_fraction(rotated) == pytest.approx(base, rel=1e-9)


class TestBuildSplit:
    SPLITS = [SplitSpec("val", 1, 0, 1000), SplitSpec("test", 2, 0, 1000)]

    def test_stride_anchored_at_first_retained_frame(self):
        dets = [make_detection(frame=f) for f in range(100, 141)]
        records = build_split([Track(1, 1, dets)], self.SPLITS, PARAMS)
        assert [r.sample_id.frame_index for r in records] == list(range(100, 141, 5))

    def test_sample_without_q2_excluded(self):
        dets = []
        for f in range(100, 141):
            masks = ("Q1",) if f == 105 else ("Q1", "Q2")
            dets.append(make_detection(frame=f, masks=masks))
        records = build_split([Track(1, 1, dets)], self.SPLITS, PARAMS)
        frames = [r.sample_id.frame_index for r in records]
        assert 105 not in frames
        assert frames == [100, 110, 115, 120, 125, 130, 135, 140]

    def test_low_foreground_excluded(self):
        sliver = [(0, 0), (2, 0), (100, 98), (98, 100)]  # fraction ~0.03
        dets = []
        for f in range(100, 141):
            polys = {"Q1": sliver} if f == 110 else None
            dets.append(make_detection(frame=f, mask_polys=polys))
        records = build_split([Track(1, 1, dets)], self.SPLITS, PARAMS)
        assert 110 not in [r.sample_id.frame_index for r in records]

    def test_exactly_25_percent_excluded(self):
        # parallelogram with area exactly a quarter of its bounding box
        quarter = [(0, 0), (25, 0), (100, 100), (75, 100)]
        det = make_detection(frame=100, mask_polys={"Q1": quarter})
        assert foreground_fraction(det.quarter_masks["Q1"]) == 0.25
        dets = [make_detection(frame=f) if f != 100 else det for f in range(100, 141)]
        records = build_split([Track(1, 1, dets)], self.SPLITS, PARAMS)
        assert 100 not in [r.sample_id.frame_index for r in records]

    def test_split_assignment_by_camera_and_range(self):
        splits = [SplitSpec("train", 1, 750, 14750), SplitSpec("val", 1, 14750, 15930)]
        dets = [make_detection(frame=f) for f in range(14990, 15030)]
        records = build_split([Track(1, 1, dets)], splits, PARAMS)
        assert {r.split for r in records} == {"val"}
        dets = [make_detection(frame=f) for f in range(1000, 1040)]
        records = build_split([Track(1, 1, dets)], splits, PARAMS)
        assert {r.split for r in records} == {"train"}

    def test_sample_outside_all_ranges_dropped(self):
        splits = [SplitSpec("val", 1, 0, 100)]
        dets = [make_detection(frame=f) for f in range(200, 241)]
        assert build_split([Track(1, 1, dets)], splits, PARAMS) == []

    def test_overlapping_splits_rejected(self):
        splits = [SplitSpec("a", 1, 0, 100), SplitSpec("b", 1, 50, 150)]
        with pytest.raises(OverlappingSplits):
            build_split([], splits, PARAMS)

    def test_deterministic(self):
        dets = [make_detection(frame=f) for f in range(100, 141)]
        tracks = [Track(1, 1, dets)]
        a = build_split(tracks, self.SPLITS, PARAMS)
        b = build_split(tracks, self.SPLITS, PARAMS)
        assert [r.sample_id for r in a] == [r.sample_id for r in b]


class TestLoadEmbeddings:
    REGISTRY = {"head": 2, "q2_sliced": 3}

    def test_normalization(self, tmp_path):
        path = tmp_path / "head.rfe"
        write_embeddings(path, "head", {SampleId(1, 1, 0): np.array([3.0, 4.0], np.float32)})
        got = load_embeddings(path, self.REGISTRY)
        np.testing.assert_allclose(got.get(SampleId(1, 1, 0), "head"), [0.6, 0.8], rtol=1e-6)

    def test_unit_norm_within_tolerance(self, tmp_path, rng):
        vectors = {SampleId(1, 1, i): rng.standard_normal(3).astype(np.float32) * 37.0
                   for i in range(20)}
        path = tmp_path / "q2_sliced.rfe"
        write_embeddings(path, "q2_sliced", vectors)
        got = load_embeddings(path, self.REGISTRY)
        for sid in vectors:
            norm = np.linalg.norm(got.get(sid, "q2_sliced").astype(np.float64))
            assert abs(norm - 1.0) < 1e-4

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "head.rfe"
        write_embeddings(path, "head", {SampleId(1, 1, 0): np.zeros(5, np.float32) + 1})
        with pytest.raises(DimensionMismatch):
            load_embeddings(path, self.REGISTRY)

    def test_nan_rejected(self, tmp_path):
        path = tmp_path / "head.rfe"
        write_embeddings(path, "head",
                         {SampleId(1, 1, 0): np.array([np.nan, 1.0], np.float32)})
        with pytest.raises(NonFiniteValue):
            load_embeddings(path, self.REGISTRY)

    def test_zero_vector_rejected(self, tmp_path):
        path = tmp_path / "head.rfe"
        write_embeddings(path, "head", {SampleId(1, 1, 0): np.zeros(2, np.float32)})
        with pytest.raises(NonFiniteValue):
            load_embeddings(path, self.REGISTRY)

    def test_unknown_stream(self, tmp_path):
        path = tmp_path / "tail.rfe"
        write_embeddings(path, "tail", {SampleId(1, 1, 0): np.ones(2, np.float32)})
        with pytest.raises(UnknownStream):
            load_embeddings(path, self.REGISTRY)

    def test_duplicate_pair_rejected(self):
        embeddings = EmbeddingSet(self.REGISTRY)
        embeddings.add(SampleId(1, 1, 0), "head", np.array([1.0, 0.0], np.float32))
        with pytest.raises(DuplicateEmbedding):
            embeddings.add(SampleId(1, 1, 0), "head", np.array([0.0, 1.0], np.float32))
