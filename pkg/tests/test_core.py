import pytest
from hypothesis import given
from hypothesis import strategies as st

from reid_fuse.core import (
    EngineConfig,
    FilterParams,
    FusionParams,
    GeometryParams,
    SampleId,
    SplitSpec,
    check_split_specs,
    default_config,
    derived_rng,
    validate_registry,
)
from reid_fuse.errors import DuplicateStream, OverlappingSplits, ZeroDimension


class TestRegistry:
    def test_well_formed(self):
        registry = validate_registry({"head": 768, "q2_sliced": 1024})
        assert registry == {"head": 768, "q2_sliced": 1024}

    def test_duplicate_stream(self):
        with pytest.raises(DuplicateStream):
            validate_registry([("head", 768), ("head", 512)])

    def test_zero_dimension(self):
        with pytest.raises(ZeroDimension):
            validate_registry({"head": 0})

    def test_duplicate_in_config_text(self):
        text = "[streams]\nhead = 768\nhead = 512\n"
        with pytest.raises(DuplicateStream):
            EngineConfig.loads(text)


class TestSampleId:
    def test_equality_needs_all_three_fields(self):
        a = SampleId(1, 7, 100)
        assert a == SampleId(1, 7, 100)
        assert a != SampleId(2, 7, 100)
        assert a != SampleId(1, 8, 100)
        assert a != SampleId(1, 7, 101)

    def test_trajectory_scoped_per_camera(self):
        assert SampleId(1, 7, 0).trajectory != SampleId(2, 7, 0).trajectory

    def test_negative_frame_rejected(self):
        with pytest.raises(ValueError):
            SampleId(1, 7, -1)

    @given(st.integers(0, 99), st.integers(0, 10**6), st.integers(0, 10**6))
    def test_string_round_trip(self, camera, traj, frame):
        sid = SampleId(camera, traj, frame)
        assert SampleId.parse(str(sid)) == sid


class TestParams:
    @pytest.mark.parametrize("kwargs", [
        {"lam": -0.1}, {"lam": 1.1}, {"tau": 0.0}, {"tau": -1.0},
        {"k": -1}, {"streams": ()},
    ])
    def test_fusion_invariants(self, kwargs):
        with pytest.raises(ValueError):
            FusionParams(**kwargs)

    def test_fusion_defaults(self):
        params = FusionParams()
        assert params.lam == 0.75
        assert params.tau == 0.7
        assert params.k == 20

    @pytest.mark.parametrize("kwargs", [
        {"l_diag": 0.0}, {"min_traj_length": 0}, {"frame_stride": 0},
        {"min_foreground_fraction": 0.0}, {"min_foreground_fraction": 1.0},
    ])
    def test_filter_invariants(self, kwargs):
        with pytest.raises(ValueError):
            FilterParams(**kwargs)

    @pytest.mark.parametrize("kwargs", [
        {"cut_fractions": (0.7, 0.3)}, {"cut_fractions": (0.0, 0.7)},
        {"cut_fractions": (0.3, 1.0)}, {"corner_offset_deg": 0.0},
        {"corner_offset_deg": 90.0}, {"overlap_fraction": -0.1},
    ])
    def test_geometry_invariants(self, kwargs):
        with pytest.raises(ValueError):
            GeometryParams(**kwargs)


class TestSplits:
    def test_overlap_same_camera_rejected(self):
        with pytest.raises(OverlappingSplits):
            check_split_specs([
                SplitSpec("val", 1, 0, 100),
                SplitSpec("test", 1, 50, 150),
            ])

    def test_same_name_overlap_rejected(self):
        with pytest.raises(OverlappingSplits):
            check_split_specs([
                SplitSpec("train", 1, 0, 100),
                SplitSpec("train", 1, 99, 200),
            ])

    def test_disjoint_and_cross_camera_ok(self):
        check_split_specs([
            SplitSpec("train", 1, 0, 100),
            SplitSpec("val", 1, 100, 200),
            SplitSpec("test", 2, 0, 200),
        ])

    def test_empty_range_rejected(self):
        with pytest.raises(ValueError):
            SplitSpec("val", 1, 100, 100)

    def test_contains_is_half_open(self):
        spec = SplitSpec("val", 1, 100, 200)
        assert spec.contains(1, 100)
        assert spec.contains(1, 199)
        assert not spec.contains(1, 200)
        assert not spec.contains(2, 150)


class TestEngineConfig:
    def test_round_trip(self):
        config = EngineConfig(
            registry={"head": 768, "q2_sliced": 1024},
            fusion=FusionParams(lam=0.6, tau=1.25, k=35, streams=("head", "q2_sliced")),
            filter=FilterParams(l_diag=250.0, min_traj_length=10, frame_stride=3,
                                min_foreground_fraction=0.4),
            geometry=GeometryParams(corner_offset_deg=65.0, cut_fractions=(0.25, 0.75),
                                    overlap_fraction=0.1),
            splits=(SplitSpec("val", 1, 14750, 15930), SplitSpec("test", 2, 11410, 12590),
                    SplitSpec("train", 1, 750, 14750)),
        )
        parsed = EngineConfig.loads(config.dumps())
        assert parsed == config

    def test_defaults_round_trip(self):
        config = default_config(512)
        assert EngineConfig.loads(config.dumps()) == config

    def test_load_from_file(self, tmp_path):
        config = default_config({"head": 768, "q1": 512, "q2": 512, "dorsal_fin": 512,
                                 "q1_sliced": 1024, "q2_sliced": 1024})
        path = tmp_path / "engine.ini"
        config.dump(path)
        assert EngineConfig.load(path) == config

    def test_fusion_stream_must_be_registered(self):
        from reid_fuse.errors import UnknownStream

        with pytest.raises(UnknownStream):
            EngineConfig(registry={"head": 8},
                         fusion=FusionParams(streams=("head", "tail")))

    @given(
        lam=st.floats(0.0, 1.0, allow_nan=False),
        tau=st.floats(0.01, 100.0, allow_nan=False),
        k=st.integers(0, 10**6),
    )
    def test_fusion_params_survive_text(self, lam, tau, k):
        config = EngineConfig(
            registry={"head": 8},
            fusion=FusionParams(lam=lam, tau=tau, k=k, streams=("head",)),
        )
        parsed = EngineConfig.loads(config.dumps())
        assert parsed.fusion == config.fusion


class TestDerivedRng:
    def test_deterministic_and_key_sensitive(self):
        a = derived_rng(7, 1, 2).integers(0, 1 << 30, size=8)
        b = derived_rng(7, 1, 2).integers(0, 1 << 30, size=8)
        c = derived_rng(7, 2, 1).integers(0, 1 << 30, size=8)
        assert (a == b).all()
        assert (a != c).any()
