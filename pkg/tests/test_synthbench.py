import math
from dataclasses import replace

import numpy as np
import pytest

from reid_fuse.pipeline import compute_scores, evaluate_test, evaluate_validation
from reid_fuse.synthbench import SynthSpec, bias_ladder, cross_camera_maps, generate

BASE = SynthSpec(n_ids=12, images_per_id=5, dim=16, identity_scale=1.0,
                 sigma_traj=0.4, sigma_obs=0.3, corruption=0.0)


def sign_test_p(n_dec, n_inc):
    """One-sided exact binomial tail P(X >= n_dec) with X ~ Bin(n, 1/2)."""
    n = n_dec + n_inc
    if n == 0:
        return 1.0
    return sum(math.comb(n, k) for k in range(n_dec, n + 1)) / 2.0**n


def trend_counts(rows):
    diffs = np.diff(np.asarray(rows), axis=1)
    return int((diffs < 0).sum()), int((diffs > 0).sum())


class TestGenerate:
    def test_noiseless_dataset_is_trivially_solvable(self):
        spec = replace(BASE, sigma_traj=0.0, sigma_obs=0.0, seed=0)
        ds = generate(spec)
        art = compute_scores(ds, "val", "val", ds.config.fusion)
        assert evaluate_validation(art, per_id=5, seed=0).map == 1.0
        cross = compute_scores(ds, "val", "test", ds.config.fusion)
        assert evaluate_test(cross, ds.matches, per_id=5, seed=0).map == 1.0

    def test_same_seed_bit_identical(self):
        a = generate(replace(BASE, seed=9))
        b = generate(replace(BASE, seed=9))
        assert [r.sample_id for r in a.samples] == [r.sample_id for r in b.samples]
        assert a.matches == b.matches
        for stream in a.config.fusion.streams:
            for sid, vec in a.embeddings.stream_vectors(stream).items():
                np.testing.assert_array_equal(vec, b.embeddings.get(sid, stream))

    def test_different_seed_differs(self):
        a = generate(replace(BASE, seed=1))
        b = generate(replace(BASE, seed=2))
        stream = a.config.fusion.streams[0]
        sid = a.samples[0].sample_id
        diff = a.embeddings.get(sid, stream) - b.embeddings.get(sid, stream)
        assert np.abs(diff).max() > 0

    def test_ground_truth_covers_every_identity(self):
        ds = generate(replace(BASE, seed=4))
        assert len(ds.matches) == BASE.n_ids
        assert all(m.status == "confirmed" for m in ds.matches)
        # camera-2 trajectory ids are permuted: the pairing is not the identity map
        pairs = {m.query_trajectory[1]: m.gallery_trajectory[1] for m in ds.matches}
        assert any(q != g for q, g in pairs.items())

    def test_splits_follow_cameras(self):
        ds = generate(replace(BASE, seed=4))
        assert {r.split for r in ds.samples if r.sample_id.camera_id == 1} == {"val"}
        assert {r.split for r in ds.samples if r.sample_id.camera_id == 2} == {"test"}

    def test_random_limit_matches_permutation_oracle(self):
        # no identity signal at all: ranking is noise, so cross-camera mAP
        # must sit near the expected AP of a uniformly random permutation
        spec = replace(BASE, identity_scale=0.0, sigma_obs=1.0, n_ids=20, seed=3)
        ds = generate(spec)
        art = compute_scores(ds, "val", "test", ds.config.fusion)
        report = evaluate_test(art, ds.matches, per_id=5, seed=0)

        N = spec.n_ids * spec.images_per_id
        R = spec.images_per_id
        rng = np.random.default_rng(0)
        aps = []
        for _ in range(5000):
            rel = rng.permutation(N) < R
            hits = np.cumsum(rel)
            aps.append(float(((hits / np.arange(1, N + 1)) * rel).sum() / R))
        expected = float(np.mean(aps))
        spread = float(np.std(aps)) / math.sqrt(len(report.per_query))
        assert report.map == pytest.approx(expected, abs=4 * spread)


class TestTrends:
    GRID = (0.0, 0.4, 0.8, 1.2, 1.6)
    SEEDS = range(20)

    def test_within_trajectory_map_nonincreasing_in_observation_noise(self):
        rows = []
        for seed in self.SEEDS:
            row = []
            for sigma in self.GRID:
                ds = generate(replace(BASE, sigma_obs=sigma, seed=seed))
                art = compute_scores(ds, "val", "val", ds.config.fusion)
                row.append(evaluate_validation(art, per_id=5, seed=0).map)
            rows.append(row)
        n_dec, n_inc = trend_counts(rows)
        assert sign_test_p(n_dec, n_inc) < 0.05
        assert n_dec > n_inc

    def test_cross_camera_map_nonincreasing_in_trajectory_bias(self):
        rows = []
        for seed in self.SEEDS:
            row = []
            for sigma in self.GRID:
                ds = generate(replace(BASE, sigma_traj=sigma, seed=seed))
                art = compute_scores(ds, "val", "test", ds.config.fusion)
                row.append(evaluate_test(art, ds.matches, per_id=5, seed=0).map)
            rows.append(row)
        n_dec, n_inc = trend_counts(rows)
        assert sign_test_p(n_dec, n_inc) < 0.05
        assert n_dec > n_inc

    def test_trajectory_bias_is_common_mode_within_trajectory(self):
        # the same grid that collapses cross-camera retrieval barely moves
        # within-trajectory retrieval: queries and mates share the bias vector
        within, cross = [], []
        for seed in range(8):
            w_row, c_row = [], []
            for sigma in self.GRID:
                ds = generate(replace(BASE, sigma_traj=sigma, sigma_obs=1.0, seed=seed))
                w_art = compute_scores(ds, "val", "val", ds.config.fusion)
                w_row.append(evaluate_validation(w_art, per_id=5, seed=0).map)
                c_art = compute_scores(ds, "val", "test", ds.config.fusion)
                c_row.append(evaluate_test(c_art, ds.matches, per_id=5, seed=0).map)
            within.append(w_row)
            cross.append(c_row)
        within_means = np.mean(within, axis=0)
        cross_means = np.mean(cross, axis=0)
        within_swing = float(np.abs(within_means - within_means[0]).max())
        cross_swing = float(cross_means[0] - cross_means[-1])
        assert within_swing < 0.02
        assert cross_swing > 0.1


class TestBiasLadder:
    def test_noiseless_rung_is_perfect_everywhere(self):
        spec = replace(BASE, sigma_obs=0.0, corruption=0.0, seed=0)
        rows = bias_ladder(spec, [0.0], per_id=5, seed=0)
        assert len(rows) == 1
        assert rows[0]["ensemble"] == 1.0
        for stream in spec.streams:
            assert rows[0][stream] == 1.0

    def test_grid_length_matches_rows(self):
        small = replace(BASE, n_ids=6, images_per_id=3, dim=8, seed=2)
        rows = bias_ladder(small, [0.0, 0.5, 1.0, 1.5, 2.0], per_id=5, seed=0)
        assert len(rows) == 5
        assert [r["sigma_traj"] for r in rows] == [0.0, 0.5, 1.0, 1.5, 2.0]

    def test_ensemble_usually_beats_singles_under_corruption(self):
        # smoke-scale version of the acceptance property: 3 seeds
        spec = SynthSpec(n_ids=30, images_per_id=6, dim=32, sigma_traj=0.8,
                         sigma_obs=0.4, corruption=0.3)
        wins = 0
        for seed in range(3):
            maps = cross_camera_maps(generate(replace(spec, seed=seed)))
            singles = [v for k, v in maps.items() if k != "ensemble"]
            wins += maps["ensemble"] >= max(singles)
        assert wins == 3
