import numpy as np
import pytest

from spade.core import CameraIntrinsics, DepthRaster, Space, SparsePointSet
from spade.errors import ConfigError, DomainError
from spade.sensors import PatternSpec, sample_pattern, subsample


def metric(values, valid=None):
    values = np.asarray(values, dtype=np.float64)
    if valid is None:
        valid = np.ones_like(values, dtype=bool)
    return DepthRaster(values, valid, Space.METRIC)


def bumpy(seed=0, shape=(20, 30)):
    rng = np.random.default_rng(seed)
    return metric(rng.uniform(1.0, 4.0, shape))


class TestUniformGrid:
    def test_centered_rule_on_10x10(self):
        gt = metric(np.full((10, 10), 2.0))
        pts = sample_pattern(gt, PatternSpec(kind="uniform_grid", grid_rows=2, grid_cols=2))
        got = sorted((p.u, p.v_row) for p in pts)
        assert got == [(2, 2), (2, 7), (7, 2), (7, 7)]

    def test_depths_equal_gt_exactly(self):
        gt = bumpy(1)
        pts = sample_pattern(gt, PatternSpec(kind="uniform_grid", grid_rows=4, grid_cols=5))
        for p in pts:
            assert p.depth_m == gt.values[p.v_row, p.u]


class TestDVL4:
    def test_centered_square(self):
        gt = metric(np.full((100, 100), 2.0))
        pts = sample_pattern(gt, PatternSpec(kind="dvl4", dvl_fraction=0.2))
        got = sorted((p.u, p.v_row) for p in pts)
        assert got == [(40, 40), (40, 60), (60, 40), (60, 60)]


class TestSonarLine:
    def test_rows_jitter_within_band(self):
        gt = bumpy(2)
        spec = PatternSpec(kind="sonar_line", count=12, sonar_jitter=3, seed=5)
        pts = sample_pattern(gt, spec)
        r0 = gt.height // 2
        assert len(pts) >= 10  # jitter collisions may drop a couple
        for p in pts:
            assert abs(p.v_row - r0) <= 3


class TestFeatureLike:
    def test_count_and_determinism(self):
        gt = bumpy(3)
        spec = PatternSpec(kind="feature_like", count=40, seed=9)
        a = sample_pattern(gt, spec)
        b = sample_pattern(gt, spec)
        assert len(a) == 40
        assert [(p.u, p.v_row) for p in a] == [(p.u, p.v_row) for p in b]

    def test_count_exceeding_valid_pixels(self):
        gt = metric(np.full((4, 4), 2.0))
        with pytest.raises(ConfigError):
            sample_pattern(gt, PatternSpec(kind="feature_like", count=17))

    def test_clusters_on_gradients(self):
        vals = np.full((30, 30), 2.0)
        vals[:, 15:] = 3.0  # single depth edge
        gt = metric(vals)
        pts = sample_pattern(gt, PatternSpec(kind="feature_like", count=30, seed=1))
        near_edge = sum(1 for p in pts if 13 <= p.u <= 16)
        assert near_edge >= 20


class TestLaser2:
    K = CameraIntrinsics(fx=80.0, fy=80.0, cx=20.0, cy=10.0)

    def test_plane_beyond_cutoff_gives_empty_set(self):
        gt = metric(np.full((21, 40), 4.0))
        spec = PatternSpec(kind="laser2", laser_baseline_m=0.1, laser_max_range_m=3.0)
        assert len(sample_pattern(gt, spec, intrinsics=self.K)) == 0

    def test_exact_projection_pixels(self):
        # plane at 2 m: u = cx + fx*(+-B/2)/d = 20 -+ 4
        gt = metric(np.full((21, 40), 2.0))
        spec = PatternSpec(kind="laser2", laser_baseline_m=0.2)
        pts = sample_pattern(gt, spec, intrinsics=self.K)
        got = sorted((p.u, p.v_row) for p in pts)
        assert got == [(16, 10), (24, 10)]

    def test_intrinsics_required(self):
        gt = metric(np.full((10, 10), 2.0))
        with pytest.raises(ConfigError):
            sample_pattern(gt, PatternSpec(kind="laser2"))


class TestSnapping:
    def test_invalid_pixel_snaps_to_nearest_valid(self):
        vals = np.full((10, 10), 2.0)
        valid = np.ones((10, 10), dtype=bool)
        valid[2, 2] = False  # grid point lands here
        gt = metric(vals, valid)
        pts = sample_pattern(gt, PatternSpec(kind="uniform_grid", grid_rows=2, grid_cols=2))
        coords = {(p.u, p.v_row) for p in pts}
        assert (2, 2) not in coords
        assert len(pts) == 4
        assert any(max(abs(u - 2), abs(v - 2)) <= 3 for u, v in coords)

    def test_unreachable_point_dropped(self):
        valid = np.zeros((10, 10), dtype=bool)
        valid[9, 9] = True
        gt = metric(np.full((10, 10), 2.0), valid)
        pts = sample_pattern(gt, PatternSpec(kind="uniform_grid", grid_rows=2, grid_cols=2))
        assert {(p.u, p.v_row) for p in pts} <= {(9, 9)}


class TestSubsample:
    def make(self, n=250, seed=0):
        rng = np.random.default_rng(seed)
        idx = rng.choice(60 * 60, size=n, replace=False)
        return SparsePointSet([(int(i % 60), int(i // 60), float(1.0 + (i % 7))) for i in idx])

    def test_keep_all_is_identity_set(self):
        pts = self.make(50)
        out = subsample(pts, 50, seed=3)
        assert {(p.u, p.v_row) for p in out} == {(p.u, p.v_row) for p in pts}

    def test_fraction_of_250_is_225(self):
        assert len(subsample(self.make(250), 0.9, seed=1)) == 225

    def test_same_seed_identical(self):
        pts = self.make(100)
        a = subsample(pts, 40, seed=7)
        b = subsample(pts, 40, seed=7)
        assert [(p.u, p.v_row) for p in a] == [(p.u, p.v_row) for p in b]

    def test_nested_across_counts(self):
        pts = self.make(200)
        keeps = [200, 100, 50, 10]
        sets = [{(p.u, p.v_row) for p in subsample(pts, k, seed=11)} for k in keeps]
        for bigger, smaller in zip(sets, sets[1:]):
            assert smaller <= bigger

    def test_keep_too_many(self):
        with pytest.raises(DomainError):
            subsample(self.make(10), 11, seed=0)


class TestSpecJson:
    def test_round_trip(self):
        spec = PatternSpec(kind="sonar_line", count=33, sonar_jitter=2, seed=4)
        assert PatternSpec.from_json(spec.to_json()) == spec

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError):
            PatternSpec.from_json('{"kind": "dvl4", "bogus": 1}')

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            PatternSpec(kind="lidar")
