"""Reprojection, fitted-match test and coverage quality."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfmloc import (
    Pose,
    coverage_area,
    coverage_window,
    fitted_matches,
    quality_score,
    reproject,
)
from sfmloc.descriptor_index import GoodMatch
from sfmloc.errors import BehindCamera
from sfmloc.pose_quality import coverage_area_xy
from sfmloc.sfm_data import Feature, QueryImage


def identity_pose(focal=100.0):
    return Pose(np.eye(3), np.zeros(3), focal)


def make_query(xy, width=400, height=300):
    feats = [Feature(x=float(x), y=float(y), scale=1.0, orientation=0.0,
                     descriptor=np.zeros(128, dtype=np.uint8))
             for x, y in xy]
    return QueryImage(name="q", width=width, height=height, features=feats)


def make_matches(query, positions):
    return [GoodMatch(feature_idx=i, point_idx=i, d1=0.0, d2=1.0,
                      visibility=frozenset({0}),
                      position=np.asarray(p, dtype=float))
            for i, p in enumerate(positions)]


class TestReproject:
    def test_on_axis(self):
        assert reproject(identity_pose(), [0, 0, 10]) == (0.0, 0.0)

    def test_similar_triangles(self):
        x, y = reproject(identity_pose(), [1, 0, 10])
        assert abs(x - 10.0) < 1e-12 and abs(y) < 1e-12

    def test_behind_camera_raises(self):
        with pytest.raises(BehindCamera):
            reproject(identity_pose(), [0, 0, -1])


class TestFittedMatches:
    def test_true_pose_fits_all(self, scene_matches):
        query, golden, good = scene_matches
        fitted = fitted_matches(golden, good, query, 0.5)
        assert len(fitted) == len(good)

    def test_reversed_pose_fits_none(self, scene_matches):
        query, golden, good = scene_matches
        half_turn = np.diag([-1.0, 1.0, -1.0])  # about the up axis
        wrong = Pose(half_turn @ golden.rotation, golden.center,
                     golden.focal_px)
        assert fitted_matches(wrong, good, query, 0.5) == []

    def test_empty_matches(self, scene_matches):
        query, golden, _ = scene_matches
        assert fitted_matches(golden, [], query, 0.5) == []

    def test_pixel_metric(self, scene_matches):
        query, golden, good = scene_matches
        fitted = fitted_matches(golden, good, query, 2.0, metric="pixel")
        assert len(fitted) == len(good)


class TestCoverageArea:
    def test_interior_window(self):
        query = make_query([(200, 150)])
        matches = make_matches(query, [(0, 0, 1)])
        assert coverage_area(matches, query, 10) == 441

    def test_corner_window_clipped(self):
        query = make_query([(0, 0)])
        matches = make_matches(query, [(0, 0, 1)])
        assert coverage_area(matches, query, 10) == 121

    def test_duplicate_match_idempotent(self):
        query = make_query([(200, 150), (200, 150)])
        matches = make_matches(query, [(0, 0, 1), (0, 0, 1)])
        assert coverage_area(matches, query, 10) == 441

    def test_never_exceeds_image_area(self):
        query = make_query([(i * 5 % 400, i * 7 % 300) for i in range(100)],
                           width=40, height=30)
        xy = np.array([[f.x, f.y] for f in query.features])
        assert coverage_area_xy(xy, 40, 30, 15) <= 40 * 30

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        xy = rng.uniform(0, (400, 300), size=(20, 2))
        a = coverage_area_xy(xy, 400, 300, 10)
        b = coverage_area_xy(xy[rng.permutation(20)], 400, 300, 10)
        assert a == b

    def test_window_size(self):
        assert coverage_window(400) == 10
        assert coverage_window(41) == 1
        assert coverage_window(10) == 1


class TestQualityScore:
    def test_all_fitted_gives_one(self):
        query = make_query([(100, 100), (300, 200)])
        matches = make_matches(query, [(0, 0, 1)] * 2)
        stats = quality_score(matches, matches, query)
        assert stats.q == 1.0
        assert stats.area_fitted == stats.area_good

    def test_empty_fitted_gives_zero(self):
        query = make_query([(100, 100)])
        matches = make_matches(query, [(0, 0, 1)])
        stats = quality_score(matches, [], query)
        assert stats.q == 0.0
        assert stats.area_fitted == 0

    def test_half_coverage(self):
        # two far-separated interior matches, c = 400 // 40 = 10
        query = make_query([(100, 100), (300, 200)])
        matches = make_matches(query, [(0, 0, 1)] * 2)
        stats = quality_score(matches, matches[:1], query)
        assert stats.area_good == 882
        assert stats.area_fitted == 441
        assert stats.q == 0.5

    def test_empty_good_gives_zero(self):
        query = make_query([])
        stats = quality_score([], [], query)
        assert stats.q == 0.0

    @settings(max_examples=40, deadline=None)
    @given(st.data())
    def test_bounds_and_monotonicity(self, data):
        n = data.draw(st.integers(1, 12))
        coords = data.draw(st.lists(
            st.tuples(st.floats(0, 399), st.floats(0, 299)),
            min_size=n, max_size=n))
        query = make_query(coords)
        matches = make_matches(query, [(0, 0, 1)] * n)
        k = data.draw(st.integers(0, n))
        stats = quality_score(matches, matches[:k], query)
        assert 0.0 <= stats.q <= 1.0
        assert 0 <= stats.area_fitted <= stats.area_good
        if k < n:
            bigger = quality_score(matches, matches[:k + 1], query)
            assert bigger.q >= stats.q
