"""Co-occurrence sampling, backmatching and the advanced pipeline."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfmloc import (
    AdvancedParams,
    BackmatchParams,
    accept_probability,
    backmatch,
    build_index,
    draw_cooccurrence_points,
    estimate_pose_advanced,
    find_good_matches,
    intersection_size,
    pose_error,
    scene_diameter,
)
from sfmloc.descriptor_index import GoodMatch
from sfmloc.errors import InsufficientMatches
from sfmloc.sfm_data import Feature, QueryImage, SfmModel


def make_match(feature_idx, point_idx, visibility, position=(0, 0, 1)):
    return GoodMatch(feature_idx=feature_idx, point_idx=point_idx,
                     d1=0.0, d2=1.0, visibility=frozenset(visibility),
                     position=np.asarray(position, dtype=float))


class TestIntersectionSize:
    def test_overlap(self):
        assert intersection_size({1, 2, 3}, {2, 3, 4}) == 2

    def test_disjoint(self):
        assert intersection_size({1, 2}, {3, 4}) == 0

    def test_subset(self):
        assert intersection_size({1, 2, 3, 4}, {2, 3}) == 2


class TestAcceptProbability:
    def test_value_at_k(self):
        p = accept_probability(5, 5, 5, 5.0)
        assert abs(p - 1.0 / (1.0 + np.exp(-1.0))) < 1e-12
        assert abs(p - 0.7310585786300049) < 1e-12

    def test_zero_intersection(self):
        assert accept_probability(0, 10, 10, 5.0) == 0.0

    def test_large_intersection(self):
        p = accept_probability(50, 50, 60, 5.0)
        assert abs(p - 1.0 / (1.0 + np.exp(-10.0))) < 1e-12
        assert p > 0.9999

    @given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 40),
           st.floats(0.5, 20.0))
    def test_bounds(self, inter, prev, size, k):
        inter = min(inter, prev, size)
        p = accept_probability(inter, prev, size, k)
        assert 0.0 <= p <= 1.0
        assert p > 0.0

    def test_strictly_increasing_in_intersection(self):
        prev, size, k = 20, 20, 5.0
        values = [accept_probability(i, prev, size, k)
                  for i in range(1, 21)]
        assert all(b > a for a, b in zip(values, values[1:]))


class TestDrawCooccurrence:
    def test_shared_visibility_returns_distinct(self):
        vis = frozenset(range(6))
        matches = [make_match(i, i, vis) for i in range(10)]
        rng = np.random.default_rng(0)
        got = draw_cooccurrence_points(matches, 3, AdvancedParams(), rng)
        assert len({m.point_idx for m in got}) == 3

    def test_disjoint_clusters_never_mixed(self):
        cluster_a = frozenset({0, 1, 2, 3, 4})
        cluster_b = frozenset({10, 11, 12, 13, 14})
        matches = ([make_match(i, i, cluster_a) for i in range(6)]
                   + [make_match(6 + i, 6 + i, cluster_b) for i in range(6)])
        rng = np.random.default_rng(1)
        for _ in range(100):
            got = draw_cooccurrence_points(matches, 3, AdvancedParams(), rng)
            in_a = [m.point_idx < 6 for m in got]
            assert all(in_a) or not any(in_a)

    def test_insufficient_distinct_points(self):
        matches = [make_match(i, 0, frozenset({0, 1, 2, 3, 4}))
                   for i in range(5)]
        with pytest.raises(InsufficientMatches):
            draw_cooccurrence_points(matches, 3, AdvancedParams(),
                                     np.random.default_rng(0))

    def test_prefix_intersections_nonempty(self):
        rng = np.random.default_rng(2)
        matches = [make_match(i, i,
                              frozenset(rng.choice(12, size=6, replace=False).tolist()))
                   for i in range(20)]
        for _ in range(50):
            got = draw_cooccurrence_points(matches, 4, AdvancedParams(), rng)
            running = set(got[0].visibility)
            for m in got[1:]:
                running &= set(m.visibility)
                assert running

    def test_first_point_needs_seed_cameras(self):
        seedable = make_match(0, 0, frozenset(range(8)))
        small = [make_match(1 + i, 1 + i, frozenset({0, 1})) for i in range(5)]
        rng = np.random.default_rng(3)
        for _ in range(30):
            got = draw_cooccurrence_points([seedable] + small, 3,
                                           AdvancedParams(), rng)
            assert got[0].point_idx == 0

    def test_seed_fallback_to_largest(self):
        matches = [make_match(i, i, frozenset({0, 1, 2})) for i in range(4)]
        got = draw_cooccurrence_points(matches, 3, AdvancedParams(),
                                       np.random.default_rng(4))
        assert len(got) == 3


def micro_scene():
    """Five points, two cameras; point 4 is co-visible but unmatched."""
    rng = np.random.default_rng(9)
    descs = rng.integers(0, 256, (5, 128)).astype(np.uint8)
    positions = np.array([[0.0, 0.0, 10.0], [1.0, 0.0, 10.0],
                          [0.0, 1.0, 10.0], [1.0, 1.0, 10.0],
                          [0.5, 0.5, 10.0]])
    points_vis = [frozenset({0}), frozenset({0, 1}), frozenset({0, 1}),
                  frozenset({1}), frozenset({0, 1})]
    lens = [len(v) for v in points_vis]
    cams = [c for v in points_vis for c in sorted(v)]
    offsets = np.concatenate([[0], np.cumsum(lens)])
    model = SfmModel([], positions, np.zeros((5, 3), np.uint8), offsets,
                     np.array(cams, np.int32),
                     np.zeros(len(cams), np.int32),
                     np.zeros((len(cams), 2)), descs)

    far = rng.integers(0, 256, (3, 128)).astype(np.uint8)
    feats = [Feature(x=10.0 * i, y=5.0 * i, scale=1.0, orientation=0.0,
                     descriptor=d)
             for i, d in enumerate([descs[1], descs[4], *far])]
    query = QueryImage(name="micro", width=200, height=100, features=feats,
                       exif_focal_px=100.0)
    good = [GoodMatch(feature_idx=0, point_idx=1, d1=0.0, d2=900.0,
                      visibility=points_vis[1], position=positions[1])]
    return model, query, good


class TestBackmatch:
    def test_covisible_point_recovered(self):
        model, query, good = micro_scene()
        out = backmatch(query, model, good, BackmatchParams())
        pairs = {(m.feature_idx, m.point_idx) for m in out}
        assert (0, 1) in pairs          # input kept
        assert (1, 4) in pairs          # co-visible point matched feature 1

    def test_empty_inputs_identity(self):
        model, query, good = micro_scene()
        assert backmatch(query, model, [], BackmatchParams()) == []

    def test_already_matched_feature_not_duplicated(self):
        model, query, good = micro_scene()
        # make point 2's descriptor identical to the matched feature 0
        model.mean_descriptors[2] = query.features[0].descriptor
        out = backmatch(query, model, good, BackmatchParams())
        feature_idx = [m.feature_idx for m in out]
        assert feature_idx.count(0) == 1

    def test_never_removes_and_bounded(self):
        model, query, good = micro_scene()
        params = BackmatchParams(target_backmatches=2)
        out = backmatch(query, model, good, params)
        assert all(g in out for g in good)
        assert len(out) <= len(good) + params.target_backmatches


class TestEstimatePoseAdvanced:
    def test_clean_scene_no_backmatching(self, clean_scene):
        model = clean_scene.model
        diam = scene_diameter(model)
        index = build_index(model.mean_descriptors.astype(float))
        query, golden = clean_scene.queries[1]
        good = find_good_matches(index, query, 0.9, model.visibilities,
                                 model.positions)
        est = estimate_pose_advanced(query, good, model,
                                     AdvancedParams(rng_seed=0),
                                     BackmatchParams())
        err = pose_error(est.pose, golden)
        assert err.translation < 1e-3 * diam
        assert err.rotation_deg < 0.1
        assert est.used_backmatching is False
        assert est.iterations_used == 100

    def test_suppression_triggers_backmatching(self, noisy_scene):
        model = noisy_scene.model
        index = build_index(model.mean_descriptors.astype(float))
        query, golden = noisy_scene.queries[0]
        good = find_good_matches(index, query, 0.9, model.visibilities,
                                 model.positions)
        outliers = set(noisy_scene.outlier_labels[0].tolist())
        true_m = [m for m in good if m.feature_idx not in outliers]
        out_m = [m for m in good if m.feature_idx in outliers]
        rng = np.random.default_rng(0)
        keep = [true_m[i] for i in rng.choice(len(true_m), 11, replace=False)]
        suppressed = keep + out_m
        # the pool is small here, so make the 12-count rule the binding
        # skip condition (the fraction rule would fire at ceil(m/10))
        est = estimate_pose_advanced(query, suppressed, model,
                                     AdvancedParams(rng_seed=1,
                                                    skip_fraction=1.0),
                                     BackmatchParams())
        assert est.used_backmatching is True
        assert est.iterations_used == 200
        assert len(est.fitted) > est.phase1_fitted
        assert len(est.fitted) > 11

    def test_insufficient_distinct_points(self, scene_matches):
        query, _, good = scene_matches
        same_point = [m for m in good[:5]]
        collapsed = [GoodMatch(m.feature_idx, 0, m.d1, m.d2, m.visibility,
                               m.position) for m in same_point]
        with pytest.raises(InsufficientMatches):
            estimate_pose_advanced(query, collapsed, None,
                                   AdvancedParams(rng_seed=0),
                                   BackmatchParams())

    def test_deterministic_under_seed(self, noisy_scene):
        model = noisy_scene.model
        index = build_index(model.mean_descriptors.astype(float))
        query, _ = noisy_scene.queries[1]
        good = find_good_matches(index, query, 0.9, model.visibilities,
                                 model.positions)
        a = estimate_pose_advanced(query, good, model,
                                   AdvancedParams(rng_seed=5), BackmatchParams())
        b = estimate_pose_advanced(query, good, model,
                                   AdvancedParams(rng_seed=5), BackmatchParams())
        assert np.array_equal(a.pose.rotation, b.pose.rotation)
        assert np.array_equal(a.pose.center, b.pose.center)
        assert a.iterations_used == b.iterations_used

    def test_iteration_counts_are_exact(self, noisy_scene):
        model = noisy_scene.model
        index = build_index(model.mean_descriptors.astype(float))
        for qi, (query, _) in enumerate(noisy_scene.queries[:3]):
            good = find_good_matches(index, query, 0.9, model.visibilities,
                                     model.positions)
            est = estimate_pose_advanced(query, good, model,
                                         AdvancedParams(rng_seed=qi),
                                         BackmatchParams())
            assert est.iterations_used in (100, 200)
            assert est.iterations_used == \
                (200 if est.used_backmatching else 100)
