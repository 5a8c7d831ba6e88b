"""Parsers, writers and dataset assembly."""

import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sfmloc import (
    average_descriptors,
    build_mean_descriptors,
    parse_bundle,
    parse_image_list,
    parse_keyfile,
    split_golden,
    write_bundle,
    write_keyfile,
)
from sfmloc.errors import (
    DimensionMismatch,
    EmptyTrack,
    IndexOutOfRange,
    MalformedHeader,
    TruncatedFile,
    UnknownQuery,
)

ONE_CAMERA_ONE_POINT = """\
# Bundle file v0.3
1 1
520.5 -0.01 0.002
1 0 0
0 1 0
0 0 1
0.5 -1.5 2
1.25 2.5 -3.75
200 150 100
1 0 7 12.5 -4.25
"""


def two_camera_model():
    text = """\
# Bundle file v0.3
2 3
500 0 0
1 0 0
0 1 0
0 0 1
0 0 0
600 0 0
0 0 1
0 1 0
-1 0 0
1 2 3
0 0 0
255 0 0
2 0 0 1 1 1 1 2 2
1 1 1
0 255 0
1 0 5 3 3
2 2 2
0 0 255
1 1 9 -2 4
"""
    return parse_bundle(io.StringIO(text))


class TestParseBundle:
    def test_single_camera_single_point(self):
        model = parse_bundle(io.StringIO(ONE_CAMERA_ONE_POINT))
        assert model.num_cameras == 1
        assert model.num_points == 1
        cam = model.cameras[0]
        assert cam.focal_px == 520.5
        assert cam.k1 == -0.01 and cam.k2 == 0.002
        assert np.array_equal(cam.rotation, np.eye(3))
        assert np.array_equal(cam.translation, [0.5, -1.5, 2.0])
        assert np.array_equal(model.positions[0], [1.25, 2.5, -3.75])
        assert np.array_equal(model.colors[0], [200, 150, 100])
        assert model.visibility(0) == frozenset({0})
        assert model.track_keys[0] == 7
        assert np.array_equal(model.track_xy[0], [12.5, -4.25])

    def test_empty_model(self):
        model = parse_bundle(io.StringIO("# Bundle file v0.3\n0 0\n"))
        assert model.num_cameras == 0
        assert model.num_points == 0

    def test_wrong_magic_raises(self):
        with pytest.raises(MalformedHeader):
            parse_bundle(io.StringIO("# Bundle file v0.4\n0 0\n"))

    def test_truncated_camera_raises(self):
        text = "# Bundle file v0.3\n1 0\n500 0 0\n1 0 0\n"
        with pytest.raises(TruncatedFile):
            parse_bundle(io.StringIO(text))

    def test_truncated_point_raises(self):
        text = ONE_CAMERA_ONE_POINT.rsplit("\n", 2)[0] + "\n"
        with pytest.raises(TruncatedFile):
            parse_bundle(io.StringIO(text))

    def test_view_list_camera_out_of_range(self):
        text = ONE_CAMERA_ONE_POINT.replace("1 0 7 12.5 -4.25",
                                            "1 3 7 12.5 -4.25")
        with pytest.raises(IndexOutOfRange):
            parse_bundle(io.StringIO(text))

    def test_bad_counts_line(self):
        with pytest.raises(MalformedHeader):
            parse_bundle(io.StringIO("# Bundle file v0.3\nnot numbers\n"))


class TestBundleRoundTrip:
    def assert_models_equal(self, a, b, tol=1e-9):
        assert a.num_cameras == b.num_cameras
        assert a.num_points == b.num_points
        for ca, cb in zip(a.cameras, b.cameras):
            assert abs(ca.focal_px - cb.focal_px) <= tol
            assert abs(ca.k1 - cb.k1) <= tol and abs(ca.k2 - cb.k2) <= tol
            assert np.allclose(ca.rotation, cb.rotation, atol=tol)
            assert np.allclose(ca.translation, cb.translation, atol=tol)
        assert np.allclose(a.positions, b.positions, atol=tol)
        assert np.array_equal(a.colors, b.colors)
        assert np.array_equal(a.track_offsets, b.track_offsets)
        assert np.array_equal(a.track_cams, b.track_cams)
        assert np.array_equal(a.track_keys, b.track_keys)
        assert np.allclose(a.track_xy, b.track_xy, atol=tol)

    def test_fixture_round_trip(self):
        model = parse_bundle(io.StringIO(ONE_CAMERA_ONE_POINT))
        buf = io.StringIO()
        write_bundle(model, buf)
        again = parse_bundle(io.StringIO(buf.getvalue()))
        self.assert_models_equal(model, again)

    def test_synthetic_scene_round_trip(self, clean_scene):
        buf = io.StringIO()
        write_bundle(clean_scene.model, buf)
        again = parse_bundle(io.StringIO(buf.getvalue()))
        self.assert_models_equal(clean_scene.model, again)


KEYFILE_ALL_SEVENS = "1 128\n10.5 20.25 3.0 0.5\n" + "\n".join(
    " " + " ".join(["7"] * 20) for _ in range(6)) + "\n 7 7 7 7 7 7 7 7\n"


class TestParseKeyfile:
    def test_single_feature(self):
        feats = parse_keyfile(io.StringIO(KEYFILE_ALL_SEVENS))
        assert len(feats) == 1
        f = feats[0]
        # stored (row, col) become (y, x)
        assert f.y == 10.5 and f.x == 20.25
        assert f.scale == 3.0 and f.orientation == 0.5
        assert f.descriptor.shape == (128,)
        assert np.all(f.descriptor == 7)

    def test_empty_keyfile(self):
        assert parse_keyfile(io.StringIO("0 128\n")) == []

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            parse_keyfile(io.StringIO("1 64\n1 1 1 1\n"))

    def test_truncated_descriptor(self):
        text = "1 128\n1 2 3 4\n" + " ".join(["5"] * 40) + "\n"
        with pytest.raises(TruncatedFile):
            parse_keyfile(io.StringIO(text))

    def test_round_trip(self):
        feats = parse_keyfile(io.StringIO(KEYFILE_ALL_SEVENS))
        buf = io.StringIO()
        write_keyfile(feats, buf)
        again = parse_keyfile(io.StringIO(buf.getvalue()))
        assert len(again) == 1
        assert again[0].x == feats[0].x and again[0].y == feats[0].y
        assert np.array_equal(again[0].descriptor, feats[0].descriptor)


class TestParseImageList:
    def test_two_lines_in_order(self):
        got = parse_image_list(io.StringIO("img_a.jpg\nimg_b.jpg\n"))
        assert got == ["img_a.jpg", "img_b.jpg"]

    def test_empty_stream(self):
        assert parse_image_list(io.StringIO("")) == []

    def test_trailing_whitespace_trimmed(self):
        got = parse_image_list(io.StringIO("  img.jpg  \n\n other.jpg\n"))
        assert got == ["img.jpg", "other.jpg"]


class TestSplitGolden:
    def test_one_query_removed(self):
        model = two_camera_model()
        info, golden = split_golden(model, ["b.jpg"], ["a.jpg", "b.jpg"])
        assert info.num_cameras == 1
        assert set(golden) == {"b.jpg"}
        assert golden["b.jpg"].focal_px == 600
        # point 2 was only seen by camera 1 -> dropped
        assert info.num_points == 2
        assert info.visibility(0) == frozenset({0})
        assert info.visibility(1) == frozenset({0})

    def test_point_conservation(self):
        model = two_camera_model()
        info, _ = split_golden(model, ["b.jpg"], ["a.jpg", "b.jpg"])
        dropped = sum(
            1 for i in range(model.num_points)
            if not (model.visibility(i) - {1}))
        assert info.num_points + dropped == model.num_points

    def test_empty_query_list_is_identity(self):
        model = two_camera_model()
        info, golden = split_golden(model, [], ["a.jpg", "b.jpg"])
        assert golden == {}
        assert info.num_cameras == model.num_cameras
        assert info.num_points == model.num_points
        assert np.array_equal(info.track_cams, model.track_cams)

    def test_unknown_query_raises(self):
        model = two_camera_model()
        with pytest.raises(UnknownQuery):
            split_golden(model, ["zzz.jpg"], ["a.jpg", "b.jpg"])

    def test_synthetic_scene_split(self, clean_scene):
        model = clean_scene.model
        query_names = [q.name for q, _ in clean_scene.queries]
        camera_names = clean_scene.db_names + query_names
        info, golden = split_golden(model, query_names, camera_names)
        assert info.num_cameras == len(clean_scene.db_names)
        assert set(golden) == set(query_names)
        for i in range(info.num_points):
            vis = info.visibility(i)
            assert vis and max(vis) < info.num_cameras


class TestAverageDescriptors:
    def test_single_descriptor_is_identity(self):
        desc = np.arange(128) % 256
        out = average_descriptors([desc])
        assert np.array_equal(out, desc)

    def test_two_descriptors_mean(self):
        out = average_descriptors([np.full(128, 100), np.full(128, 200)])
        assert np.all(out == 150)

    def test_half_rounds_up(self):
        out = average_descriptors([np.zeros(128), np.full(128, 255)])
        assert np.all(out == 128)

    def test_empty_track_raises(self):
        with pytest.raises(EmptyTrack):
            average_descriptors([])

    @given(st.lists(st.integers(0, 255), min_size=2, max_size=6))
    def test_permutation_invariant(self, values):
        descs = [np.full(128, v) for v in values]
        rng = np.random.default_rng(0)
        shuffled = [descs[i] for i in rng.permutation(len(descs))]
        assert np.array_equal(average_descriptors(descs),
                              average_descriptors(shuffled))


class TestBuildMeanDescriptors:
    def test_matches_scene_truth(self, clean_scene):
        model = clean_scene.model
        query_names = [q.name for q, _ in clean_scene.queries]
        info, _ = split_golden(model, query_names,
                               clean_scene.db_names + query_names)

        def keyfile_for_camera(ci):
            return np.array([f.descriptor
                             for f in clean_scene.db_keyfiles[ci]], dtype=float)

        rebuilt = build_mean_descriptors(info, keyfile_for_camera)
        # info drops points only seen by queries; surviving ones keep
        # their db-only tracks, whose averages the scene precomputed
        assert rebuilt.mean_descriptors.shape == (info.num_points, 128)
        sample = np.linspace(0, info.num_points - 1, 25).astype(int)
        for i in sample:
            track = np.array(
                [keyfile_for_camera(c)[k] for c, k in
                 zip(rebuilt.track_cams[rebuilt.track_slice(i)],
                     rebuilt.track_keys[rebuilt.track_slice(i)])])
            expected = np.clip(np.floor(track.mean(axis=0) + 0.5), 0, 255)
            assert np.array_equal(rebuilt.mean_descriptors[i], expected)
