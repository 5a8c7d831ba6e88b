"""Bundler models, SIFT keyfiles and query lists.

The bundler v0.3 text format carries cameras (focal, two radial
distortion coefficients, world-to-camera rotation, translation) and 3D
points (position, color, view list).  Keyfiles follow Lowe's layout:
one header line per feature followed by 128 descriptor values wrapped
over several lines.  Parsing is line-streamed so memory stays bounded
per record; point data lands in columnar numpy arrays, which keeps a
two-million-point model loadable in seconds.
"""

from array import array
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyTrack,
    IndexOutOfRange,
    MalformedHeader,
    TruncatedFile,
    UnknownQuery,
)

BUNDLE_MAGIC = "# Bundle file v0.3"
DESCRIPTOR_DIM = 128


@dataclass(frozen=True)
class CameraRecord:
    """One bundler camera: intrinsics plus world-to-camera extrinsics."""

    focal_px: float
    k1: float
    k2: float
    rotation: np.ndarray
    translation: np.ndarray


@dataclass(frozen=True)
class ModelPoint:
    """A reconstructed 3D point with its camera visibility set."""

    position: np.ndarray
    color: np.ndarray
    visibility: frozenset
    mean_descriptor: np.ndarray | None = None


@dataclass(frozen=True)
class Feature:
    """A SIFT keypoint; x runs along columns, y along rows."""

    x: float
    y: float
    scale: float
    orientation: float
    descriptor: np.ndarray


@dataclass
class QueryImage:
    """A query photograph: dimensions, features, optional EXIF focal."""

    name: str
    width: int
    height: int
    features: list
    exif_focal_px: float | None = None

    def feature_xy(self) -> np.ndarray:
        """(n, 2) array of raw pixel coordinates."""
        return np.array([[f.x, f.y] for f in self.features], dtype=float).reshape(-1, 2)

    def descriptor_matrix(self) -> np.ndarray:
        """(n, 128) float array of feature descriptors."""
        return np.array([f.descriptor for f in self.features],
                        dtype=float).reshape(-1, DESCRIPTOR_DIM)


class SfmModel:
    """Cameras plus columnar point data.

    Point attributes live in flat arrays (positions, colors, view-list
    segments indexed by ``track_offsets``) instead of per-point objects;
    ``point(i)``/``points`` materialize object views when convenient.
    Instances are immutable after construction and safe to share across
    threads.
    """

    def __init__(self, cameras, positions, colors, track_offsets,
                 track_cams, track_keys, track_xy, mean_descriptors=None):
        self.cameras = list(cameras)
        self.positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        self.colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
        self.track_offsets = np.asarray(track_offsets, dtype=np.int64)
        self.track_cams = np.asarray(track_cams, dtype=np.int32)
        self.track_keys = np.asarray(track_keys, dtype=np.int32)
        self.track_xy = np.asarray(track_xy, dtype=float).reshape(-1, 2)
        self.mean_descriptors = (
            None if mean_descriptors is None
            else np.asarray(mean_descriptors).reshape(-1, DESCRIPTOR_DIM))
        self._visibilities = None
        self._points = None

    @property
    def num_cameras(self) -> int:
        return len(self.cameras)

    @property
    def num_points(self) -> int:
        return len(self.positions)

    def track_slice(self, i: int) -> slice:
        return slice(self.track_offsets[i], self.track_offsets[i + 1])

    def visibility(self, i: int) -> frozenset:
        return frozenset(self.track_cams[self.track_slice(i)].tolist())

    @property
    def visibilities(self) -> tuple:
        if self._visibilities is None:
            self._visibilities = tuple(
                self.visibility(i) for i in range(self.num_points))
        return self._visibilities

    def point(self, i: int) -> ModelPoint:
        return ModelPoint(
            position=self.positions[i],
            color=self.colors[i],
            visibility=self.visibility(i),
            mean_descriptor=(None if self.mean_descriptors is None
                             else self.mean_descriptors[i]))

    @property
    def points(self) -> list:
        if self._points is None:
            self._points = [self.point(i) for i in range(self.num_points)]
        return self._points

    def with_mean_descriptors(self, descriptors) -> "SfmModel":
        return SfmModel(self.cameras, self.positions, self.colors,
                        self.track_offsets, self.track_cams, self.track_keys,
                        self.track_xy, descriptors)

    @classmethod
    def from_points(cls, cameras, points) -> "SfmModel":
        """Build the columnar layout from ModelPoint objects."""
        positions = [p.position for p in points]
        colors = [p.color for p in points]
        lens, cams = [], []
        for p in points:
            vis = sorted(p.visibility)
            lens.append(len(vis))
            cams.extend(vis)
        offsets = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
        n_entries = int(offsets[-1])
        descs = None
        if points and points[0].mean_descriptor is not None:
            descs = [p.mean_descriptor for p in points]
        return cls(cameras,
                   np.asarray(positions, dtype=float).reshape(-1, 3),
                   np.asarray(colors, dtype=np.uint8).reshape(-1, 3),
                   offsets, cams, np.zeros(n_entries, np.int32),
                   np.zeros((n_entries, 2)), descs)


def _next_line(lines, what: str) -> str:
    line = next(lines, None)
    if line is None:
        raise TruncatedFile(f"unexpected end of file while reading {what}")
    return line


def parse_bundle(stream) -> SfmModel:
    """Parse bundler v0.3 text into an SfmModel.

    Raises MalformedHeader when the magic line is wrong, TruncatedFile
    when the input ends mid-record and IndexOutOfRange when a view list
    references a camera that does not exist.
    """
    lines = iter(stream)
    magic = _next_line(lines, "magic line").strip()
    if magic != BUNDLE_MAGIC:
        raise MalformedHeader(f"expected {BUNDLE_MAGIC!r}, got {magic!r}")
    counts = _next_line(lines, "camera/point counts").split()
    try:
        num_cameras, num_points = int(counts[0]), int(counts[1])
    except (ValueError, IndexError) as exc:
        raise MalformedHeader(f"bad counts line: {counts!r}") from exc

    cameras = []
    for ci in range(num_cameras):
        try:
            f, k1, k2 = map(float, _next_line(lines, f"camera {ci}").split())
            rows = [tuple(map(float, _next_line(lines, f"camera {ci}").split()))
                    for _ in range(3)]
            tx, ty, tz = map(float, _next_line(lines, f"camera {ci}").split())
        except ValueError as exc:
            raise TruncatedFile(f"short record for camera {ci}") from exc
        cameras.append(CameraRecord(f, k1, k2, np.array(rows, dtype=float),
                                    np.array([tx, ty, tz], dtype=float)))

    positions = array("d")
    colors = array("d")
    track_lens = []
    track_cams = array("q")
    track_keys = array("q")
    track_x = array("d")
    track_y = array("d")
    for pi in range(num_points):
        pos_parts = _next_line(lines, f"point {pi} position").split()
        col_parts = _next_line(lines, f"point {pi} color").split()
        view_parts = _next_line(lines, f"point {pi} view list").split()
        try:
            if len(pos_parts) != 3 or len(col_parts) != 3:
                raise ValueError
            positions.extend(map(float, pos_parts))
            colors.extend(map(float, col_parts))
            n_views = int(view_parts[0])
            if len(view_parts) != 1 + 4 * n_views:
                raise ValueError
            track_lens.append(n_views)
            track_cams.extend(map(int, view_parts[1::4]))
            track_keys.extend(map(int, view_parts[2::4]))
            track_x.extend(map(float, view_parts[3::4]))
            track_y.extend(map(float, view_parts[4::4]))
        except ValueError as exc:
            raise TruncatedFile(f"short record for point {pi}") from exc

    cams_arr = np.frombuffer(track_cams, dtype=np.int64) if track_cams else np.empty(0, np.int64)
    if len(cams_arr) and (cams_arr.max() >= num_cameras or cams_arr.min() < 0):
        raise IndexOutOfRange(
            f"view list references camera {int(cams_arr.max())} "
            f"of {num_cameras}")

    offsets = np.concatenate([[0], np.cumsum(track_lens, dtype=np.int64)]) \
        if track_lens else np.zeros(1, np.int64)
    if track_x:
        xy = np.column_stack([np.frombuffer(track_x, dtype=float),
                              np.frombuffer(track_y, dtype=float)])
    else:
        xy = np.empty((0, 2))
    return SfmModel(
        cameras,
        np.frombuffer(positions, dtype=float).reshape(-1, 3) if positions else np.empty((0, 3)),
        np.frombuffer(colors, dtype=float).reshape(-1, 3).astype(np.uint8) if colors else np.empty((0, 3), np.uint8),
        offsets,
        cams_arr,
        np.frombuffer(track_keys, dtype=np.int64) if track_keys else np.empty(0, np.int64),
        xy,
    )


def _f(x) -> str:
    """Shortest exact decimal of a float (plain, no numpy wrapper)."""
    return repr(float(x))


def write_bundle(model: SfmModel, stream) -> None:
    """Serialize a model back to bundler v0.3 text (exact float repr)."""
    w = stream.write
    w(BUNDLE_MAGIC + "\n")
    w(f"{model.num_cameras} {model.num_points}\n")
    for cam in model.cameras:
        w(f"{_f(cam.focal_px)} {_f(cam.k1)} {_f(cam.k2)}\n")
        for row in np.asarray(cam.rotation, dtype=float):
            w(f"{_f(row[0])} {_f(row[1])} {_f(row[2])}\n")
        t = np.asarray(cam.translation, dtype=float)
        w(f"{_f(t[0])} {_f(t[1])} {_f(t[2])}\n")
    for i in range(model.num_points):
        p = model.positions[i]
        c = model.colors[i]
        w(f"{_f(p[0])} {_f(p[1])} {_f(p[2])}\n")
        w(f"{int(c[0])} {int(c[1])} {int(c[2])}\n")
        sl = model.track_slice(i)
        cams = model.track_cams[sl]
        keys = model.track_keys[sl]
        xy = model.track_xy[sl]
        parts = [str(len(cams))]
        for cam, key, (x, y) in zip(cams, keys, xy):
            parts.append(f"{cam} {key} {_f(x)} {_f(y)}")
        w(" ".join(parts) + "\n")


def parse_keyfile(stream) -> list:
    """Parse a Lowe keyfile into Feature objects.

    Header is ``num_features 128``; each feature is a ``row col scale
    orientation`` line followed by 128 integers wrapped over several
    lines.  Stored (row, col) become (y, x).
    """
    lines = iter(stream)
    header = _next_line(lines, "keyfile header").split()
    try:
        num_features, dim = int(header[0]), int(header[1])
    except (ValueError, IndexError) as exc:
        raise MalformedHeader(f"bad keyfile header: {header!r}") from exc
    if dim != DESCRIPTOR_DIM:
        raise DimensionMismatch(f"descriptor dimension {dim}, expected {DESCRIPTOR_DIM}")

    features = []
    for fi in range(num_features):
        head = _next_line(lines, f"feature {fi}").split()
        try:
            row, col, scale, orientation = map(float, head)
        except ValueError as exc:
            raise TruncatedFile(f"bad feature header {fi}") from exc
        values = []
        while len(values) < DESCRIPTOR_DIM:
            parts = _next_line(lines, f"feature {fi} descriptor").split()
            try:
                values.extend(map(int, parts))
            except ValueError as exc:
                raise TruncatedFile(f"bad descriptor data in feature {fi}") from exc
        if len(values) != DESCRIPTOR_DIM:
            raise TruncatedFile(
                f"feature {fi} descriptor has {len(values)} values")
        features.append(Feature(x=col, y=row, scale=scale, orientation=orientation,
                                descriptor=np.array(values, dtype=np.uint8)))
    return features


def write_keyfile(features, stream) -> None:
    """Serialize features in Lowe keyfile layout (20 values per line)."""
    w = stream.write
    w(f"{len(features)} {DESCRIPTOR_DIM}\n")
    for f in features:
        w(f"{_f(f.y)} {_f(f.x)} {_f(f.scale)} {_f(f.orientation)}\n")
        desc = np.asarray(f.descriptor).astype(int)
        for start in range(0, DESCRIPTOR_DIM, 20):
            chunk = desc[start:start + 20]
            w(" " + " ".join(str(v) for v in chunk) + "\n")


def parse_image_list(stream) -> list:
    """Newline-separated entries; blanks skipped, whitespace trimmed."""
    out = []
    for line in stream:
        name = line.strip()
        if name:
            out.append(name)
    return out


def split_golden(full: SfmModel, query_names, camera_names):
    """Remove query cameras from a model, keeping their records aside.

    Returns (info model, {query name: CameraRecord}).  View-list entries
    of query cameras are dropped, surviving cameras are re-indexed and
    points left with an empty visibility set are removed.
    """
    if len(camera_names) != full.num_cameras:
        raise ValueError(
            f"{len(camera_names)} camera names for {full.num_cameras} cameras")
    name_to_idx = {}
    for idx, name in enumerate(camera_names):
        name_to_idx.setdefault(name, idx)
    golden = {}
    query_idx = set()
    for name in query_names:
        if name not in name_to_idx:
            raise UnknownQuery(f"query {name!r} not in camera list")
        idx = name_to_idx[name]
        query_idx.add(idx)
        golden[name] = full.cameras[idx]

    keep_cam = np.ones(full.num_cameras, dtype=bool)
    for idx in query_idx:
        keep_cam[idx] = False
    new_cam_idx = np.cumsum(keep_cam) - 1  # old index -> new index

    keep_entry = keep_cam[full.track_cams]
    lens = np.diff(full.track_offsets)
    point_of_entry = np.repeat(np.arange(full.num_points), lens)
    new_lens = np.bincount(point_of_entry[keep_entry], minlength=full.num_points)
    keep_point = new_lens > 0

    new_offsets = np.concatenate([[0], np.cumsum(new_lens[keep_point])]).astype(np.int64)
    entry_mask = keep_entry & keep_point[point_of_entry]
    info = SfmModel(
        [cam for cam, k in zip(full.cameras, keep_cam) if k],
        full.positions[keep_point],
        full.colors[keep_point],
        new_offsets,
        new_cam_idx[full.track_cams[entry_mask]],
        full.track_keys[entry_mask],
        full.track_xy[entry_mask],
        None if full.mean_descriptors is None else full.mean_descriptors[keep_point],
    )
    return info, golden


def average_descriptors(track_descriptors) -> np.ndarray:
    """Component-wise mean of a track's descriptors, rounded half-up."""
    if len(track_descriptors) == 0:
        raise EmptyTrack("cannot average zero descriptors")
    mat = np.asarray(track_descriptors, dtype=float)
    if mat.ndim != 2 or mat.shape[1] != DESCRIPTOR_DIM:
        raise ValueError(f"descriptors must be (n, {DESCRIPTOR_DIM}), got {mat.shape}")
    mean = mat.mean(axis=0)
    return np.clip(np.floor(mean + 0.5), 0, 255).astype(np.uint8)


def build_mean_descriptors(model: SfmModel, keyfile_for_camera) -> SfmModel:
    """Average per-view SIFT descriptors over each point's track.

    keyfile_for_camera(cam_idx) must return the (n, 128) descriptor
    matrix of that camera's keyfile; each camera is requested once.
    Returns a new model with mean_descriptors filled in.
    """
    sums = np.zeros((model.num_points, DESCRIPTOR_DIM), dtype=np.float64)
    counts = np.zeros(model.num_points, dtype=np.int64)
    lens = np.diff(model.track_offsets)
    point_of_entry = np.repeat(np.arange(model.num_points), lens)
    for cam_idx in range(model.num_cameras):
        in_cam = model.track_cams == cam_idx
        if not in_cam.any():
            continue
        descs = np.asarray(keyfile_for_camera(cam_idx), dtype=np.float64)
        keys = model.track_keys[in_cam]
        if len(descs) and keys.max() >= len(descs):
            raise IndexOutOfRange(
                f"camera {cam_idx}: key {int(keys.max())} outside keyfile "
                f"of {len(descs)} features")
        pts = point_of_entry[in_cam]
        np.add.at(sums, pts, descs[keys])
        np.add.at(counts, pts, 1)
    if (counts == 0).any():
        raise EmptyTrack(f"{int((counts == 0).sum())} points have no descriptors")
    mean = sums / counts[:, None]
    return model.with_mean_descriptors(
        np.clip(np.floor(mean + 0.5), 0, 255).astype(np.uint8))
