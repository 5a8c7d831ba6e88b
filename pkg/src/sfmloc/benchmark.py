"""Pose-error metrics, benchmark harness and the synthetic-scene oracle.

The synthetic scene builds a point cloud inside a box, database cameras
on a surrounding ring and query cameras with known golden poses.
Descriptors are well-separated random vectors with small per-view
perturbations, so descriptor matching has an unambiguous ground truth
and a labeled fraction of spurious features can be injected.  This is
what makes the whole pipeline verifiable without a city-scale dataset.
"""

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .descriptor_index import build_index, find_good_matches
from .errors import InsufficientMatches, InvalidParams, MissingGolden, NoSolution
from .minimal_solvers import Pose, denormalize_points, internal_to_bundler
from .ransac_advanced import AdvancedParams, BackmatchParams, estimate_pose_advanced
from .ransac_basic import BasicParams, estimate_pose_basic
from .sfm_data import CameraRecord, Feature, QueryImage, SfmModel

GOOD_RATIO_BASIC = 0.7
GOOD_RATIO_ADVANCED = 0.9
WRONG_POSE_THRESHOLD = 30.0
FOCAL_SPLIT_PX = 1000.0

TIME_BINS = [0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0, np.inf]
L2_BINS = [0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0, np.inf]
FOCAL_BINS = [0.0, 10.0, 50.0, 100.0, 500.0, 1000.0, np.inf]


@dataclass(frozen=True)
class PoseError:
    """Deviation of an estimated pose from its golden reference."""

    rotation_deg: float
    translation: float
    focal_px_delta: float
    rotation_frob: float = 0.0


@dataclass
class QueryResult:
    """One benchmark row."""

    name: str
    error: PoseError | None
    seconds: float
    used_backmatching: bool
    iterations: int
    failure: str | None = None


@dataclass
class BenchmarkReport:
    """Per-query rows plus the aggregates recomputable from them."""

    per_query: list
    median_translation: float | None
    mean_translation: float | None
    frac_under_half_unit: float | None
    wrong_pose_count: int
    n_failed: int
    histogram_time: list
    histogram_l2: list
    histogram_focal: list
    focal_split: dict


@dataclass
class SyntheticScene:
    """A fully known miniature dataset for desk-scale verification."""

    model: SfmModel
    queries: list  # (QueryImage, golden Pose) pairs
    noise_px: float
    outlier_fraction: float
    outlier_labels: list
    db_keyfiles: list
    query_keyfiles: list
    db_names: list
    image_size: tuple
    focal_px: float


def pose_error(estimate: Pose, golden: Pose) -> PoseError:
    """Rotation angle, camera-center distance and focal deviation."""
    rel = estimate.rotation @ golden.rotation.T
    cosang = np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0)
    # the antisymmetric part carries sin(angle); atan2 keeps precision
    # for tiny angles where arccos alone loses half the digits
    axis = 0.5 * np.array([rel[2, 1] - rel[1, 2],
                           rel[0, 2] - rel[2, 0],
                           rel[1, 0] - rel[0, 1]])
    rotation_deg = float(np.degrees(np.arctan2(np.linalg.norm(axis), cosang)))
    translation = float(np.linalg.norm(estimate.center - golden.center))
    if estimate.focal_px is None or golden.focal_px is None:
        focal_delta = 0.0
    else:
        focal_delta = float(abs(estimate.focal_px - golden.focal_px))
    frob = float(np.linalg.norm(estimate.rotation - golden.rotation))
    return PoseError(rotation_deg=rotation_deg, translation=translation,
                     focal_px_delta=focal_delta, rotation_frob=frob)


def _look_at_rotation(center: np.ndarray, target: np.ndarray) -> np.ndarray:
    """World-to-camera rotation looking from center to target, +Y-ish up."""
    forward = target - center
    forward = forward / np.linalg.norm(forward)
    up_hint = np.array([0.0, 1.0, 0.0])
    if abs(forward @ up_hint) > 0.99:
        up_hint = np.array([1.0, 0.0, 0.0])
    right = np.cross(up_hint, forward)
    right = right / np.linalg.norm(right)
    up = np.cross(forward, right)
    return np.vstack([right, up, forward])


def _outlier_count(n_true: int, fraction: float) -> int:
    """Smallest n_out with n_out == round(fraction * (n_true + n_out))."""
    if fraction <= 0.0:
        return 0
    guess = int(np.floor(fraction * n_true / (1.0 - fraction) + 0.5))
    for n_out in (guess, guess + 1, guess - 1, guess + 2):
        if n_out >= 0 and int(np.floor(fraction * (n_true + n_out) + 0.5)) == n_out:
            return n_out
    return max(guess, 0)


def generate_synthetic_scene(n_points: int, n_cameras: int, image_size=(800, 600),
                             focal_px: float = 400.0, noise_px: float = 0.0,
                             outlier_fraction: float = 0.0, seed: int = 0,
                             n_queries: int = 10,
                             descriptor_noise: float = 2.0,
                             ring_radius: float = 150.0,
                             view_cone_deg: float | None = None,
                             max_depth: float | None = None) -> SyntheticScene:
    """Build a deterministic synthetic scene with known golden poses.

    Points fill a city-block-like slab (500 units across, 60 tall),
    database cameras sit on a ring of radius ring_radius looking at the
    origin and per-camera visibility comes from a frustum test; the
    scale puts the default 0.5-unit inlier threshold in the same tight
    regime it has on city-scale data.  With view_cone_deg set, each
    point additionally gets a random facing direction and is only
    visible from cameras within that cone, which thins visibility sets
    the way real facade points behave.  Query features are exact
    projections plus Gaussian pixel noise; outlier features get a
    random image position and the descriptor of an unrelated point so
    they survive the ratio test as genuinely wrong matches.
    """
    if n_points < 10 or n_cameras < 2:
        raise InvalidParams("need at least 10 points and 2 cameras")
    if not 0.0 <= outlier_fraction < 1.0:
        raise InvalidParams("outlier_fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    width, height = image_size

    positions = np.column_stack([rng.uniform(-250.0, 250.0, n_points),
                                 rng.uniform(-30.0, 30.0, n_points),
                                 rng.uniform(-250.0, 250.0, n_points)])
    colors = rng.integers(0, 256, size=(n_points, 3)).astype(np.uint8)
    base_desc = rng.integers(0, 256, size=(n_points, 128)).astype(float)
    if view_cone_deg is not None:
        azimuth = rng.uniform(0.0, 2.0 * np.pi, size=n_points)
        normals = np.column_stack([np.cos(azimuth),
                                   np.zeros(n_points),
                                   np.sin(azimuth)])
        cos_cone = np.cos(np.radians(view_cone_deg))

    def perturbed(idx):
        noisy = base_desc[idx] + rng.normal(0.0, descriptor_noise,
                                            size=(len(idx), 128))
        return np.clip(np.floor(noisy + 0.5), 0, 255).astype(np.uint8)

    def camera_ring(count, radius, angle0):
        cams = []
        for i in range(count):
            ang = angle0 + 2.0 * np.pi * i / count
            center = np.array([radius * np.cos(ang),
                               rng.uniform(-20.0, 20.0),
                               radius * np.sin(ang)])
            cams.append(Pose(_look_at_rotation(center, np.zeros(3)),
                             center, focal_px))
        return cams

    db_poses = camera_ring(n_cameras, ring_radius, 0.0)
    query_poses = camera_ring(n_queries, ring_radius - 10.0,
                              np.pi / max(n_cameras, 1))

    def project_visible(pose):
        pc = pose.world_to_camera(positions)
        depth = pc[:, 2]
        safe = np.where(depth > 0, depth, 1.0)
        proj = focal_px * pc[:, :2] / safe[:, None]
        pix = denormalize_points(proj, width, height)
        ok = (depth > 5.0) & (pix[:, 0] >= 1) & (pix[:, 0] < width - 1) \
            & (pix[:, 1] >= 1) & (pix[:, 1] < height - 1)
        if max_depth is not None:
            ok &= depth < max_depth
        if view_cone_deg is not None:
            to_cam = pose.center - positions
            to_cam = to_cam / np.linalg.norm(to_cam, axis=1, keepdims=True)
            ok &= np.einsum("ij,ij->i", to_cam, normals) > cos_cone
        return ok, pix, proj

    # database cameras: visibility, keyfiles and view lists
    db_keyfiles = []
    track_entries = [[] for _ in range(n_points)]  # (cam, key, x, y)
    for ci, pose in enumerate(db_poses):
        ok, pix, proj = project_visible(pose)
        vis_idx = np.flatnonzero(ok)
        descs = perturbed(vis_idx)
        feats = []
        for key, pi in enumerate(vis_idx):
            feats.append(Feature(x=float(pix[pi, 0]), y=float(pix[pi, 1]),
                                 scale=2.0, orientation=0.0,
                                 descriptor=descs[key]))
            track_entries[pi].append((ci, key, proj[pi, 0], proj[pi, 1]))
        db_keyfiles.append(feats)

    # some points may be behind every camera; keep only observed points
    keep = [i for i in range(n_points) if track_entries[i]]
    positions = positions[keep]
    colors = colors[keep]
    base_desc = base_desc[keep]
    if view_cone_deg is not None:
        normals = normals[keep]
    track_entries = [track_entries[i] for i in keep]

    # mean descriptors over each track's per-view descriptors
    mean_desc = np.empty((len(keep), 128), dtype=np.uint8)
    for pi, entries in enumerate(track_entries):
        track = np.array([db_keyfiles[cam][key].descriptor
                          for cam, key, _, _ in entries], dtype=float)
        mean_desc[pi] = np.clip(np.floor(track.mean(axis=0) + 0.5), 0, 255)

    # queries: exact projections + noise, plus labeled outliers
    queries = []
    query_keyfiles = []
    outlier_labels = []
    query_track = [[] for _ in range(len(keep))]
    n_db = len(db_poses)
    for qi, pose in enumerate(query_poses):
        ok, pix, _ = project_visible(pose)
        noisy = pix + rng.normal(0.0, noise_px, size=pix.shape) if noise_px > 0 else pix
        ok = ok & (noisy[:, 0] >= 0) & (noisy[:, 0] < width) \
            & (noisy[:, 1] >= 0) & (noisy[:, 1] < height)
        vis_idx = np.flatnonzero(ok)
        n_out = _outlier_count(len(vis_idx), outlier_fraction)

        descs = perturbed(vis_idx)
        feats = [Feature(x=float(noisy[pi, 0]), y=float(noisy[pi, 1]),
                         scale=2.0, orientation=0.0, descriptor=descs[k])
                 for k, pi in enumerate(vis_idx)]
        src_points = vis_idx.tolist() + [-1] * n_out
        if n_out:
            stolen = rng.integers(0, len(positions), size=n_out)
            out_desc = perturbed(stolen)
            out_x = rng.uniform(0, width, size=n_out)
            out_y = rng.uniform(0, height, size=n_out)
            for k in range(n_out):
                feats.append(Feature(x=float(out_x[k]), y=float(out_y[k]),
                                     scale=2.0, orientation=0.0,
                                     descriptor=out_desc[k]))
        order = rng.permutation(len(feats))
        feats = [feats[i] for i in order]
        src_points = [src_points[i] for i in order]
        outlier_labels.append(np.flatnonzero(
            np.array(src_points) < 0))
        for key, src in enumerate(src_points):
            if src >= 0:
                f = feats[key]
                ctr = (f.x - width / 2.0, height / 2.0 - f.y)
                query_track[src].append((n_db + qi, key, ctr[0], ctr[1]))

        name = f"query_{qi:03d}.jpg"
        queries.append((QueryImage(name=name, width=width, height=height,
                                   features=feats, exif_focal_px=focal_px),
                        pose))
        query_keyfiles.append(feats)

    # assemble the full model (database + query cameras, bundler frame)
    cameras = []
    for pose in db_poses + query_poses:
        rot, trans = internal_to_bundler(pose)
        cameras.append(CameraRecord(focal_px, 0.0, 0.0, rot, trans))

    lens, cams_flat, keys_flat, xy_flat = [], [], [], []
    for pi in range(len(keep)):
        entries = track_entries[pi] + query_track[pi]
        lens.append(len(entries))
        for cam, key, x, y in entries:
            cams_flat.append(cam)
            keys_flat.append(key)
            xy_flat.append((x, y))
    offsets = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
    model = SfmModel(cameras, positions, colors, offsets,
                     np.array(cams_flat, dtype=np.int32),
                     np.array(keys_flat, dtype=np.int32),
                     np.array(xy_flat, dtype=float).reshape(-1, 2),
                     mean_desc)

    db_names = [f"db_{i:03d}.jpg" for i in range(n_db)]
    return SyntheticScene(model=model, queries=queries, noise_px=noise_px,
                          outlier_fraction=outlier_fraction,
                          outlier_labels=outlier_labels,
                          db_keyfiles=db_keyfiles,
                          query_keyfiles=query_keyfiles,
                          db_names=db_names,
                          image_size=image_size, focal_px=focal_px)


def scene_diameter(model: SfmModel) -> float:
    """Diagonal of the point-cloud bounding box."""
    if model.num_points == 0:
        return 0.0
    span = model.positions.max(axis=0) - model.positions.min(axis=0)
    return float(np.linalg.norm(span))


def write_scene_dir(scene: SyntheticScene, out_dir) -> None:
    """Serialize a synthetic scene as a bundler-style dataset directory.

    Layout: model.out (bundler text, database + query cameras),
    list.txt (camera names aligned with the model), query_list.txt,
    meta.txt (name width height focal per query) and keys/<name>.key
    for every camera.
    """
    from pathlib import Path

    from .sfm_data import write_bundle, write_keyfile

    out = Path(out_dir)
    (out / "keys").mkdir(parents=True, exist_ok=True)
    with open(out / "model.out", "w") as fh:
        write_bundle(scene.model, fh)

    query_names = [q.name for q, _ in scene.queries]
    all_names = scene.db_names + query_names
    with open(out / "list.txt", "w") as fh:
        fh.write("\n".join(all_names) + "\n")
    with open(out / "query_list.txt", "w") as fh:
        fh.write("\n".join(query_names) + "\n")
    width, height = scene.image_size
    with open(out / "meta.txt", "w") as fh:
        for name in query_names:
            fh.write(f"{name} {width} {height} {scene.focal_px!r}\n")

    for name, feats in zip(scene.db_names, scene.db_keyfiles):
        with open(out / "keys" / (Path(name).stem + ".key"), "w") as fh:
            write_keyfile(feats, fh)
    for name, feats in zip(query_names, scene.query_keyfiles):
        with open(out / "keys" / (Path(name).stem + ".key"), "w") as fh:
            write_keyfile(feats, fh)


def _histogram(values, bins) -> list:
    rows = []
    vals = np.asarray(values, dtype=float)
    for lo, hi in zip(bins[:-1], bins[1:]):
        rows.append((lo, hi, int(((vals >= lo) & (vals < hi)).sum())))
    return rows


def run_benchmark(queries, model: SfmModel, golden: dict, mode: str = "basic",
                  basic_params: BasicParams = BasicParams(),
                  adv_params: AdvancedParams = AdvancedParams(),
                  back_params: BackmatchParams = BackmatchParams(),
                  seed: int | None = None, jobs: int = 1) -> BenchmarkReport:
    """Estimate every query, measure wall time and aggregate errors.

    golden maps query names to internal-convention Poses.  Index build
    and dataset load are excluded from the per-query timings.
    """
    if mode not in ("basic", "advanced"):
        raise InvalidParams(f"unknown mode {mode!r}")
    for q in queries:
        if q.name not in golden:
            raise MissingGolden(f"no golden pose for {q.name!r}")
    if model.mean_descriptors is None:
        raise InvalidParams("model has no mean descriptors")

    index = build_index(model.mean_descriptors.astype(float))
    visibilities = model.visibilities
    ratio = GOOD_RATIO_BASIC if mode == "basic" else GOOD_RATIO_ADVANCED

    def one(args):
        qi, query = args
        qseed = None if seed is None else seed + qi
        start = time.perf_counter()
        try:
            good = find_good_matches(index, query, ratio, visibilities,
                                     model.positions)
            if mode == "basic":
                est = estimate_pose_basic(
                    query, good, model,
                    replace(basic_params, rng_seed=qseed))
            else:
                est = estimate_pose_advanced(
                    query, good, model,
                    replace(adv_params, rng_seed=qseed), back_params)
            elapsed = time.perf_counter() - start
            err = pose_error(est.pose, golden[query.name])
            return QueryResult(query.name, err, elapsed,
                               est.used_backmatching, est.iterations_used)
        except (NoSolution, InsufficientMatches) as exc:
            elapsed = time.perf_counter() - start
            return QueryResult(query.name, None, elapsed, False, 0,
                               failure=type(exc).__name__)

    tasks = list(enumerate(queries))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, tasks))
    else:
        rows = [one(t) for t in tasks]
    return report_from_rows(rows)


def report_from_rows(rows) -> BenchmarkReport:
    """Aggregate per-query rows into a full report."""
    good_rows = [r for r in rows if r.error is not None]
    trans = [r.error.translation for r in good_rows]
    focal_deltas = [r.error.focal_px_delta for r in good_rows]
    n_total = len(rows)

    below = [r.error.translation for r in good_rows
             if r.error.focal_px_delta < FOCAL_SPLIT_PX]
    above = [r.error.translation for r in good_rows
             if r.error.focal_px_delta >= FOCAL_SPLIT_PX]
    focal_split = {
        "n_below_1000px": len(below),
        "n_above_1000px": len(above),
        "mean_translation_below": float(np.mean(below)) if below else None,
        "mean_translation_above": float(np.mean(above)) if above else None,
    }

    return BenchmarkReport(
        per_query=rows,
        median_translation=float(np.median(trans)) if trans else None,
        mean_translation=float(np.mean(trans)) if trans else None,
        frac_under_half_unit=(sum(t < 0.5 for t in trans) / n_total
                              if n_total else None),
        wrong_pose_count=sum(t >= WRONG_POSE_THRESHOLD for t in trans),
        n_failed=n_total - len(good_rows),
        histogram_time=_histogram([r.seconds for r in rows], TIME_BINS),
        histogram_l2=_histogram(trans, L2_BINS),
        histogram_focal=_histogram(focal_deltas, FOCAL_BINS),
        focal_split=focal_split,
    )


def write_report(report: BenchmarkReport, out_dir) -> None:
    """Write per_query.csv, the three histogram CSVs and summary.txt."""
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "per_query.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "rotation_deg", "rotation_frob", "translation",
                    "focal_px_delta", "seconds", "used_backmatching",
                    "iterations", "failure"])
        for r in report.per_query:
            if r.error is None:
                w.writerow([r.name, "", "", "", "", f"{r.seconds:.6f}",
                            r.used_backmatching, r.iterations, r.failure])
            else:
                w.writerow([r.name, f"{r.error.rotation_deg:.9g}",
                            f"{r.error.rotation_frob:.9g}",
                            f"{r.error.translation:.9g}",
                            f"{r.error.focal_px_delta:.9g}",
                            f"{r.seconds:.6f}", r.used_backmatching,
                            r.iterations, ""])

    for fname, rows in (("histogram_time.csv", report.histogram_time),
                        ("histogram_l2.csv", report.histogram_l2),
                        ("histogram_focal.csv", report.histogram_focal)):
        with open(out / fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, count in rows:
                w.writerow([lo, hi, count])

    with open(out / "summary.txt", "w") as fh:
        n = len(report.per_query)
        fh.write(f"queries: {n}\n")
        fh.write(f"failed: {report.n_failed}\n")
        fh.write(f"median translation error: {report.median_translation}\n")
        fh.write(f"mean translation error: {report.mean_translation}\n")
        fh.write(f"fraction under 0.5 units: {report.frac_under_half_unit}\n")
        fh.write(f"wrong poses (>= {WRONG_POSE_THRESHOLD} units): "
                 f"{report.wrong_pose_count}\n")
        fh.write(f"focal split at {FOCAL_SPLIT_PX:.0f} px: "
                 f"{report.focal_split}\n")
