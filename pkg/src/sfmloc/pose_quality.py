"""Fitted-match (inlier) testing and the image-coverage quality score.

A candidate pose is judged not by how many matches it fits but by how
much of the image area its fitted matches cover relative to the area
covered by all good matches.  Each match stamps a (2c+1) x (2c+1) pixel
window around its feature; the score is the ratio of the two covered
areas and always lies in [0, 1].
"""

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera
from .minimal_solvers import Pose, normalize_points
from .sfm_data import QueryImage

DEFAULT_INLIER_THRESHOLD = 0.5  # world units (point-to-ray distance)


@dataclass(frozen=True)
class CoverageStats:
    """Pixel areas covered by good/fitted matches and their ratio."""

    area_good: int
    area_fitted: int
    q: float


def reproject(pose: Pose, point) -> tuple:
    """Pinhole projection of one world point to centered pixel coords."""
    pc = pose.world_to_camera(np.asarray(point, dtype=float).reshape(1, 3))[0]
    if pc[2] <= 0.0:
        raise BehindCamera(f"point depth {pc[2]:.6g} is not positive")
    return (pose.focal_px * pc[0] / pc[2], pose.focal_px * pc[1] / pc[2])


def fitted_mask(pose: Pose, centered_xy: np.ndarray, positions: np.ndarray,
                threshold: float, metric: str = "ray") -> np.ndarray:
    """Boolean inlier mask over match arrays for one candidate pose.

    metric "ray" measures the world-space distance from each 3D point
    to the viewing ray of its feature (threshold in world units);
    "pixel" measures reprojection error (threshold in pixels).  Points
    behind the camera are never inliers.
    """
    if metric == "ray":
        d_cam = np.column_stack([
            centered_xy, np.full(len(centered_xy), pose.focal_px)])
        d_world = d_cam @ pose.rotation  # rows: R^T @ d_cam
        d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
        v = positions - pose.center
        along = np.einsum("ij,ij->i", v, d_world)
        perp = v - along[:, None] * d_world
        dist = np.linalg.norm(perp, axis=1)
        return (along > 0.0) & (dist < threshold)
    if metric == "pixel":
        pc = pose.world_to_camera(positions)
        depth = pc[:, 2]
        safe = np.where(depth > 0.0, depth, 1.0)
        proj = pose.focal_px * pc[:, :2] / safe[:, None]
        err = np.linalg.norm(proj - centered_xy, axis=1)
        return (depth > 0.0) & (err < threshold)
    raise ValueError(f"unknown inlier metric {metric!r}")


def fitted_matches(pose: Pose, matches, query: QueryImage,
                   threshold: float = DEFAULT_INLIER_THRESHOLD,
                   metric: str = "ray") -> list:
    """Subset of matches consistent with the pose under the inlier metric."""
    if not matches:
        return []
    xy = np.array([[query.features[m.feature_idx].x,
                    query.features[m.feature_idx].y] for m in matches])
    centered = normalize_points(xy, query.width, query.height)
    positions = np.array([m.position for m in matches])
    ok = fitted_mask(pose, centered, positions, threshold, metric)
    return [m for m, keep in zip(matches, ok) if keep]


def coverage_window(width: int) -> int:
    """Half window size c: a fortieth of the image width, at least 1."""
    return max(1, width // 40)


def coverage_area_xy(xy: np.ndarray, width: int, height: int, c: int) -> int:
    """Distinct pixels under (2c+1)^2 windows centered at each coordinate."""
    cover = np.zeros((height, width), dtype=bool)
    _paint_windows(cover, xy, width, height, c)
    return int(cover.sum())


def _paint_windows(cover, xy, width, height, c):
    for x, y in np.atleast_2d(xy):
        x0 = max(0, int(np.ceil(x - c)))
        x1 = min(width - 1, int(np.floor(x + c)))
        y0 = max(0, int(np.ceil(y - c)))
        y1 = min(height - 1, int(np.floor(y + c)))
        if x0 <= x1 and y0 <= y1:
            cover[y0:y1 + 1, x0:x1 + 1] = True


def coverage_area(matches, query: QueryImage, c: int) -> int:
    """Image area (pixel count) covered by the matches' windows."""
    if not matches:
        return 0
    xy = np.array([[query.features[m.feature_idx].x,
                    query.features[m.feature_idx].y] for m in matches])
    return coverage_area_xy(xy, query.width, query.height, c)


def quality_score(good, fitted, query: QueryImage,
                  area_good: int | None = None) -> CoverageStats:
    """Coverage ratio q = fitted area / good area (0 when good is empty).

    area_good may be passed in when the good set is fixed across many
    candidate poses.
    """
    c = coverage_window(query.width)
    if area_good is None:
        area_good = coverage_area(good, query, c)
    area_fitted = coverage_area(fitted, query, c)
    q = area_fitted / area_good if area_good > 0 else 0.0
    return CoverageStats(area_good=area_good, area_fitted=area_fitted, q=q)
