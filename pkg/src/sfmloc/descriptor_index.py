"""Nearest-neighbor descriptor search and ratio-test match filtering.

The index is a kd-tree over the model's per-point mean descriptors
(Euclidean metric on raw SIFT values).  Queries are exact by default,
which trivially meets the recall requirement; a positive ``eps`` trades
recall for speed through approximate traversal.  The index is immutable
after construction and safe for concurrent queries.
"""

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyInput
from .sfm_data import DESCRIPTOR_DIM, QueryImage

CACHE_VERSION = 1


@dataclass(frozen=True)
class GoodMatch:
    """A 2D-feature-to-3D-point correspondence that passed the ratio test.

    d1/d2 are the nearest and second-nearest descriptor distances;
    visibility is the set of model cameras observing the matched point
    and position its world coordinates.
    """

    feature_idx: int
    point_idx: int
    d1: float
    d2: float
    visibility: frozenset
    position: np.ndarray


class DescriptorIndex:
    """kd-tree over (n, 128) descriptors supporting k-NN queries."""

    def __init__(self, descriptors, eps: float = 0.0):
        mat = np.ascontiguousarray(np.asarray(descriptors, dtype=np.float64))
        if mat.ndim != 2 or mat.shape[1] != DESCRIPTOR_DIM:
            raise ValueError(f"descriptors must be (n, {DESCRIPTOR_DIM}), got {mat.shape}")
        if len(mat) == 0:
            raise EmptyInput("cannot index zero descriptors")
        self._mat = mat
        self._tree = cKDTree(mat)
        self.eps = float(eps)

    def __len__(self) -> int:
        return len(self._mat)

    def query(self, vectors, k: int):
        """Distances and indices of the k nearest points per query row.

        Returns (dists, idx) with shape (n, min(k, len(self))), rows
        sorted by ascending distance.
        """
        vecs = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        k_eff = min(k, len(self))
        dists, idx = self._tree.query(vecs, k=k_eff, eps=self.eps)
        if k_eff == 1:
            dists = dists[:, None]
            idx = idx[:, None]
        return dists, idx


def build_index(points, eps: float = 0.0) -> DescriptorIndex:
    """Index a list of 128-dim descriptors for k-NN search."""
    return DescriptorIndex(points, eps=eps)


def knn(index: DescriptorIndex, query, k: int):
    """k nearest indexed points to one query vector.

    Returns [(point_idx, distance), ...] with nondecreasing distances;
    fewer than k entries when the index is smaller than k.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    dists, idx = index.query(np.asarray(query, dtype=float).reshape(1, -1), k)
    return [(int(i), float(d)) for i, d in zip(idx[0], dists[0])]


def ratio_test(d1: float, d2: float, ratio: float) -> bool:
    """Lowe's test: accept iff d1 < ratio * d2 (strict)."""
    if d2 == 0.0:
        return False
    return d1 < ratio * d2


def find_good_matches(index: DescriptorIndex, query: QueryImage,
                      ratio: float, visibilities, positions) -> list:
    """Ratio-test filter of each query feature's 2-NN result.

    visibilities and positions are indexed by model point; accepted
    features become GoodMatch entries carrying the matched point's
    visibility set and world position.
    """
    if not query.features:
        return []
    descs = query.descriptor_matrix()
    dists, idx = index.query(descs, k=2)
    matches = []
    for fi in range(len(descs)):
        if dists.shape[1] < 2:
            break  # single-point index: no second neighbor to test against
        d1, d2 = float(dists[fi, 0]), float(dists[fi, 1])
        if not ratio_test(d1, d2, ratio):
            continue
        pi = int(idx[fi, 0])
        matches.append(GoodMatch(
            feature_idx=fi, point_idx=pi, d1=d1, d2=d2,
            visibility=visibilities[pi],
            position=np.asarray(positions[pi], dtype=float)))
    return matches


def descriptor_checksum(descriptors) -> str:
    """Stable content hash used to invalidate on-disk index caches."""
    mat = np.ascontiguousarray(np.asarray(descriptors, dtype=np.float64))
    return hashlib.sha256(mat.tobytes()).hexdigest()


def save_index_cache(path, descriptors, checksum: str) -> None:
    """Write descriptors + checksum so a later run can skip averaging."""
    mat = np.asarray(descriptors)
    np.savez_compressed(path, version=np.int64(CACHE_VERSION),
                        checksum=np.bytes_(checksum.encode()),
                        descriptors=mat)


def load_index_cache(path, checksum: str):
    """Load cached descriptors; None when missing, stale or incompatible."""
    try:
        with np.load(path) as data:
            if int(data["version"]) != CACHE_VERSION:
                return None
            if bytes(data["checksum"]).decode() != checksum:
                return None
            return data["descriptors"]
    except (OSError, KeyError, ValueError):
        return None
