"""Advanced RANSAC: co-occurrence prior sampling and backmatching.

Minimal samples are drawn sequentially with an acceptance probability
driven by the size of the intersection of the candidates' camera
visibility sets, so points that were reconstructed from the same views
end up in the same sample.  The pipeline always runs a fixed number of
iterations; if the first phase does not fit enough matches, additional
correspondences are recovered by matching 3D points back into the
query image through a view-prioritized queue, and a second phase runs
on the augmented match set.
"""

import heapq
from dataclasses import dataclass, field

import numpy as np

from .descriptor_index import DescriptorIndex, GoodMatch, ratio_test
from .errors import InsufficientMatches, NoSolution, SamplingExhausted
from .ransac_basic import MatchContext, PoseEstimate, _sample_unique_idx, solve_candidates
from .sfm_data import QueryImage, SfmModel


@dataclass(frozen=True)
class AdvancedParams:
    """Knobs of the advanced pipeline (defaults are the standard run)."""

    iterations_per_phase: int = 100
    inlier_threshold: float = 0.5
    skip_fraction: float = 0.1
    skip_count: int = 12
    k_sigmoid: float = 5.0
    dead_end_limit: int = 30
    min_seed_cameras: int = 5
    min_fitted: int = 6
    inlier_metric: str = "ray"
    max_restarts: int = 100
    rng_seed: int | None = None


@dataclass(frozen=True)
class BackmatchParams:
    """Knobs of the 3D-to-2D backmatching stage."""

    knn: int = 2
    target_backmatches: int = 100
    ratio: float = 0.7
    priority_booster: int = 10
    pool: str = "covisible"  # or "all"
    pop_cap_factor: int = 50


@dataclass
class CooccurrenceState:
    """Running state of one sequential co-occurrence draw."""

    chosen: list = field(default_factory=list)
    running_intersection: frozenset = frozenset()
    zero_streak: int = 0


def intersection_size(running, candidate_visibility) -> int:
    """Cardinality of the intersection of two camera sets."""
    return len(frozenset(running) & frozenset(candidate_visibility))


def accept_probability(inter: int, prev_inter: int, candidate_size: int,
                       k: float) -> float:
    """Probability of accepting a candidate into the running sample.

    A sigmoid in the new intersection size favors large intersections
    without excluding small ones; the ratio against the best achievable
    intersection makes the value independent of absolute set sizes.
    """
    if inter <= 0:
        return 0.0
    f_scaling = 1.0 / (1.0 + np.exp(-inter / k))
    f_ratio = inter / min(prev_inter, candidate_size)
    return float(min(1.0, max(0.0, f_scaling * f_ratio)))


def _draw_cooccurrence_idx(point_ids, vis_sets, n: int,
                           params: AdvancedParams, rng) -> list:
    """Indices of n matches drawn under the co-occurrence prior."""
    if len(set(point_ids.tolist())) < n:
        raise InsufficientMatches(
            f"need {n} matches with distinct points, have "
            f"{len(set(point_ids.tolist()))}")
    sizes = np.array([len(v) for v in vis_sets])
    seeds = np.flatnonzero(sizes >= params.min_seed_cameras)
    if len(seeds) == 0:
        seeds = np.flatnonzero(sizes == sizes.max())

    for _ in range(params.max_restarts):
        first = int(seeds[rng.integers(len(seeds))])
        state = CooccurrenceState(
            chosen=[first],
            running_intersection=frozenset(vis_sets[first]),
            zero_streak=0)
        chosen_points = {int(point_ids[first])}
        dead_end = False
        while len(state.chosen) < n and not dead_end:
            pool = [i for i in range(len(point_ids))
                    if int(point_ids[i]) not in chosen_points]
            cand = pool[rng.integers(len(pool))]
            inter = len(state.running_intersection & vis_sets[cand])
            if inter == 0:
                state.zero_streak += 1
                if state.zero_streak > params.dead_end_limit:
                    dead_end = True
                continue
            state.zero_streak = 0
            p = accept_probability(inter, len(state.running_intersection),
                                   len(vis_sets[cand]), params.k_sigmoid)
            if rng.random() < p:
                state.chosen.append(cand)
                chosen_points.add(int(point_ids[cand]))
                state.running_intersection = \
                    state.running_intersection & vis_sets[cand]
        if not dead_end:
            return state.chosen
    raise SamplingExhausted(
        f"no co-occurring sample after {params.max_restarts} restarts")


def draw_cooccurrence_points(matches, n: int, params: AdvancedParams, rng) -> list:
    """Draw n matches sequentially under the co-occurrence prior.

    The first match must be visible in at least min_seed_cameras
    cameras (falling back to the best available); subsequent uniform
    candidates are accepted with accept_probability.  A run of more
    than dead_end_limit consecutive zero intersections discards the
    sample and restarts from a new first point.
    """
    point_ids = np.array([m.point_idx for m in matches])
    vis_sets = [frozenset(m.visibility) for m in matches]
    idx = _draw_cooccurrence_idx(point_ids, vis_sets, n, params, rng)
    return [matches[i] for i in idx]


def _covisible_pool(model: SfmModel, cameras: set) -> np.ndarray:
    """Model points sharing at least one camera with the given set."""
    mask = np.isin(model.track_cams, np.fromiter(cameras, dtype=np.int32))
    lens = np.diff(model.track_offsets)
    point_of_entry = np.repeat(np.arange(model.num_points), lens)
    return np.unique(point_of_entry[mask])


def backmatch(query: QueryImage, model: SfmModel, good,
              params: BackmatchParams = BackmatchParams()) -> list:
    """Match 3D points back into the query image, guided by visibility.

    Builds a fresh NN index over the query features, then processes a
    priority queue of candidate model points.  Points of existing good
    matches are boosted to the top; every accepted backmatch raises the
    priority of all points co-visible with it, so the search spreads
    along the view graph.  Returns the input matches plus newly
    accepted ones (deduplicated by feature/point pair).
    """
    good = list(good)
    if not good or model.num_points == 0 or not query.features:
        return good
    if model.mean_descriptors is None:
        raise ValueError("model has no mean descriptors")

    feat_index = DescriptorIndex(query.descriptor_matrix())
    if len(feat_index) < 2:
        return good

    if params.pool == "all":
        pool = np.arange(model.num_points)
    else:
        cameras = set()
        for m in good:
            cameras |= set(m.visibility)
        pool = _covisible_pool(model, cameras)
    pool_set = set(int(p) for p in pool)
    for m in good:
        pool_set.add(int(m.point_idx))

    # camera -> pool points seen by it, for the priority updates
    cam_to_points = {}
    for pi in pool_set:
        for cam in model.visibility(pi):
            cam_to_points.setdefault(int(cam), []).append(pi)

    priority = dict.fromkeys(pool_set, 0)
    boost = max(priority.values()) + params.priority_booster
    for m in good:
        priority[int(m.point_idx)] = boost

    heap = [(-prio, pi) for pi, prio in priority.items()]
    heapq.heapify(heap)

    matched_features = {m.feature_idx for m in good}
    seen_pairs = {(m.feature_idx, m.point_idx) for m in good}
    processed = set()
    new_matches = []
    pops = 0
    pop_cap = params.pop_cap_factor * params.target_backmatches

    while heap and len(new_matches) < params.target_backmatches and pops < pop_cap:
        neg_prio, pi = heapq.heappop(heap)
        if pi in processed or -neg_prio != priority[pi]:
            continue
        processed.add(pi)
        pops += 1

        dists, idx = feat_index.query(
            model.mean_descriptors[pi].astype(float), params.knn)
        d1, d2 = float(dists[0, 0]), float(dists[0, 1])
        if not ratio_test(d1, d2, params.ratio):
            continue

        # spread priority along the accepted point's views
        for cam in model.visibility(pi):
            for pj in cam_to_points.get(int(cam), ()):
                if pj not in processed:
                    priority[pj] += 1
                    heapq.heappush(heap, (-priority[pj], pj))

        fi = int(idx[0, 0])
        if fi in matched_features or (fi, pi) in seen_pairs:
            continue
        new_matches.append(GoodMatch(
            feature_idx=fi, point_idx=pi, d1=d1, d2=d2,
            visibility=model.visibility(pi),
            position=model.positions[pi].copy()))
        matched_features.add(fi)
        seen_pairs.add((fi, pi))

    return good + new_matches


def _run_phase(ctx: MatchContext, sample_size: int, focal, solver: str,
               params: AdvancedParams, rng, best):
    """One block of exactly iterations_per_phase iterations."""
    vis_sets = [frozenset(m.visibility) for m in ctx.matches]
    for _ in range(params.iterations_per_phase):
        try:
            idx = _draw_cooccurrence_idx(
                ctx.point_ids, vis_sets, sample_size, params, rng)
        except SamplingExhausted:
            continue
        for pose in solve_candidates(ctx, np.array(idx), focal, solver):
            count, stats, mask = ctx.evaluate(pose)
            if stats is None:
                continue
            if best is None or stats.q > best[0]:
                best = (stats.q, pose, count, stats, mask)
    return best


def estimate_pose_advanced(query: QueryImage, matches, model: SfmModel,
                           adv: AdvancedParams = AdvancedParams(),
                           back: BackmatchParams = BackmatchParams(),
                           solver: str = "auto") -> PoseEstimate:
    """Localize one query with the advanced pipeline.

    Phase one runs exactly adv.iterations_per_phase co-occurrence
    iterations.  If its best pose fits skip_count matches (or the
    skip_fraction share), backmatching is skipped and that pose is
    returned; otherwise the match set is augmented by backmatching and
    a second phase of the same length runs on it.
    """
    focal = query.exif_focal_px
    sample_size = 4 if (focal is None or solver in ("p4pf", "both")) else 3
    ctx = MatchContext(query, matches, adv.inlier_threshold,
                       adv.inlier_metric, adv.min_fitted)
    if len(np.unique(ctx.point_ids)) < sample_size:
        raise InsufficientMatches(
            f"{len(np.unique(ctx.point_ids))} distinct points "
            f"< sample size {sample_size}")

    rng = np.random.default_rng(adv.rng_seed)
    best = _run_phase(ctx, sample_size, focal, solver, adv, rng, None)

    phase1_count = 0 if best is None else best[2]
    skip_at = min(adv.skip_count,
                  int(np.ceil(adv.skip_fraction * len(ctx.matches))))
    if best is not None and best[2] >= skip_at:
        _, pose, count, stats, mask = best
        return PoseEstimate(pose=pose, fitted=ctx.fitted_list(mask),
                            quality=stats,
                            iterations_used=adv.iterations_per_phase,
                            used_backmatching=False,
                            phase1_fitted=phase1_count)

    augmented = backmatch(query, model, ctx.matches, back)
    ctx2 = MatchContext(query, augmented, adv.inlier_threshold,
                        adv.inlier_metric, adv.min_fitted)
    # re-score the phase-1 best against the augmented good set so both
    # phases compete on the same footing
    best2 = None
    if best is not None:
        count, stats, mask = ctx2.evaluate(best[1])
        if stats is not None:
            best2 = (stats.q, best[1], count, stats, mask)
    best2 = _run_phase(ctx2, sample_size, focal, solver, adv, rng, best2)

    if best2 is None:
        raise NoSolution(
            f"no candidate fitted {adv.min_fitted}+ matches in "
            f"{2 * adv.iterations_per_phase} iterations")
    _, pose, count, stats, mask = best2
    return PoseEstimate(pose=pose, fitted=ctx2.fitted_list(mask),
                        quality=stats,
                        iterations_used=2 * adv.iterations_per_phase,
                        used_backmatching=True,
                        phase1_fitted=phase1_count)
