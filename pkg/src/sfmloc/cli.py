"""Command-line runtime: load, split, index, estimate, export, report.

Expected dataset layout (see the scene-directory writer in the
benchmark module, which produces exactly this):

    model.out        bundler v0.3 text
    list.txt         image names aligned with the model's cameras
    query_list.txt   names of the images to localize
    meta.txt         per query: name width height [focal_px]
    keys/<stem>.key  one keyfile per image

All pipeline parameters are exposed as flags; a key=value config file
may supply defaults, with flags winning.  Interactive prompts happen
only when mode/query are missing and a terminal is attached.
"""

import argparse
import heapq
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .benchmark import (
    GOOD_RATIO_ADVANCED,
    GOOD_RATIO_BASIC,
    QueryResult,
    pose_error,
    report_from_rows,
    write_report,
)
from .descriptor_index import (
    build_index,
    descriptor_checksum,
    find_good_matches,
    load_index_cache,
    save_index_cache,
)
from .errors import InsufficientMatches, LocalizationError, NoSolution
from .minimal_solvers import bundler_to_internal
from .ransac_advanced import AdvancedParams, BackmatchParams, estimate_pose_advanced
from .ransac_basic import BasicParams, estimate_pose_basic
from .sfm_data import (
    QueryImage,
    build_mean_descriptors,
    parse_bundle,
    parse_image_list,
    parse_keyfile,
    split_golden,
)
from .viz_export import export_ply, export_query_bundle

# flag name, config key, type, default, help
_NUMERIC_FLAGS = [
    ("max-iterations", int, 10000, "basic: RANSAC iteration cap"),
    ("stop-fraction", float, 0.1, "basic: fitted fraction that stops RANSAC"),
    ("stop-count", int, 12, "basic: fitted count that stops RANSAC"),
    ("iterations-per-phase", int, 100, "advanced: iterations per phase"),
    ("skip-fraction", float, 0.1, "advanced: fitted fraction that skips backmatching"),
    ("skip-count", int, 12, "advanced: fitted count that skips backmatching"),
    ("k-sigmoid", float, 5.0, "advanced: sigmoid scale of the co-occurrence prior"),
    ("dead-end-limit", int, 30, "advanced: zero intersections before restart"),
    ("min-seed-cameras", int, 5, "advanced: camera count required of the first point"),
    ("max-restarts", int, 100, "advanced: restart cap of the sampler"),
    ("inlier-threshold", float, 0.5, "inlier distance threshold"),
    ("min-fitted", int, 6, "fitted matches a candidate needs to count"),
    ("knn", int, 2, "backmatching: neighbors to retrieve"),
    ("target-backmatches", int, 100, "backmatching: matches to achieve"),
    ("backmatch-ratio", float, 0.7, "backmatching: ratio-test value"),
    ("priority-booster", int, 10, "backmatching: priority boost of good matches"),
    ("pop-cap-factor", int, 50, "backmatching: queue pops per target match"),
    ("ratio", float, None, "good-match ratio (default 0.7 basic / 0.9 advanced)"),
]


@dataclass
class RunConfig:
    """Validated settings of one CLI run."""

    model_path: Path
    keyfile_dir: Path
    query_list_path: Path
    camera_list_path: Path
    meta_path: Path | None
    output_dir: Path
    mode: str
    query_selector: str
    solver_override: str = "auto"
    seed: int | None = None
    jobs: int = 1
    benchmark: bool = False
    cache_path: Path | None = None
    inlier_metric: str = "ray"
    ratio: float | None = None
    basic: BasicParams = BasicParams()
    advanced: AdvancedParams = AdvancedParams()
    backmatch: BackmatchParams = BackmatchParams()


def build_arg_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sfmloc",
        description="Localize query photographs in an SfM point cloud.")
    p.add_argument("--model", help="bundler model file (model.out)")
    p.add_argument("--keys", help="directory with .key files")
    p.add_argument("--list", dest="query_list", help="query image list file")
    p.add_argument("--camera-list",
                   help="image list aligned with the model's cameras "
                        "(default: list.txt next to the model)")
    p.add_argument("--meta",
                   help="query metadata table: name width height [focal_px] "
                        "(default: meta.txt next to the model)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--mode", choices=["basic", "advanced"])
    p.add_argument("--query", help="'all' or one query image name")
    p.add_argument("--solver", choices=["auto", "p3p", "p4pf", "both"],
                   default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--benchmark", action="store_true", default=None,
                   help="also write benchmark CSVs against golden poses")
    p.add_argument("--inlier-metric", choices=["ray", "pixel"], default=None)
    p.add_argument("--backmatch-pool", choices=["covisible", "all"],
                   default=None)
    p.add_argument("--cache-index", help="descriptor cache file (npz)")
    p.add_argument("--config", help="key=value config file (flags win)")
    for name, typ, default, help_text in _NUMERIC_FLAGS:
        p.add_argument(f"--{name}", type=typ, default=None,
                       help=f"{help_text} (default {default})")
    return p


def _read_config_file(path) -> dict:
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {line!r}")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _merged(args, file_values: dict, key: str, default=None, cast=None):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in file_values:
        raw = file_values[key]
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return cast(raw) if cast else raw
    return default


def config_from_args(args) -> RunConfig:
    file_values = _read_config_file(args.config) if args.config else {}

    def need(key, cast=None):
        value = _merged(args, file_values, key, cast=cast)
        if value is None:
            raise ValueError(f"missing required setting --{key.replace('_', '-')}")
        return value

    mode = _merged(args, file_values, "mode")
    query = _merged(args, file_values, "query")
    if (mode is None or query is None) and sys.stdin.isatty():
        if mode is None:
            mode = input("mode [basic/advanced]: ").strip()
        if query is None:
            query = input("query image name (or 'all'): ").strip()
    if mode not in ("basic", "advanced"):
        raise ValueError(f"mode must be basic or advanced, got {mode!r}")
    if not query:
        raise ValueError("no query selected")

    model_path = Path(need("model"))
    numeric = {}
    for name, typ, default, _ in _NUMERIC_FLAGS:
        key = name.replace("-", "_")
        numeric[key] = _merged(args, file_values, key, default=default, cast=typ)

    metric = _merged(args, file_values, "inlier_metric", default="ray")
    basic = BasicParams(
        max_iterations=numeric["max_iterations"],
        inlier_threshold=numeric["inlier_threshold"],
        stop_fraction=numeric["stop_fraction"],
        stop_count=numeric["stop_count"],
        min_fitted=numeric["min_fitted"],
        inlier_metric=metric)
    advanced = AdvancedParams(
        iterations_per_phase=numeric["iterations_per_phase"],
        inlier_threshold=numeric["inlier_threshold"],
        skip_fraction=numeric["skip_fraction"],
        skip_count=numeric["skip_count"],
        k_sigmoid=numeric["k_sigmoid"],
        dead_end_limit=numeric["dead_end_limit"],
        min_seed_cameras=numeric["min_seed_cameras"],
        min_fitted=numeric["min_fitted"],
        inlier_metric=metric,
        max_restarts=numeric["max_restarts"])
    backmatch = BackmatchParams(
        knn=numeric["knn"],
        target_backmatches=numeric["target_backmatches"],
        ratio=numeric["backmatch_ratio"],
        priority_booster=numeric["priority_booster"],
        pool=_merged(args, file_values, "backmatch_pool", default="covisible"),
        pop_cap_factor=numeric["pop_cap_factor"])

    camera_list = _merged(args, file_values, "camera_list")
    meta = _merged(args, file_values, "meta")
    cache = _merged(args, file_values, "cache_index")
    return RunConfig(
        model_path=model_path,
        keyfile_dir=Path(need("keys")),
        query_list_path=Path(need("query_list")),
        camera_list_path=Path(camera_list) if camera_list
        else model_path.parent / "list.txt",
        meta_path=Path(meta) if meta else model_path.parent / "meta.txt",
        output_dir=Path(need("out")),
        mode=mode,
        query_selector=query,
        solver_override=_merged(args, file_values, "solver", default="auto"),
        seed=_merged(args, file_values, "seed", cast=int),
        jobs=_merged(args, file_values, "jobs", default=1, cast=int),
        benchmark=bool(_merged(args, file_values, "benchmark", default=False,
                               cast=bool)),
        cache_path=Path(cache) if cache else None,
        inlier_metric=metric,
        ratio=numeric["ratio"],
        basic=basic, advanced=advanced, backmatch=backmatch)


def _load_meta(path) -> dict:
    """name -> (width, height, focal_px or None)."""
    meta = {}
    if path is None or not Path(path).is_file():
        return meta
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            name, width, height = parts[0], int(parts[1]), int(parts[2])
            focal = float(parts[3]) if len(parts) > 3 else None
            meta[name] = (width, height, focal)
    return meta


def _load_query_image(config: RunConfig, name: str, meta: dict) -> QueryImage:
    key_path = config.keyfile_dir / (Path(name).stem + ".key")
    with open(key_path) as fh:
        features = parse_keyfile(fh)
    if name not in meta:
        raise ValueError(f"no metadata (width height [focal]) for {name!r}")
    width, height, focal = meta[name]
    in_bounds = [f for f in features
                 if 0 <= f.x < width and 0 <= f.y < height]
    return QueryImage(name=name, width=width, height=height,
                      features=in_bounds, exif_focal_px=focal)


def run(config: RunConfig) -> int:
    """Execute one localization run; returns the process exit status."""
    for path in (config.model_path, config.keyfile_dir,
                 config.query_list_path, config.camera_list_path):
        if not Path(path).exists():
            print(f"error: missing input {path}", file=sys.stderr)
            return 2

    t0 = time.perf_counter()
    with open(config.model_path) as fh:
        full = parse_bundle(fh)
    with open(config.camera_list_path) as fh:
        camera_names = parse_image_list(fh)
    with open(config.query_list_path) as fh:
        query_names = parse_image_list(fh)
    if config.query_selector != "all":
        if config.query_selector not in query_names:
            raise LocalizationError(
                f"query {config.query_selector!r} not in the query list")
        query_names = [config.query_selector]

    info, golden_records = split_golden(full, query_names, camera_names)
    load_seconds = time.perf_counter() - t0
    print(f"loaded {full.num_points} points, {full.num_cameras} cameras "
          f"in {load_seconds:.2f}s; info model keeps {info.num_points} points")

    info_names = [n for n in camera_names if n not in golden_records]
    descriptors = None
    checksum = None
    if config.cache_path is not None:
        checksum = descriptor_checksum(info.positions)
        descriptors = load_index_cache(config.cache_path, checksum)
    if descriptors is None:
        def keyfile_for_camera(cam_idx):
            stem = Path(info_names[cam_idx]).stem
            with open(config.keyfile_dir / (stem + ".key")) as fh:
                feats = parse_keyfile(fh)
            return np.array([f.descriptor for f in feats], dtype=float) \
                .reshape(-1, 128)
        info = build_mean_descriptors(info, keyfile_for_camera)
        descriptors = info.mean_descriptors
        if config.cache_path is not None:
            save_index_cache(config.cache_path, descriptors, checksum)
    else:
        info = info.with_mean_descriptors(descriptors)

    index = build_index(info.mean_descriptors.astype(float))
    visibilities = info.visibilities
    golden_poses = {name: bundler_to_internal(rec)
                    for name, rec in golden_records.items()}
    meta = _load_meta(config.meta_path)
    ratio = config.ratio if config.ratio is not None else (
        GOOD_RATIO_BASIC if config.mode == "basic" else GOOD_RATIO_ADVANCED)

    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    export_ply(info, out / "mesh.ply")

    def one(task):
        qi, name = task
        query = _load_query_image(config, name, meta)
        seed = None if config.seed is None else config.seed + qi
        start = time.perf_counter()
        try:
            good = find_good_matches(index, query, ratio, visibilities,
                                     info.positions)
            if config.mode == "basic":
                est = estimate_pose_basic(
                    query, good, info, replace(config.basic, rng_seed=seed),
                    solver=config.solver_override)
            else:
                est = estimate_pose_advanced(
                    query, good, info,
                    replace(config.advanced, rng_seed=seed),
                    config.backmatch, solver=config.solver_override)
            elapsed = time.perf_counter() - start
        except (NoSolution, InsufficientMatches) as exc:
            elapsed = time.perf_counter() - start
            print(f"[{name}] FAILED {type(exc).__name__}: {exc}")
            return QueryResult(name, None, elapsed, False, 0,
                               failure=type(exc).__name__)

        image_source = None
        for candidate in (Path(name), config.model_path.parent / name):
            if candidate.is_file():
                image_source = candidate
                break
        export_query_bundle(est.pose, query, est.fitted, info,
                            out / Path(name).stem, image_source=image_source,
                            write_mesh=False, mesh_filename="../mesh.ply")
        err = pose_error(est.pose, golden_poses[name])
        print(f"[{name}] q={est.quality.q:.3f} fitted={len(est.fitted)} "
              f"iters={est.iterations_used} "
              f"backmatching={est.used_backmatching} "
              f"err={err.translation:.3f} ({elapsed:.2f}s)")
        return QueryResult(name, err, elapsed, est.used_backmatching,
                           est.iterations_used)

    tasks = list(enumerate(query_names))
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(one, tasks))
    else:
        rows = [one(t) for t in tasks]

    if config.benchmark:
        report = report_from_rows(rows)
        write_report(report, out)
        print(f"benchmark: median translation error "
              f"{report.median_translation}, "
              f"{report.n_failed} failed, load excluded ({load_seconds:.2f}s)")

    return 0 if all(r.failure is None for r in rows) else 1


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(config)
    except LocalizationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
