"""Command-line interface.

Exit codes: 0 success, 2 usage or format error, 3 domain error (degenerate
pool, size guard exceeded).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench, featgeom, io, selector
from .pool import (
    STRATEGIES,
    DegeneratePoolError,
    DistanceConfig,
    InvalidInputError,
    Pool,
    SelectionConfig,
    SimilarityConfig,
    TooLargeError,
    validate_pool,
)

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN = 0, 2, 3
METRIC_FLAGS = {"sq-euclidean": "squared-euclidean", "cosine": "cosine"}


class UsageError(Exception):
    pass


def _dmax_arg(text: str):
    if text == "exact":
        return None
    if text.startswith("sample:"):
        try:
            k = int(text.split(":", 1)[1])
        except ValueError:
            k = 0
        if k >= 1:
            return k
    raise argparse.ArgumentTypeError("expected 'exact' or 'sample:K' with K >= 1")


def _add_distance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--metric", choices=sorted(METRIC_FLAGS), default="sq-euclidean")
    p.add_argument("--agg", choices=["max", "avg"], default="max")
    p.add_argument("--mode", choices=["object", "plain"], default="object")
    p.add_argument("--no-image-features", action="store_true")
    p.add_argument("--dmax", type=_dmax_arg, default=None, metavar="exact|sample:K")
    p.add_argument("--seed", type=int, default=0)


def _add_similarity_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--similarity", choices=["gaussian", "linear"], default="gaussian")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--sim-matrix", type=Path, default=None, help=argparse.SUPPRESS)


def _distance_config(args) -> DistanceConfig:
    return DistanceConfig(
        metric=METRIC_FLAGS[args.metric],
        aggregation=args.agg,
        use_image_features=not args.no_image_features,
        mode=args.mode,
        dmax_pairs=args.dmax,
        dmax_seed=args.seed,
    )


def _load_pool(path: Path) -> Pool:
    pool = io.read_pool(path)
    problems = validate_pool(pool)
    if problems:
        lines = "; ".join(f"{v.sample_id}.{v.field}: {v.message}" for v in problems[:10])
        raise InvalidInputError(f"{path}: invalid pool ({len(problems)} violations): {lines}")
    return pool


def _matrix_provider(args, pool: Pool):
    if args.sim_matrix is None:
        return None
    m = io.read_sim_matrix(args.sim_matrix)
    if m.shape != (len(pool), len(pool)):
        raise InvalidInputError(f"similarity matrix shape {m.shape} does not match pool size {len(pool)}")
    return selector.MatrixSimilarity(m)


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        io.atomic_write(out, text)


def cmd_select(args) -> int:
    pool = _load_pool(args.pool)
    cfg = SelectionConfig(
        strategy=args.strategy,
        budget=args.budget,
        similarity=SimilarityConfig(kind=args.similarity, alpha=args.alpha),
        distance=_distance_config(args),
        clamp_scores=args.clamp,
        seed=args.seed,
    )
    result = selector.select(pool, cfg, sim=_matrix_provider(args, pool))
    report = io.selection_report(result, cfg.strategy, cfg.budget, cfg.similarity.alpha, cfg.clamp_scores, cfg.distance)
    _emit(io.format_json(report), args.out)
    return EXIT_OK


def _detections(path: Path) -> tuple[list, dict]:
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid JSON ({exc.msg})") from exc
    if isinstance(d, list):
        return d, {}
    if isinstance(d, dict) and isinstance(d.get("detections", []), list):
        return d.get("detections", []), d
    raise InvalidInputError(f"{path}: expected a list of detections or an object with 'detections'")


def cmd_roi_extract(args) -> int:
    fmap = io.read_nfm1(args.feature_map)
    dets, meta = _detections(args.detections)
    objects, per_object = [], []
    for det in dets:
        bbox = featgeom.BoundingBox(*io._floats(det.get("bbox"), "bbox"))
        rect = featgeom.roi_to_feature_coords(bbox, fmap)
        obj = {"bbox": bbox.as_list(), "feature": list(featgeom.roi_gap(fmap, rect)), "score": float(det.get("score", 1.0))}
        if det.get("class") is not None:
            obj["class"] = det["class"]
        objects.append(obj)
        if det.get("class_probs") is not None:
            per_object.append(selector.least_confidence(det["class_probs"]))
        elif "score" in det:
            per_object.append(1.0 - float(det["score"]))
    line = {"id": args.id, "image_feature": list(featgeom.image_feature_from_map(fmap)), "objects": objects}
    if meta.get("class_probs") is not None:
        line["class_probs"] = list(io._floats(meta["class_probs"], "class_probs"))
    if "uncertainty" in meta:
        line["uncertainty"] = float(meta["uncertainty"])
    elif "class_probs" in line:
        line["uncertainty"] = selector.least_confidence(line["class_probs"])
    elif per_object:
        agg = max if args.uncertainty_agg == "max" else (lambda v: sum(v) / len(v))
        line["uncertainty"] = float(agg(per_object))
    else:
        line["uncertainty"] = 0.0
    # normalize through the pool model so the line is in canonical form
    sample = io.sample_from_dict(line)
    _emit(io.dumps(io.sample_to_dict(sample)) + "\n", args.out)
    return EXIT_OK


def cmd_distances(args) -> int:
    pool = _load_pool(args.pool)
    n = len(pool)
    if n < 2:
        raise DegeneratePoolError("pool has fewer than two samples; no pairs to export")
    if n > args.cap:
        raise TooLargeError(
            f"pool of {n} samples exceeds the full-matrix cap of {args.cap}; "
            "use sampled d_max (--dmax sample:K) with the select command instead"
        )
    engine = featgeom.DistanceEngine(pool, _distance_config(args))
    rows, best = [], 0.0
    for a in range(n - 1):
        d = engine.distances_to(a, range(a + 1, n))
        best = max(best, float(d.max()))
        rows.extend((pool[a].id, pool[b].id, float(v)) for b, v in zip(range(a + 1, n), d.tolist()))
    _emit(io.format_csv(["id_a", "id_b", "distance"], rows, footer=f"#d_max,{best!r}"), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    pool = _load_pool(args.pool)
    sim = _matrix_provider(args, pool)
    if sim is None:
        cfg = SelectionConfig(
            "noris-sum", args.budget, SimilarityConfig(kind=args.similarity, alpha=args.alpha), _distance_config(args)
        )
        sim = selector.build_similarity(pool, cfg)
    best_ids, best_val = selector.brute_force_optimum(pool, args.budget, sim, args.objective)
    if args.objective == "sum":
        greedy = selector.noris_sum_select(pool, args.budget, sim)
        greedy_val = selector.objective_sum(greedy.ids, pool, sim)
    else:
        greedy = selector.noris_max_select(pool, args.budget, sim)
        greedy_val = selector.objective_max(greedy.ids, pool, sim)
    if best_val != 0:
        ratio = greedy_val / best_val
    else:
        ratio = 1.0 if greedy_val == 0 else None
    out = {
        "objective": args.objective,
        "budget": args.budget,
        "best_subset": best_ids,
        "best_value": best_val,
        "greedy_subset": greedy.ids,
        "greedy_value": greedy_val,
        "ratio": ratio,
    }
    _emit(io.format_json(out), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        raw = json.loads(args.spec.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{args.spec}: invalid JSON ({exc.msg})") from exc
    spec = bench.SimExperiment.from_dict(raw)
    reports = bench.run_experiment(spec)
    rows = [[r.row()[c] for c in bench.REPORT_COLUMNS] for r in reports]
    _emit(io.format_csv(bench.REPORT_COLUMNS, rows), args.out)
    if args.json is not None:
        per_seed = {}
        for r in reports:
            row = r.row()
            per_seed.setdefault(str(r.seed), []).append({k: v for k, v in row.items() if k != "seed"})
        io.atomic_write(args.json, io.format_json(per_seed))
    return EXIT_OK


def cmd_validate(args) -> int:
    pool = io.read_pool(args.pool)
    problems = validate_pool(pool)
    for v in problems:
        print(f"{v.sample_id}\t{v.field}\t{v.message}")
    return EXIT_USAGE if problems else EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="noris", description="Redundancy-aware batch active-learning selection.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("select", help="select a labeling batch from a pool")
    p.add_argument("--pool", type=Path, required=True)
    p.add_argument("--strategy", choices=list(STRATEGIES), required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--clamp", action="store_true", help="clamp working scores at zero")
    p.add_argument("--out", type=Path, required=True)
    _add_similarity_flags(p)
    _add_distance_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("roi-extract", help="pool line for one image from its feature map and detections")
    p.add_argument("--feature-map", type=Path, required=True)
    p.add_argument("--detections", type=Path, required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--uncertainty-agg", choices=["mean", "max"], default="mean")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_roi_extract)

    p = sub.add_parser("distances", help="export all pairwise distances and d_max as CSV")
    p.add_argument("--pool", type=Path, required=True)
    p.add_argument("--cap", type=int, default=5000)
    p.add_argument("--out", type=Path, default=None)
    _add_distance_flags(p)
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("oracle", help="exhaustive optimum vs greedy on a small pool")
    p.add_argument("--pool", type=Path, required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--objective", choices=["sum", "max"], default="sum")
    p.add_argument("--out", type=Path, default=None)
    _add_similarity_flags(p)
    _add_distance_flags(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("simulate", help="run a synthetic strategy comparison")
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--json", type=Path, default=None, help="also write per-seed JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="report pool invariant violations")
    p.add_argument("--pool", type=Path, required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (DegeneratePoolError, TooLargeError) as exc:
        print(f"noris: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (InvalidInputError, OSError) as exc:
        print(f"noris: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
