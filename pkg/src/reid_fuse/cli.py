"""Command-line entry point.

Every subcommand writes deterministic artifacts given its inputs and
--seed; failures exit nonzero with a structured error report on stderr.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import reports
from .core import EngineConfig, FusionParams, SampleId
from .errors import ReidFuseError
from .evaluation import model_compare, sample_queries, test_eval, validation_eval
from .fusion import K_GRID, LAMBDA_GRID, TAU_GRID, FusedScores, fuse_from_cosines
from .gallery import build_index
from .geometry import (
    export_slice_crops,
    lateral_segment,
    polygon_centroid,
    quarter_corners,
    slice_layout,
    swimming_direction,
)
from .ingest import (
    Dataset,
    EmbeddingSet,
    build_split,
    filter_detections,
    load_dataset,
    load_embeddings_dir,
    parse_tracks,
    write_dataset,
)
from .pipeline import (
    compute_scores,
    evaluate_test,
    evaluate_validation,
    fused_from_artifact,
    restrict_scores,
)
from .records import (
    ScoresArtifact,
    read_matches,
    read_scores,
    write_embeddings,
    write_matches,
    write_scores,
)
from .stats import BootstrapParams, bootstrap_ci, pairwise_matrix
from .synthbench import SynthSpec, generate, raw_detections


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ReidFuseError as exc:
        json.dump({"error": type(exc).__name__, "detail": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reid-fuse")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset in ingest formats")
    p.add_argument("--spec", required=True, help="INI file with a [synth] section")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("ingest", help="parse, filter, and materialize dataset splits")
    p.add_argument("--detections", required=True)
    p.add_argument("--embeddings", required=True, help="directory of .rfe files")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--matches", default=None, help="optional verified-match file to include")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("slice-geometry", help="compute slice layouts for every sample")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--images", default=None, help="image root referenced by descriptors")
    p.set_defaults(handler=cmd_slice_geometry)

    p = sub.add_parser("gallery", help="gallery index operations")
    gsub = p.add_subparsers(dest="gallery_command", required=True)
    g = gsub.add_parser("build", help="persist per-stream gallery indices")
    g.add_argument("--dataset", required=True)
    g.add_argument("--split", required=True)
    g.add_argument("--streams", default=None, help="comma list; default: configured fusion set")
    g.set_defaults(handler=cmd_gallery_build)

    p = sub.add_parser("retrieve", help="rank a gallery split for every query sample")
    p.add_argument("--dataset", required=True)
    p.add_argument("--query-split", required=True)
    p.add_argument("--gallery-split", required=True)
    _fusion_flags(p)
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--out", required=True, help="rankings file")
    p.add_argument("--scores-out", default=None, help="also write the score artifact")
    p.set_defaults(handler=cmd_retrieve)

    p = sub.add_parser("evaluate", help="mAP report from a score artifact")
    p.add_argument("--mode", choices=["val", "test"], required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--matches", default=None)
    p.add_argument("--per-id", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--full-gallery", action="store_true",
                   help="val mode: rank against the full split, not the sampled subset")
    p.add_argument("--no-sampling", action="store_true",
                   help="test mode: use every query row instead of sampling per id")
    p.add_argument("--model", default="ensemble")
    _fusion_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("bootstrap", help="CIs and pairwise comparisons over reports")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--B", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--n-comparisons", type=int, default=None,
                   help="Bonferroni divisor; default: number of pairwise tests")
    p.add_argument("--unit", choices=["query", "trajectory"], default="query")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true", help="also write a .json twin")
    p.set_defaults(handler=cmd_bootstrap)

    p = sub.add_parser("sweep", help="mAP across fusion-parameter grids")
    p.add_argument("--scores", required=True)
    p.add_argument("--mode", choices=["val", "test"], default="test")
    p.add_argument("--matches", default=None)
    p.add_argument("--per-id", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda-grid", default=",".join(str(v) for v in LAMBDA_GRID))
    p.add_argument("--tau-grid", default=",".join(str(v) for v in TAU_GRID))
    p.add_argument("--k-grid", default=",".join(str(v) for v in K_GRID))
    _fusion_flags(p)
    p.add_argument("--out", required=True, help="output file prefix")
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("holdout", help="drop streams from the ensemble one at a time")
    p.add_argument("--scores", required=True)
    p.add_argument("--mode", choices=["val", "test"], default="test")
    p.add_argument("--matches", default=None)
    p.add_argument("--per-id", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drop", default=None, help="single stream; default: each in turn")
    _fusion_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_holdout)

    p = sub.add_parser("compare", help="side-by-side mAP table for several models")
    p.add_argument("--names", required=True, help="comma list of model labels")
    p.add_argument("--val-reports", default=None, help="comma list of report files")
    p.add_argument("--test-reports", default=None)
    p.add_argument("--B", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("serve", help="run the match-verification HTTP service")
    p.add_argument("--dataset", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--images", default=None)
    p.add_argument("--frontend", default=None, help="built frontend directory to serve at /")
    p.set_defaults(handler=cmd_serve)

    return parser


def _fusion_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--streams", default=None,
                   help="comma list; default: configured fusion set")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--k", type=int, default=None)


def _fusion_from_args(base: FusionParams, args) -> FusionParams:
    params = base
    if getattr(args, "streams", None):
        params = params.replace(streams=tuple(s.strip() for s in args.streams.split(",")))
    if getattr(args, "lam", None) is not None:
        params = params.replace(lam=args.lam)
    if getattr(args, "tau", None) is not None:
        params = params.replace(tau=args.tau)
    if getattr(args, "k", None) is not None:
        params = params.replace(k=args.k)
    return params


# --- handlers ---

def cmd_synth(args) -> int:
    spec = _read_synth_spec(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    dataset = generate(spec)

    out = Path(args.out)
    (out / "embeddings").mkdir(parents=True, exist_ok=True)
    dataset.config.dump(out / "config.ini")
    with open(out / "detections.txt", "w", encoding="utf-8") as fh:
        from .records import format_detection_line

        for det in raw_detections(dataset):
            fh.write(format_detection_line(det) + "\n")
    for stream in dataset.embeddings.streams():
        write_embeddings(out / "embeddings" / f"{stream}.rfe", stream,
                         dataset.embeddings.stream_vectors(stream))
    write_matches(out / "matches.txt", dataset.matches)
    print(f"synth dataset: {len(dataset.samples)} samples, "
          f"{len(dataset.matches)} ground-truth matches -> {out}")
    return 0


def _read_synth_spec(path) -> SynthSpec:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)
    sec = parser["synth"]
    kwargs: dict = {}
    for key in ("n_ids", "images_per_id", "n_cameras", "dim", "seed"):
        if key in sec:
            kwargs[key] = sec.getint(key)
    for key in ("identity_scale", "sigma_traj", "sigma_obs", "corruption"):
        if key in sec:
            kwargs[key] = sec.getfloat(key)
    if "streams" in sec:
        kwargs["streams"] = tuple(s.strip() for s in sec["streams"].split(","))
    return SynthSpec(**kwargs)


def cmd_ingest(args) -> int:
    config = EngineConfig.load(args.config)
    tracks = parse_tracks(args.detections)
    kept = filter_detections(tracks, config.filter)
    samples = build_split(kept, list(config.splits), config.filter)

    all_embeddings = load_embeddings_dir(args.embeddings, config.registry)
    wanted = {record.sample_id for record in samples}
    embeddings = EmbeddingSet(config.registry)
    for stream in all_embeddings.streams():
        for sid, vec in all_embeddings.stream_vectors(stream).items():
            if sid in wanted:
                embeddings.add(sid, stream, vec, normalize=False)

    matches = read_matches(args.matches) if args.matches else []
    dataset = Dataset(config=config, samples=samples, embeddings=embeddings, matches=matches)
    write_dataset(args.out, dataset)
    by_split: dict[str, int] = {}
    for record in samples:
        by_split[record.split] = by_split.get(record.split, 0) + 1
    print(f"ingested {len(tracks)} tracks -> {len(kept)} kept -> "
          f"{len(samples)} samples {by_split} -> {args.out}")
    return 0


def cmd_slice_geometry(args) -> int:
    dataset = load_dataset(args.dataset)
    params = dataset.config.geometry
    lines = []
    skipped = 0
    for record in sorted(dataset.samples, key=lambda r: r.sample_id):
        det = record.detection
        sid = det.sample_id
        if "head" not in det.part_bboxes or "tail_fin" not in det.part_bboxes:
            skipped += 1
            continue
        if not {"Q1", "Q2"} <= set(det.quarter_masks):
            skipped += 1
            continue
        try:
            direction = swimming_direction(det.part_bboxes["head"], det.part_bboxes["tail_fin"])
            corners = {
                kind: quarter_corners(det.quarter_masks[kind], direction, params)
                for kind in ("Q1", "Q2")
            }
            centroids = {kind: polygon_centroid(det.quarter_masks[kind]) for kind in ("Q1", "Q2")}
            for kind in ("Q1", "Q2"):
                seg = lateral_segment(corners["Q1"], corners["Q2"],
                                      centroids["Q1"], centroids["Q2"], kind)
                layout = slice_layout(det.quarter_masks[kind], seg, direction, params,
                                      quarter_kind=kind)
                image = _image_ref(args.images, sid)
                crops = export_slice_crops(layout, image)
                slices = " ".join(f"{lo!r}:{hi!r}" for lo, hi in layout.slice_intervals)
                lines.append(
                    f"camera={sid.camera_id};traj={sid.trajectory_id};frame={sid.frame_index};"
                    f"quarter={kind};angle={layout.rotation.angle!r};"
                    f"pivot={layout.rotation.pivot[0]!r},{layout.rotation.pivot[1]!r};"
                    f"length={layout.length!r};slices={slices};"
                    f"band={layout.band[0]!r},{layout.band[1]!r};"
                    f"image={crops[0].image_path}"
                )
        except ReidFuseError as exc:
            skipped += 1
            print(f"skipping {sid}: {exc}", file=sys.stderr)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    print(f"wrote {len(lines)} layouts ({skipped} samples skipped) -> {args.out}")
    return 0


def _image_ref(images_root, sid: SampleId) -> str:
    if not images_root:
        return ""
    return str(Path(images_root) / f"cam{sid.camera_id}" / f"traj{sid.trajectory_id}"
               / f"frame{sid.frame_index}.png")


def cmd_gallery_build(args) -> int:
    dataset = load_dataset(args.dataset)
    streams = (tuple(s.strip() for s in args.streams.split(","))
               if args.streams else dataset.config.fusion.streams)
    split_ids = dataset.split_ids(args.split)
    out_dir = Path(args.dataset) / "galleries" / args.split
    out_dir.mkdir(parents=True, exist_ok=True)
    for stream in streams:
        index = build_index(dataset.embeddings, split_ids, stream)
        vectors = {sid: index.vectors[i] for i, sid in enumerate(index.sample_ids)}
        write_embeddings(out_dir / f"{stream}.rfe", stream, vectors)
        print(f"gallery {args.split}/{stream}: {len(index)} vectors")
    return 0


def cmd_retrieve(args) -> int:
    dataset = load_dataset(args.dataset)
    params = _fusion_from_args(dataset.config.fusion, args)
    artifact = compute_scores(dataset, args.query_split, args.gallery_split, params)
    fused = fused_from_artifact(artifact, params)

    with open(args.out, "w", encoding="utf-8") as fh:
        for i, qid in enumerate(fused.query_ids):
            order = np.argsort(-fused.values[i], kind="stable")[:args.topk]
            for rank, col in enumerate(order, start=1):
                gid = fused.gallery_ids[int(col)]
                breakdown = "|".join(
                    f"{stream}:{fused.scaled[stream][i, int(col)]!r}"
                    f":{fused.reciprocal[stream][i, int(col)]!r}"
                    for stream in params.streams
                )
                fh.write(
                    f"query={qid};rank={rank};gallery={gid};"
                    f"S={fused.values[i, int(col)]!r};breakdown={breakdown}\n"
                )
    if args.scores_out:
        write_scores(args.scores_out, artifact)
    print(f"retrieved top-{args.topk} for {len(fused.query_ids)} queries -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    artifact = read_scores(args.scores)
    params = _fusion_from_args(artifact.fusion, args)
    if args.mode == "val":
        report = evaluate_validation(artifact, per_id=args.per_id, seed=args.seed,
                                     full_gallery=args.full_gallery,
                                     model=args.model, params=params)
    else:
        if not args.matches:
            raise ReidFuseError("test mode needs --matches")
        matches = read_matches(args.matches)
        report = evaluate_test(artifact, matches, per_id=args.per_id, seed=args.seed,
                               model=args.model, params=params,
                               sample=not args.no_sampling)
    reports.write_report(args.out, report)
    print(f"{args.mode} mAP={report.map:.4f} over {len(report.per_query)} queries -> {args.out}")
    return 0


def cmd_bootstrap(args) -> int:
    loaded = [reports.read_report(path) for path in args.reports]
    names = []
    for path, report in zip(args.reports, loaded):
        name = report.model or Path(path).stem
        if name in names:  # e.g. the same model evaluated on two splits
            name = f"{name}:{Path(path).stem}"
        while name in names:
            name += "'"
        names.append(name)
    n_pairs = len(loaded) * (len(loaded) - 1) // 2
    n_comparisons = args.n_comparisons if args.n_comparisons else max(1, n_pairs)
    params = BootstrapParams(B=args.B, seed=args.seed, alpha=args.alpha,
                             n_comparisons=n_comparisons, unit=args.unit)

    out_lines = []
    payload: dict = {"B": args.B, "seed": args.seed, "alpha": args.alpha,
                     "n_comparisons": n_comparisons, "models": {}}
    for name, report in zip(names, loaded):
        groups = [sid.trajectory for sid in report.query_ids()]
        point, lo, hi = bootstrap_ci(report.aps, params, groups=groups)
        out_lines.append(reports.ci_lines(name, point, lo, hi).rstrip("\n"))
        payload["models"][name] = {"map": point, "ci": [lo, hi]}

    results = []
    if len(loaded) > 1:
        named = {name: report.aps for name, report in zip(names, loaded)}
        ids = {name: report.query_ids() for name, report in zip(names, loaded)}
        groups = [sid.trajectory for sid in loaded[0].query_ids()]
        results = pairwise_matrix(named, params, query_ids=ids,
                                  threads=args.threads, groups=groups)
        out_lines.append(reports.pairwise_lines(results).rstrip("\n"))
        out_lines.append("")
        out_lines.append(reports.pairwise_table(results, names).rstrip("\n"))
        payload["pairwise"] = [
            {"a": r.model_a, "b": r.model_b, "delta": r.delta_map,
             "p": r.p_value, "significant": r.significant}
            for r in results
        ]

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out_lines) + "\n")
    if args.json:
        with open(str(args.out) + ".json", "w", encoding="utf-8") as fh:
            fh.write(reports.to_json(payload))
    print(f"bootstrap over {len(loaded)} report(s), {len(results)} pairwise tests -> {args.out}")
    return 0


def _grid(text: str, cast):
    return tuple(cast(v) for v in text.split(",") if v.strip()) if text else ()


def _sweep_evaluator(artifact: ScoresArtifact, args, params: FusionParams):
    """Fix the query sampling once, return (cosines, mAP-of-values fn)."""
    if args.mode == "val":
        query_set = sample_queries(artifact.query_ids, per_id=args.per_id, seed=args.seed)
        sub = restrict_scores(artifact, query_set.queries, query_set.gallery_ids)

        def evaluate(values: np.ndarray) -> float:
            fused = FusedScores(values=values, params=params,
                                query_ids=sub.query_ids, gallery_ids=sub.gallery_ids)
            return validation_eval(fused, query_set).map

        return sub.cosines, evaluate

    if not args.matches:
        raise ReidFuseError("test mode needs --matches")
    matches = read_matches(args.matches)
    query_set = sample_queries(artifact.query_ids, per_id=args.per_id, seed=args.seed)
    sub = restrict_scores(artifact, query_set.queries)

    def evaluate(values: np.ndarray) -> float:
        fused = FusedScores(values=values, params=params,
                            query_ids=sub.query_ids, gallery_ids=sub.gallery_ids)
        return test_eval(fused, matches).map

    return sub.cosines, evaluate


def cmd_sweep(args) -> int:
    from .fusion import sweep as run_sweep

    artifact = read_scores(args.scores)
    params = _fusion_from_args(artifact.fusion, args)
    cosines, evaluate = _sweep_evaluator(artifact, args, params)
    tables = run_sweep(
        cosines, params, evaluate,
        lambda_grid=_grid(args.lambda_grid, float),
        tau_grid=_grid(args.tau_grid, float),
        k_grid=_grid(args.k_grid, int),
    )
    prefix = Path(args.out)
    payload = {}
    for name, rows in tables.items():
        path = prefix.with_name(prefix.name + f".{name}.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(reports.sweep_table(name, rows))
        payload[name] = [{"value": v, "map": m} for v, m in rows]
        print(f"sweep {name}: {len(rows)} rows -> {path}")
    if args.json:
        with open(str(prefix) + ".json", "w", encoding="utf-8") as fh:
            fh.write(reports.to_json(payload))
    return 0


def cmd_holdout(args) -> int:
    artifact = read_scores(args.scores)
    params = _fusion_from_args(artifact.fusion, args)
    cosines, evaluate = _sweep_evaluator(artifact, args, params)

    def fused_map(p: FusionParams) -> float:
        return evaluate(fuse_from_cosines(cosines, p).values)

    drops = [args.drop] if args.drop else list(params.streams)
    rows: list[tuple[str, float]] = []
    for stream in drops:
        if stream not in params.streams:
            raise ReidFuseError(f"stream {stream!r} is not in the configured set")
        remaining = tuple(s for s in params.streams if s != stream)
        if not remaining:
            raise ReidFuseError("dropping the only stream leaves nothing to fuse")
        rows.append((stream, fused_map(params.replace(streams=remaining))))
    rows.append(("none", fused_map(params)))

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(reports.holdout_table(rows))
    if args.json:
        with open(str(args.out) + ".json", "w", encoding="utf-8") as fh:
            fh.write(reports.to_json([{"holdout": s, "map": m} for s, m in rows]))
    print(f"holdout table ({len(rows)} rows) -> {args.out}")
    return 0


def cmd_compare(args) -> int:
    names = [n.strip() for n in args.names.split(",")]
    grouped: dict[str, dict] = {name: {} for name in names}
    for mode, paths in (("val", args.val_reports), ("test", args.test_reports)):
        if not paths:
            continue
        files = [p.strip() for p in paths.split(",")]
        if len(files) != len(names):
            raise ReidFuseError(f"{mode}: {len(files)} reports for {len(names)} names")
        for name, path in zip(names, files):
            grouped[name][mode] = reports.read_report(path)

    params = BootstrapParams(B=args.B, seed=args.seed)

    def ci_fn(aps):
        _, lo, hi = bootstrap_ci(aps, params)
        return (lo, hi)

    rows = model_compare(grouped, ci_fn=ci_fn)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(reports.comparison_table(rows))
    if args.json:
        with open(str(args.out) + ".json", "w", encoding="utf-8") as fh:
            fh.write(reports.to_json(rows))
    print(f"comparison table ({len(rows)} models) -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    from .service import run_server

    run_server(args.dataset, port=args.port, host=args.host,
               images_dir=args.images, frontend_dir=args.frontend)
    return 0


if __name__ == "__main__":
    sys.exit(main())
