"""Command line entry point: ``refalign <subcommand> ...``."""
import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from urllib.parse import quote

import numpy as np

from . import io
from .errors import RefAlignError
from .evaluation import (
    TASK_LABELS,
    evaluate_alignment_run,
    mask_counts,
    report_from_counts,
    scene_of,
)
from .pipeline import AlignmentFailure, align_frame_pairs, associate_frames, select_strategy, translation_stats
from .synth import SynthConfig, generate_synthetic_pair, pair_configs

log = logging.getLogger("refalign")

SEED_ENV = "REFALIGN_SEED"


class UsageError(Exception):
    pass


def _resolve_seed(arg_seed, cfg):
    if arg_seed is not None:
        return cfg.with_seed(arg_seed)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return cfg.with_seed(int(env))
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return cfg


def _output_dir(args, manifest):
    out = Path(args.out) if getattr(args, "out", None) else manifest.output
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_run(manifest):
    ref = io.parse_trajectory(manifest.reference_trajectory)
    query = io.parse_trajectory(manifest.query_trajectory)
    k_ref = io.parse_intrinsics(manifest.reference_intrinsics)
    k_query = io.parse_intrinsics(manifest.query_intrinsics)
    return ref, query, k_ref, k_query


def cmd_pair(args):
    manifest = io.load_manifest(args.manifest)
    ref, query, _, _ = _load_run(manifest)
    pairs = associate_frames(query, ref)
    records = [
        {
            "pair": i,
            "query_id": p.query_id,
            "ref_id": p.ref_id,
            "translation_gap": p.translation_gap,
            "rotation_gap": p.rotation_gap,
            "strategy": select_strategy(p, manifest.config).value,
        }
        for i, p in enumerate(pairs)
    ]
    out = _output_dir(args, manifest)
    io.write_records(out / "pairs.txt", "pairs", records)
    hist = translation_stats(pairs, gate=manifest.config.translation_gate)
    text = hist.format()
    (out / "translation_histogram.txt").write_text(text + "\n")
    print(text)
    return 0


def _alignment_record(index, pair, res, ref_size):
    base = {"pair": index, "query_id": pair.query_id, "ref_id": pair.ref_id}
    if isinstance(res, AlignmentFailure):
        return {**base, "status": "failed", "reason": res.reason, "message": quote(res.message, safe="")}
    rec = {
        **base,
        "status": "ok",
        "strategy": res.strategy.value,
        "inliers": res.inliers,
        "score": res.score,
        "matches": res.n_matches,
        "width": ref_size[0],
        "height": ref_size[1],
        "h": io.format_homography(res.composed_h),
        "planar_h": io.format_homography(res.planar_h),
        "pose_h": io.format_homography(res.pose_h),
    }
    return rec


def cmd_align(args):
    manifest = io.load_manifest(args.manifest)
    cfg = _resolve_seed(args.seed, manifest.config)
    ref, query, k_ref, k_query = _load_run(manifest)
    pairs = associate_frames(query, ref)
    q_src = [io.image_path(manifest.query_images, p.query_id) for p in pairs]
    r_src = [io.image_path(manifest.reference_images, p.ref_id) for p in pairs]
    for path in q_src + r_src:
        if not path.is_file():
            raise RefAlignError(f"missing image {path}")
    results = align_frame_pairs(pairs, io.load_image, q_src, r_src, k_ref, k_query, cfg, workers=args.workers)

    out = _output_dir(args, manifest)
    records = []
    n_failed = 0
    for i, (pair, res) in enumerate(zip(pairs, results)):
        if isinstance(res, AlignmentFailure):
            n_failed += 1
            ref_size = None
        else:
            ref_size = (res.valid_mask.shape[1], res.valid_mask.shape[0])
            io.save_image(io.image_path(out / "warped", pair.query_id), res.warped)
            io.save_image(io.image_path(out / "masks", pair.query_id), res.valid_mask)
        records.append(_alignment_record(i, pair, res, ref_size))
    io.write_records(out / "alignments.txt", "alignments", records)
    print(f"aligned {len(pairs) - n_failed}/{len(pairs)} pairs -> {out / 'alignments.txt'}")
    if n_failed and args.strict:
        print(f"{n_failed} pair(s) failed (strict mode)", file=sys.stderr)
        return 1
    return 0


@dataclasses.dataclass
class _StoredAlignment:
    composed_h: np.ndarray
    pose_h: np.ndarray


def cmd_eval_pme(args):
    results_dir = Path(args.results)
    table_path = results_dir / "alignments.txt"
    if not table_path.is_file():
        raise UsageError(f"no alignments.txt in {results_dir}")
    results, annotations = {}, {}
    for rec in io.read_records(table_path):
        if rec.get("status") != "ok":
            continue
        pid = rec["query_id"]
        size = (int(rec["width"]), int(rec["height"]))
        results[pid] = _StoredAlignment(io.parse_homography(rec["h"]), io.parse_homography(rec["pose_h"]))
        ann = Path(args.annotations) / f"{pid}.csv"
        if ann.is_file():
            annotations[pid] = io.parse_correspondences(ann, image_size=size)
    if not results:
        raise RefAlignError("no successful alignments to evaluate")
    table = evaluate_alignment_run(results, annotations)
    text = table.format()
    out = Path(args.out) if args.out else results_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "pme_table.txt").write_text(text + "\n")
    records = []
    for method, per_pair in table.per_pair.items():
        for pid in sorted(per_pair):
            records.append({"kind": "pair", "method": method, "pair_id": pid, "pme": per_pair[pid]})
    for method, row in table.methods.items():
        for scene in table.scenes:
            if scene in row:
                records.append({"kind": "scene", "method": method, "scene": scene, "pme": row[scene]})
        records.append({"kind": "average", "method": method, "pme": table.averages[method]})
    io.write_records(out / "pme_records.txt", "pme", records)
    print(text)
    return 0


def _mask_files(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise UsageError(f"not a directory: {directory}")
    return {p.relative_to(directory).with_suffix("").as_posix(): p for p in sorted(directory.rglob("*.png"))}


def cmd_eval_mask(args):
    preds = _mask_files(args.pred)
    gts = _mask_files(args.gt)
    rois = _mask_files(args.roi) if args.roi else {}
    valids = _mask_files(args.valid) if args.valid else {}
    missing = sorted(set(gts) - set(preds))
    if missing:
        raise RefAlignError(f"{len(missing)} ground-truth mask(s) have no prediction, e.g. {missing[0]}")
    if not gts:
        raise RefAlignError("no ground-truth masks found")
    per_scene = {}
    for key, gt_path in gts.items():
        gt = io.load_image(gt_path)
        pred = io.load_image(preds[key])
        roi = io.load_image(rois[key]) > 0 if key in rois else None
        valid = io.load_image(valids[key]) > 0 if key in valids else None
        scene = scene_of(key)
        counts = mask_counts(pred, gt, args.task, roi, valid)
        per_scene[scene] = per_scene[scene] + counts if scene in per_scene else counts

    lines, records = [], []
    scene_reports = {s: report_from_counts(per_scene[s]) for s in sorted(per_scene)}
    for scene, rep in scene_reports.items():
        lines.append(f"[{scene}]")
        lines.append(rep.format())
        records.append({"kind": "scene", "scene": scene, "task": args.task, "miou": rep.miou, "macro_f1": rep.macro_f1})
    mious = [r.miou for r in scene_reports.values() if not np.isnan(r.miou)]
    f1s = [r.macro_f1 for r in scene_reports.values() if not np.isnan(r.macro_f1)]
    avg_miou = float(np.mean(mious)) if mious else float("nan")
    avg_f1 = float(np.mean(f1s)) if f1s else float("nan")
    lines.append(f"[average over scenes] mIoU={avg_miou:.4f} macro-F1={avg_f1:.4f}")
    records.append({"kind": "average", "task": args.task, "miou": avg_miou, "macro_f1": avg_f1})
    text = "\n".join(lines)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "mask_report.txt").write_text(text + "\n")
        io.write_records(out / "mask_records.txt", "mask-metrics", records)
    print(text)
    return 0


_SYNTH_EXTRA = ("gamma_range", "mixed", "pipeline")


def _synth_settings(path):
    raw = json.loads(Path(path).read_text()) if path else {}
    extra = {k: raw.pop(k) for k in _SYNTH_EXTRA if k in raw}
    if "annotation_grid" in raw:
        raw["annotation_grid"] = tuple(raw["annotation_grid"])
    try:
        base = SynthConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad synth config: {exc}") from None
    gamma_range = extra.get("gamma_range", (0.8, 1.25))
    return base, (tuple(gamma_range) if gamma_range else None), extra.get("mixed", True), extra.get("pipeline")


def write_benchmark(out_dir, base, n_pairs, gamma_range=(0.8, 1.25), mixed=True, pipeline=None, spacing=10.0):
    """Write a synthetic benchmark in the layout the other subcommands read."""
    from .geometry import Pose
    from .pipeline import Frame, Trajectory

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ref_frames, query_frames, truth = [], [], []
    k = base.intrinsics
    for i, cfg in enumerate(pair_configs(base, n_pairs, gamma_range, mixed)):
        ref_pose = Pose(np.eye(3), [spacing * i, 0.0, 0.0])
        pair = generate_synthetic_pair(cfg, ref_pose=ref_pose)
        image_id = f"{cfg.motion_model}/{i:04d}"
        io.save_image(io.image_path(out / "images" / "reference", image_id), pair.ref_img)
        io.save_image(io.image_path(out / "images" / "query", image_id), pair.query_img)
        ann = out / "annotations" / f"{image_id}.csv"
        ann.parent.mkdir(parents=True, exist_ok=True)
        io.write_correspondences(ann, pair.correspondences)
        ref_frames.append(Frame(float(i), ref_pose, image_id))
        query_frames.append(Frame(i + 0.5, pair.query_pose, image_id))
        truth.append({"pair": i, "query_id": image_id, "model": cfg.motion_model, "gamma": cfg.gamma, "h": io.format_homography(pair.true_h)})
    io.write_trajectory(out / "reference.txt", Trajectory(ref_frames))
    io.write_trajectory(out / "query.txt", Trajectory(query_frames))
    io.write_intrinsics(out / "intrinsics.txt", k)
    io.write_records(out / "ground_truth.txt", "ground-truth", truth)
    fields = {
        "reference_trajectory": "reference.txt",
        "query_trajectory": "query.txt",
        "intrinsics": "intrinsics.txt",
        "reference_images": "images/reference",
        "query_images": "images/query",
        "annotations": "annotations",
        "output": "results",
    }
    cfg = io.config_from_dict(pipeline) if pipeline else io.config_from_dict({"ransac": {"seed": base.seed}})
    io.write_manifest(out / "manifest.json", fields, cfg)
    return out / "manifest.json"


def cmd_synth(args):
    base, gamma_range, mixed, pipeline = _synth_settings(args.config)
    if args.seed is not None:
        base = dataclasses.replace(base, seed=args.seed)
    if args.pairs < 1:
        raise UsageError("--pairs must be at least 1")
    manifest = write_benchmark(args.out, base, args.pairs, gamma_range, mixed, pipeline)
    print(f"wrote {args.pairs} pairs -> {manifest}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="refalign", description="Reference/query image alignment toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pair", help="associate query frames with reference frames")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="output directory (default: manifest output)")
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("align", help="align every associated pair")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, help=f"RANSAC seed (overrides {SEED_ENV} and the manifest)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--strict", action="store_true", help="exit 1 if any pair fails")
    p.add_argument("--out", help="output directory (default: manifest output)")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("eval-pme", help="point matching error table")
    p.add_argument("--results", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", help="output directory (default: the results directory)")
    p.set_defaults(func=cmd_eval_pme)

    p = sub.add_parser("eval-mask", help="IoU/F1 for change masks")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--task", choices=sorted(TASK_LABELS), required=True)
    p.add_argument("--roi")
    p.add_argument("--valid", help="validity masks (e.g. from align) restricting evaluation")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_mask)

    p = sub.add_parser("synth", help="write a synthetic benchmark")
    p.add_argument("--config", help="JSON synth config")
    p.add_argument("--out", required=True)
    p.add_argument("--pairs", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"refalign: error: {exc}", file=sys.stderr)
        return 2
    except (RefAlignError, OSError, json.JSONDecodeError) as exc:
        print(f"refalign: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
