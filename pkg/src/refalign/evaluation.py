"""Point matching error for alignments and IoU/F1 metrics for change masks."""
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingAnnotationError, ShapeMismatchError, UnknownLabelError
from .geometry import INFINITY_EPS

STATIC, ANOMALY, DYNAMIC = 0, 1, 2
CLASS_NAMES = {STATIC: "static", ANOMALY: "anomaly", DYNAMIC: "dynamic"}
TASK_LABELS = {"binary": (STATIC, ANOMALY), "multiclass": (STATIC, ANOMALY, DYNAMIC)}

DEFAULT_SCENE = "default"


@dataclass
class CorrespondenceSet:
    """Annotated point pairs: ``src`` in the query image, ``dst`` in the reference."""

    src: np.ndarray
    dst: np.ndarray
    image_size: tuple = None  # (width, height); sets the at-infinity penalty

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.float64).reshape(-1, 2)
        self.dst = np.asarray(self.dst, dtype=np.float64).reshape(-1, 2)
        if len(self.src) != len(self.dst):
            raise ValueError("src and dst must have the same length")
        if len(self.src) == 0:
            raise ValueError("correspondence set is empty")
        if not (np.all(np.isfinite(self.src)) and np.all(np.isfinite(self.dst))):
            raise ValueError("correspondences must be finite")

    def __len__(self):
        return len(self.src)


def _default_penalty(cs):
    if cs.image_size is not None:
        return math.hypot(*cs.image_size)
    pts = np.vstack([cs.src, cs.dst])
    return float(np.hypot(*(pts.max(axis=0) - pts.min(axis=0)))) + 1.0


def point_errors(h, cs, infinity_penalty=None):
    """Per-pair distance between the warped source and its target."""
    h = np.asarray(h, dtype=np.float64)
    hom = cs.src @ h[:, :2].T + h[:, 2]
    w = hom[:, 2]
    finite = np.abs(w) >= INFINITY_EPS
    warped = hom[:, :2] / np.where(finite, w, 1.0)[:, None]
    err = np.linalg.norm(warped - cs.dst, axis=1)
    if not finite.all():
        penalty = _default_penalty(cs) if infinity_penalty is None else infinity_penalty
        err = np.where(finite, err, penalty)
    return err


def compute_pme(h, cs, infinity_penalty=None):
    """Mean L2 distance (pixels) between H-warped sources and their targets.

    Points mapped to infinity contribute ``infinity_penalty`` (default: the
    image diagonal).
    """
    return float(point_errors(h, cs, infinity_penalty).mean())


def scene_of(pair_id):
    """Scene name = first path component of the query image id."""
    return pair_id.split("/", 1)[0] if "/" in pair_id else DEFAULT_SCENE


@dataclass
class PmeTable:
    """Per-scene mean PME for each method, plus the mean over scenes."""

    scenes: list
    methods: dict  # method -> {scene: mean PME}
    averages: dict  # method -> mean of scene means
    per_pair: dict  # method -> {pair_id: PME}
    counts: dict  # scene -> number of evaluated pairs

    def format(self):
        width = max([len(m) for m in self.methods] + [6])
        col = max([len(s) + 2 for s in self.scenes] + [12])
        header = "method".ljust(width) + "".join(s.rjust(col) for s in self.scenes) + "average".rjust(col)
        lines = [header]
        for method, row in self.methods.items():
            cells = "".join(f"{row[s]:.4f}".rjust(col) if s in row else "n/a".rjust(col) for s in self.scenes)
            lines.append(method.ljust(width) + cells + f"{self.averages[method]:.4f}".rjust(col))
        lines.append("pairs".ljust(width) + "".join(str(self.counts[s]).rjust(col) for s in self.scenes))
        return "\n".join(lines)


def evaluate_alignment_run(results, annotations, scenes=None, infinity_penalty=None):
    """PME table over a run.

    ``results`` maps pair id -> object with ``composed_h`` and optionally
    ``pose_h`` or ``rotation_h`` (rotation-only ablation). ``scenes``
    optionally maps pair id -> scene name.
    """
    missing = [pid for pid in results if pid not in annotations]
    if missing:
        raise MissingAnnotationError(missing)
    per_pair = defaultdict(dict)
    for pid, res in results.items():
        cs = annotations[pid]
        per_pair["adaptive"][pid] = compute_pme(res.composed_h, cs, infinity_penalty)
        rot = getattr(res, "pose_h", None)
        if rot is None:
            rot = getattr(res, "rotation_h", None)
        if rot is not None:
            per_pair["rotation-only"][pid] = compute_pme(rot, cs, infinity_penalty)

    scene_map = {pid: (scenes or {}).get(pid, scene_of(pid)) for pid in results}
    scene_names = sorted(set(scene_map.values()))
    methods, averages = {}, {}
    for method, values in per_pair.items():
        grouped = defaultdict(list)
        for pid, v in values.items():
            grouped[scene_map[pid]].append(v)
        methods[method] = {s: float(np.mean(v)) for s, v in grouped.items()}
        averages[method] = float(np.mean(list(methods[method].values())))
    counts = {s: sum(1 for v in scene_map.values() if v == s) for s in scene_names}
    return PmeTable(scene_names, methods, averages, {k: dict(v) for k, v in per_pair.items()}, counts)


@dataclass
class MaskCounts:
    """Accumulated TP/FP/FN pixel counts per class label."""

    task: str
    tp: dict = field(default_factory=dict)
    fp: dict = field(default_factory=dict)
    fn: dict = field(default_factory=dict)

    def __add__(self, other):
        if other.task != self.task:
            raise ValueError("cannot add counts from different tasks")
        out = MaskCounts(self.task)
        for c in TASK_LABELS[self.task]:
            out.tp[c] = self.tp.get(c, 0) + other.tp.get(c, 0)
            out.fp[c] = self.fp.get(c, 0) + other.fp.get(c, 0)
            out.fn[c] = self.fn.get(c, 0) + other.fn.get(c, 0)
        return out


@dataclass
class MetricReport:
    task: str
    iou: dict
    f1: dict
    miou: float
    macro_f1: float
    counts: MaskCounts

    def format(self):
        lines = [f"task={self.task}"]
        for c in TASK_LABELS[self.task]:
            lines.append(
                f"{CLASS_NAMES[c]:<8} IoU={_fmt(self.iou[c])} F1={_fmt(self.f1[c])} "
                f"TP={self.counts.tp[c]} FP={self.counts.fp[c]} FN={self.counts.fn[c]}"
            )
        lines.append(f"mIoU={_fmt(self.miou)} macro-F1={_fmt(self.macro_f1)}")
        return "\n".join(lines)


def _fmt(x):
    return "n/a" if math.isnan(x) else f"{x:.4f}"


def _check_labels(mask, task, name):
    allowed = np.array(TASK_LABELS[task])
    bad = ~np.isin(mask, allowed)
    if bad.any():
        raise UnknownLabelError(f"{name} contains labels {sorted(np.unique(mask[bad]).tolist())} not valid for {task}")


def mask_counts(pred, gt, task="multiclass", roi=None, valid=None):
    """Per-class TP/FP/FN over pixels inside ``roi`` and ``valid`` (if given)."""
    if task not in TASK_LABELS:
        raise ValueError(f"unknown task {task!r}")
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"pred {pred.shape} vs gt {gt.shape}")
    _check_labels(pred, task, "prediction")
    _check_labels(gt, task, "ground truth")
    keep = np.ones(pred.shape, dtype=bool)
    for extra in (roi, valid):
        if extra is not None:
            extra = np.asarray(extra)
            if extra.shape != pred.shape:
                raise ShapeMismatchError(f"mask {extra.shape} vs labels {pred.shape}")
            keep &= extra.astype(bool)
    p = pred[keep]
    g = gt[keep]
    counts = MaskCounts(task)
    for c in TASK_LABELS[task]:
        pc = p == c
        gc = g == c
        counts.tp[c] = int(np.count_nonzero(pc & gc))
        counts.fp[c] = int(np.count_nonzero(pc & ~gc))
        counts.fn[c] = int(np.count_nonzero(~pc & gc))
    return counts


def report_from_counts(counts):
    iou, f1 = {}, {}
    for c in TASK_LABELS[counts.task]:
        tp, fp, fn = counts.tp[c], counts.fp[c], counts.fn[c]
        denom = tp + fp + fn
        # class absent from both pred and gt: undefined, excluded from means
        iou[c] = tp / denom if denom else math.nan
        f1[c] = 2 * tp / (2 * tp + fp + fn) if denom else math.nan
    scored = [c for c in TASK_LABELS[counts.task] if c != STATIC and not math.isnan(iou[c])]
    miou = float(np.mean([iou[c] for c in scored])) if scored else math.nan
    macro = float(np.mean([f1[c] for c in scored])) if scored else math.nan
    return MetricReport(counts.task, iou, f1, miou, macro, counts)


def mask_metrics(pred, gt, task="multiclass", roi=None, valid=None):
    """IoU/F1 per class; mIoU and macro-F1 over the non-static classes."""
    return report_from_counts(mask_counts(pred, gt, task, roi, valid))
