"""Plain-text file formats for runs, plus image and manifest I/O."""
import dataclasses
import datetime as _dt
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import BadQuaternionError, NonMonotonicTimestampError, ParseError
from .evaluation import CorrespondenceSet
from .features import OrbConfig
from .geometry import Intrinsics, Pose
from .pipeline import Frame, PipelineConfig, Trajectory
from .robust import RansacConfig, ScoreConfig

QUATERNION_TOL = 1e-3


def _is_path(source):
    if isinstance(source, Path):
        return True
    if not isinstance(source, str) or "\n" in source:
        return False
    try:
        return Path(source).is_file()
    except OSError:
        return False


def _lines(source):
    if _is_path(source):
        return Path(source).read_text().splitlines(), str(source)
    if isinstance(source, str):
        return source.splitlines(), None
    return list(source), None


def fmt_float(x):
    """Shortest repr that round-trips exactly."""
    return repr(float(x))


def parse_trajectory(source):
    """Parse ``timestamp tx ty tz qx qy qz qw image_id`` lines into a Trajectory.

    ``source`` is a path, a string of file contents, or an iterable of lines.
    Poses are camera-to-world; quaternions are scalar-last.
    """
    lines, path = _lines(source)
    frames = []
    prev_t = -math.inf
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 9:
            raise ParseError(f"expected 9 fields, got {len(parts)}", path, lineno)
        try:
            t, tx, ty, tz, qx, qy, qz, qw = (float(p) for p in parts[:8])
        except ValueError as exc:
            raise ParseError(f"bad number: {exc}", path, lineno) from None
        values = np.array([t, tx, ty, tz, qx, qy, qz, qw])
        if not np.all(np.isfinite(values)):
            raise ParseError("non-finite value", path, lineno)
        q = np.array([qx, qy, qz, qw])
        norm = np.linalg.norm(q)
        if abs(norm - 1.0) > QUATERNION_TOL:
            raise BadQuaternionError(f"quaternion norm {norm:.6g} deviates from 1", path, lineno)
        if t <= prev_t:
            raise NonMonotonicTimestampError(f"timestamp {t!r} not after {prev_t!r}", path, lineno)
        prev_t = t
        frames.append(Frame(t, Pose.from_quaternion(q / norm, [tx, ty, tz]), parts[8]))
    if not frames:
        raise ParseError("trajectory has no frames", path)
    return Trajectory(frames)


def format_trajectory(traj):
    out = ["# timestamp tx ty tz qx qy qz qw image_id"]
    for f in traj:
        q = f.pose.quaternion()
        nums = [f.timestamp, *f.pose.translation, *q]
        out.append(" ".join(fmt_float(v) for v in nums) + " " + f.image_id)
    return "\n".join(out) + "\n"


def write_trajectory(path, traj):
    Path(path).write_text(format_trajectory(traj))


_INTRINSIC_KEYS = ("fx", "fy", "cx", "cy")


def parse_intrinsics(source):
    """Key-value intrinsics (``fx = 500``, ``fx: 500`` or ``fx 500``)."""
    lines, path = _lines(source)
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, _, val = line.partition(sep)
                break
        else:
            key, _, val = line.partition(" ")
        key, val = key.strip().lower(), val.strip()
        try:
            values[key] = float(val)
        except ValueError:
            raise ParseError(f"bad value for {key!r}: {val!r}", path, lineno) from None
    missing = [k for k in _INTRINSIC_KEYS if k not in values]
    if missing:
        raise ParseError(f"missing intrinsics keys: {', '.join(missing)}", path)
    try:
        return Intrinsics(*(values[k] for k in _INTRINSIC_KEYS))
    except ValueError as exc:
        raise ParseError(str(exc), path) from None


def format_intrinsics(k):
    return "".join(f"{name} = {fmt_float(getattr(k, name))}\n" for name in _INTRINSIC_KEYS)


def write_intrinsics(path, k):
    Path(path).write_text(format_intrinsics(k))


def parse_correspondences(source, image_size=None):
    """CSV ``u_src,v_src,u_dst,v_dst`` (header line optional)."""
    lines, path = _lines(source)
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            if not rows and lineno == _first_content_line(lines):
                continue  # header
            raise ParseError(f"malformed row: {raw!r}", path, lineno) from None
        if len(vals) != 4 or not all(math.isfinite(v) for v in vals):
            raise ParseError(f"expected 4 finite values, got {raw!r}", path, lineno)
        rows.append(vals)
    if not rows:
        raise ParseError("no correspondences", path)
    arr = np.array(rows)
    return CorrespondenceSet(arr[:, :2], arr[:, 2:], image_size)


def _first_content_line(lines):
    for i, raw in enumerate(lines, start=1):
        if raw.split("#", 1)[0].strip():
            return i
    return 0


def format_correspondences(cs):
    out = ["u_src,v_src,u_dst,v_dst"]
    for (us, vs), (ud, vd) in zip(cs.src, cs.dst):
        out.append(",".join(fmt_float(v) for v in (us, vs, ud, vd)))
    return "\n".join(out) + "\n"


def write_correspondences(path, cs):
    Path(path).write_text(format_correspondences(cs))


def load_image(path):
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im).copy()


def save_image(path, arr):
    arr = np.asarray(arr)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, format="PNG")


def image_path(directory, image_id, suffix=".png"):
    p = Path(directory) / image_id
    return p if p.suffix else p.with_name(p.name + suffix)


# --- line-delimited key=value records ---------------------------------------


def format_homography(h):
    return ",".join(fmt_float(v) for v in np.asarray(h, dtype=np.float64).ravel())


def parse_homography(text):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 9:
        raise ParseError(f"homography needs 9 values, got {len(vals)}")
    return np.array(vals).reshape(3, 3)


def format_record(fields):
    parts = []
    for key, value in fields.items():
        if isinstance(value, float):
            value = fmt_float(value)
        value = str(value)
        if not value or any(c.isspace() for c in value) or "=" in key:
            raise ValueError(f"record field {key!r} has an unrepresentable value {value!r}")
        parts.append(f"{key}={value}")
    return " ".join(parts)


def parse_record(line):
    out = {}
    for token in line.split():
        key, sep, value = token.partition("=")
        if not sep:
            raise ParseError(f"bad record token {token!r}")
        out[key] = value
    return out


def header_line(kind):
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return f"# refalign {kind} generated {stamp}"


def write_records(path, kind, records):
    """Write a header line (the only non-deterministic content) then one record per line."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(header_line(kind) + "\n")
        for rec in records:
            fh.write(format_record(rec) + "\n")


def read_records(path):
    records = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            records.append(parse_record(line))
    return records


# --- run manifest ------------------------------------------------------------


def config_from_dict(d):
    d = dict(d or {})
    ransac = dict(d.pop("ransac", {}))
    ransac.setdefault("seed", 0)
    score = d.pop("score", {})
    orb = d.pop("orb", {})
    return PipelineConfig(
        ransac=RansacConfig(**ransac), score=ScoreConfig(**score), orb=OrbConfig(**orb), **d
    )


def config_to_dict(cfg):
    return dataclasses.asdict(cfg)


@dataclass
class RunManifest:
    reference_trajectory: Path
    query_trajectory: Path
    reference_intrinsics: Path
    query_intrinsics: Path
    reference_images: Path
    query_images: Path
    annotations: Path
    output: Path
    config: PipelineConfig


_PATH_KEYS = (
    "reference_trajectory",
    "query_trajectory",
    "reference_intrinsics",
    "query_intrinsics",
    "reference_images",
    "query_images",
)


def load_manifest(path):
    """JSON manifest; relative paths resolve against the manifest's directory."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read manifest: {exc}", str(path)) from None
    base = path.parent
    if "intrinsics" in raw:
        raw.setdefault("reference_intrinsics", raw["intrinsics"])
        raw.setdefault("query_intrinsics", raw["intrinsics"])
    resolved = {}
    for key in _PATH_KEYS:
        if key not in raw:
            raise ParseError(f"manifest missing {key!r}", str(path))
        p = base / raw[key]
        if not p.exists():
            raise ParseError(f"{key} path does not exist: {p}", str(path))
        resolved[key] = p
    ann = raw.get("annotations")
    resolved["annotations"] = base / ann if ann else None
    resolved["output"] = base / raw.get("output", "results")
    try:
        cfg = config_from_dict(raw.get("config"))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad config: {exc}", str(path)) from None
    return RunManifest(config=cfg, **resolved)


def write_manifest(path, fields, cfg):
    data = dict(fields)
    data["config"] = config_to_dict(cfg)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
