"""File formats: JSONL pools, NFM1 feature maps, selection reports, CSV tables.

Floats are written with ``repr`` (shortest string that reads back to the same
double). Every output file is written to a temporary sibling, then renamed.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .featgeom import FeatureMap
from .pool import (
    BoundingBox,
    DistanceConfig,
    InvalidInputError,
    ObjectInstance,
    Pool,
    Sample,
    SelectionResult,
)

NFM1_MAGIC = b"NFM1"
_NFM1_HEADER = struct.Struct("<4s5I")


def atomic_write(path, data) -> None:
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    # allow_nan=False: non-finite numbers are a format error, not "NaN" tokens
    return json.dumps(obj, sort_keys=True, allow_nan=False, ensure_ascii=False)


# -- pools -------------------------------------------------------------------


def _floats(values, what: str) -> tuple:
    if not isinstance(values, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
        raise InvalidInputError(f"{what} must be a list of numbers")
    return tuple(float(v) for v in values)


def sample_from_dict(d: dict, uncertainty_agg: str = "mean") -> Sample:
    from .selector import least_confidence

    if not isinstance(d, dict):
        raise InvalidInputError("pool line must be a JSON object")
    try:
        sid = d["id"]
        feat = _floats(d["image_feature"], "image_feature")
    except KeyError as exc:
        raise InvalidInputError(f"pool line missing field {exc}") from exc
    if not isinstance(sid, str):
        raise InvalidInputError("id must be a string")
    objects = []
    for o in d.get("objects", []):
        bbox = _floats(o.get("bbox"), "bbox")
        if len(bbox) != 4:
            raise InvalidInputError("bbox must be [x, y, w, h]")
        objects.append(
            ObjectInstance(
                BoundingBox(*bbox),
                _floats(o.get("feature"), "object feature"),
                float(o.get("score", 1.0)),
                o.get("class"),
            )
        )
    probs = d.get("class_probs")
    probs = _floats(probs, "class_probs") if probs is not None else None
    if "uncertainty" in d:
        sigma = d["uncertainty"]
        if isinstance(sigma, bool) or not isinstance(sigma, (int, float)):
            raise InvalidInputError("uncertainty must be a number")
        sigma = float(sigma)
    elif probs is not None:
        sigma = least_confidence(probs)
    else:
        raise InvalidInputError(f"sample {sid!r} needs uncertainty or class_probs")
    return Sample(sid, sigma, feat, tuple(objects), probs)


def sample_to_dict(s: Sample) -> dict:
    d = {
        "id": s.id,
        "uncertainty": s.uncertainty,
        "image_feature": list(s.image_feature),
        "objects": [],
    }
    for o in s.objects:
        od = {"bbox": o.bbox.as_list(), "feature": list(o.feature), "score": o.detection_score}
        if o.class_label is not None:
            od["class"] = o.class_label
        d["objects"].append(od)
    if s.class_probs is not None:
        d["class_probs"] = list(s.class_probs)
    return d


def parse_pool(text: str) -> Pool:
    samples = []
    for lineno, line in enumerate(text.split("\n"), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        try:
            samples.append(sample_from_dict(d))
        except InvalidInputError as exc:
            raise InvalidInputError(f"line {lineno}: {exc}") from exc
    return Pool(samples)


def read_pool(path) -> Pool:
    try:
        text = Path(path).read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidInputError(f"{path}: pool file is not UTF-8") from exc
    return parse_pool(text)


def format_pool(pool: Pool) -> str:
    return "".join(dumps(sample_to_dict(s)) + "\n" for s in pool.samples)


def write_pool(pool: Pool, path) -> None:
    atomic_write(path, format_pool(pool))


# -- NFM1 feature maps ---------------------------------------------------------


def encode_nfm1(fmap: FeatureMap) -> bytes:
    h, w, c = fmap.data.shape
    header = _NFM1_HEADER.pack(NFM1_MAGIC, h, w, c, fmap.image_height, fmap.image_width)
    return header + np.ascontiguousarray(fmap.data, dtype="<f4").tobytes()


def decode_nfm1(raw: bytes) -> FeatureMap:
    if len(raw) < _NFM1_HEADER.size:
        raise InvalidInputError(f"NFM1 file too short: {len(raw)} bytes, header needs {_NFM1_HEADER.size}")
    magic, h, w, c, ih, iw = _NFM1_HEADER.unpack_from(raw)
    if magic != NFM1_MAGIC:
        raise InvalidInputError(f"bad NFM1 magic {magic!r}")
    expected = _NFM1_HEADER.size + 4 * h * w * c
    if len(raw) != expected:
        raise InvalidInputError(f"NFM1 length mismatch: header implies {expected} bytes, file has {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_NFM1_HEADER.size).reshape(h, w, c)
    return FeatureMap(data, ih, iw)


def read_nfm1(path) -> FeatureMap:
    return decode_nfm1(Path(path).read_bytes())


def write_nfm1(fmap: FeatureMap, path) -> None:
    atomic_write(path, encode_nfm1(fmap))


# -- reports -----------------------------------------------------------------


def selection_report(
    result: SelectionResult,
    strategy: str,
    budget: int,
    alpha: float,
    clamp: bool,
    distance: DistanceConfig,
) -> dict:
    return {
        "strategy": strategy,
        "budget": budget,
        "alpha": alpha,
        "lambda": result.lambda_used,
        "d_max": result.d_max_used,
        "clamp": clamp,
        "distance": distance.to_dict(),
        "selected": [{"id": s.id, "step": s.step, "marginal_score": s.marginal_score} for s in result.selected],
        "objective_sum": result.objective_sum,
        "objective_max": result.objective_max,
    }


def format_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def format_csv(header: Iterable[str], rows: Iterable[Iterable], footer: Optional[str] = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    if footer is not None:
        buf.write(footer + "\n")
    return buf.getvalue()


def read_sim_matrix(path) -> np.ndarray:
    """JSON array of arrays, rows in pool order."""
    try:
        m = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid JSON ({exc.msg})") from exc
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or not np.all(np.isfinite(arr)):
        raise InvalidInputError("similarity matrix must be a 2-D array of finite numbers")
    return arr
