"""Object features from feature maps, and distances between samples.

Two paths compute the same distances:

* scalar functions (:func:`elem_distance`, :func:`object_distance`,
  :func:`combined_distance`, :func:`plain_distance`) take two samples;
* :class:`DistanceEngine` packs a pool into column matrices and evaluates one
  sample against many, which is what the selectors use.

Both reduce over feature channels with :func:`_channel_sum`, a fixed
left-to-right loop, so every distance is bit-identical whichever path or
argument order produced it and however many threads are used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _parallel
from .pool import (
    BoundingBox,
    DegeneratePoolError,
    DistanceConfig,
    InvalidInputError,
    Pool,
    Sample,
)


@dataclass(frozen=True)
class FeatureMap:
    """Activation grid of shape (height, width, channels) for one image."""

    data: np.ndarray
    image_height: int
    image_width: int

    def __post_init__(self) -> None:
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise InvalidInputError(f"feature map must be a non-empty (h, w, c) array, got {self.data.shape}")
        if self.image_height < 1 or self.image_width < 1:
            raise InvalidInputError("image size must be positive")
        if not np.all(np.isfinite(self.data)):
            raise InvalidInputError("feature map contains non-finite values")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class RoiRect:
    col_start: int
    col_end: int
    row_start: int
    row_end: int


def _discretize(start: float, size: float, limit: int) -> tuple[int, int]:
    lo = min(max(math.floor(start), 0), limit - 1)
    hi = min(max(math.ceil(start + size), lo + 1), limit)
    return lo, hi


def roi_to_feature_coords(bbox: BoundingBox, fmap: FeatureMap) -> RoiRect:
    """Scale a pixel box onto the feature grid.

    Start cells are floored and end cells ceiled, then clamped to the map
    with at least one cell per axis, so every valid box yields a crop.
    """
    bbox.check_inside(fmap.image_width, fmap.image_height)
    # multiply before dividing: integer boxes on integer grids stay exact
    x = bbox.x * fmap.width / fmap.image_width
    w = bbox.w * fmap.width / fmap.image_width
    y = bbox.y * fmap.height / fmap.image_height
    h = bbox.h * fmap.height / fmap.image_height
    c0, c1 = _discretize(x, w, fmap.width)
    r0, r1 = _discretize(y, h, fmap.height)
    return RoiRect(c0, c1, r0, r1)


def roi_gap(fmap: FeatureMap, rect: RoiRect) -> tuple:
    if not (0 <= rect.col_start < rect.col_end <= fmap.width and 0 <= rect.row_start < rect.row_end <= fmap.height):
        raise InvalidInputError(f"{rect} does not fit a {fmap.height}x{fmap.width} map")
    crop = fmap.data[rect.row_start : rect.row_end, rect.col_start : rect.col_end, :]
    return tuple(float(v) for v in crop.astype(np.float64).mean(axis=(0, 1)))


def image_feature_from_map(fmap: FeatureMap) -> tuple:
    return roi_gap(fmap, RoiRect(0, fmap.width, 0, fmap.height))


# -- channel kernels ---------------------------------------------------------
# Matrices are (channels, n). Sums run over channels in a fixed order.


def _channel_sum(rows: np.ndarray) -> np.ndarray:
    acc = np.zeros(rows.shape[1], dtype=np.float64)
    for k in range(rows.shape[0]):
        acc += rows[k]
    return acc


def _sq_to(cols_mat: np.ndarray, q: np.ndarray) -> np.ndarray:
    diff = cols_mat - q[:, None]
    return _channel_sum(diff * diff)


def _norms(mat: np.ndarray) -> np.ndarray:
    return np.sqrt(_channel_sum(mat * mat))


def _cos_to(cols_mat: np.ndarray, cols_norm: np.ndarray, q: np.ndarray, q_norm: float) -> np.ndarray:
    dots = _channel_sum(cols_mat * q[:, None])
    denom = cols_norm * q_norm
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 - dots / denom
    out = np.where(denom == 0.0, 1.0, out)
    return np.clip(out, 0.0, 2.0)


def _as_column(values) -> np.ndarray:
    return np.asarray(values, dtype=np.float64).reshape(-1, 1)


def _elem(f_col: np.ndarray, g_col: np.ndarray, metric: str) -> float:
    if metric == "cosine":
        return float(_cos_to(f_col, _norms(f_col), g_col[:, 0], float(_norms(g_col)[0]))[0])
    return float(_sq_to(f_col, g_col[:, 0])[0])


def elem_distance(f, g, metric: str = "squared-euclidean") -> float:
    """Squared euclidean or cosine distance between two feature vectors."""
    if len(f) != len(g):
        raise InvalidInputError(f"feature dims differ: {len(f)} vs {len(g)}")
    if metric not in ("squared-euclidean", "cosine"):
        raise InvalidInputError(f"unknown metric {metric!r}")
    return _elem(_as_column(f), _as_column(g), metric)


def _require_mode(cfg: DistanceConfig, mode: str) -> None:
    if cfg.mode != mode:
        raise InvalidInputError(f"operation needs mode={mode!r}, config has {cfg.mode!r}")


def object_distance(u: Sample, v: Sample, cfg: DistanceConfig) -> float:
    """Aggregate of pairwise object distances; 1.0 when either side has no objects."""
    _require_mode(cfg, "object")
    if not u.objects or not v.objects:
        return 1.0
    dims = {len(o.feature) for o in u.objects} | {len(o.feature) for o in v.objects}
    if len(dims) != 1:
        raise InvalidInputError(f"mixed object feature dims {sorted(dims)}")
    U = np.asarray([o.feature for o in u.objects], dtype=np.float64).T
    V = np.asarray([o.feature for o in v.objects], dtype=np.float64).T
    vals = []
    for a in range(U.shape[1]):
        if cfg.metric == "cosine":
            vals.append(_cos_to(V, _norms(V), U[:, a], float(_norms(U[:, a : a + 1])[0])))
        else:
            vals.append(_sq_to(V, U[:, a]))
    block = np.stack(vals)
    if cfg.aggregation == "max":
        return float(block.max())
    # fsum is exactly rounded, hence independent of pair order
    return math.fsum(block.ravel().tolist()) / block.size


def combined_distance(u: Sample, v: Sample, cfg: DistanceConfig) -> float:
    """Object distance, times the image-feature distance when enabled."""
    _require_mode(cfg, "object")
    if len(u.image_feature) != len(v.image_feature):
        raise InvalidInputError(
            f"image feature dims differ: {len(u.image_feature)} vs {len(v.image_feature)}"
        )
    if u == v and (u.objects or cfg.use_image_features):
        return 0.0
    d_o = object_distance(u, v, cfg)
    if not cfg.use_image_features:
        return d_o
    return d_o * elem_distance(u.image_feature, v.image_feature, cfg.metric)


def plain_distance(u: Sample, v: Sample, cfg: DistanceConfig) -> float:
    """Single-embedding distance; the squared-euclidean setting means the euclidean norm here."""
    _require_mode(cfg, "plain")
    d = elem_distance(u.image_feature, v.image_feature, cfg.metric)
    return d if cfg.metric == "cosine" else math.sqrt(d)


def distance(u: Sample, v: Sample, cfg: DistanceConfig) -> float:
    if cfg.mode == "plain":
        return plain_distance(u, v, cfg)
    return combined_distance(u, v, cfg)


class DistanceEngine:
    """Vectorized distances from one pool position to many.

    Nothing of size n^2 is materialized; callers request rows on demand.
    """

    def __init__(self, pool: Pool, cfg: DistanceConfig):
        self.pool = pool
        self.cfg = cfg
        n = len(pool)
        if n == 0:
            raise InvalidInputError("empty pool")
        dims = {len(s.image_feature) for s in pool.samples}
        if len(dims) != 1:
            raise InvalidInputError(f"image features have mixed dims {sorted(dims)}")
        self.img = np.ascontiguousarray(
            np.asarray([s.image_feature for s in pool.samples], dtype=np.float64).T
        )
        self.img_norm = _norms(self.img)

        if cfg.mode == "object":
            feats = [o.feature for s in pool.samples for o in s.objects]
            odims = {len(f) for f in feats}
            if len(odims) > 1:
                raise InvalidInputError(f"object features have mixed dims {sorted(odims)}")
            counts = np.array([len(s.objects) for s in pool.samples], dtype=np.int64)
            self.obj_count = counts
            self.obj_start = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
            width = odims.pop() if odims else 1
            self.obj = np.ascontiguousarray(
                np.asarray(feats, dtype=np.float64).reshape(-1, width).T
            )
            self.obj_norm = _norms(self.obj)

    def __len__(self) -> int:
        return len(self.pool)

    # -- image-feature term ---------------------------------------------------

    def _img_term(self, j: int, cols: np.ndarray) -> np.ndarray:
        sub = self.img[:, cols]
        if self.cfg.metric == "cosine":
            return _cos_to(sub, self.img_norm[cols], self.img[:, j], float(self.img_norm[j]))
        return _sq_to(sub, self.img[:, j])

    # -- object term ----------------------------------------------------------

    def _obj_term(self, j: int, cols: np.ndarray) -> np.ndarray:
        out = np.ones(len(cols), dtype=np.float64)
        k = int(self.obj_count[j])
        counts = self.obj_count[cols]
        has = counts > 0
        if k == 0 or not has.any():
            return out
        cols_h = cols[has]
        counts_h = counts[has]
        total = int(counts_h.sum())
        seg_start = np.concatenate([[0], np.cumsum(counts_h)[:-1]])
        idx = np.repeat(self.obj_start[cols_h] - seg_start, counts_h) + np.arange(total)
        sub = self.obj[:, idx]
        sub_norm = self.obj_norm[idx]
        rows = []
        s0 = int(self.obj_start[j])
        for a in range(s0, s0 + k):
            if self.cfg.metric == "cosine":
                rows.append(_cos_to(sub, sub_norm, self.obj[:, a], float(self.obj_norm[a])))
            else:
                rows.append(_sq_to(sub, self.obj[:, a]))
        block = np.stack(rows)  # (k, total)
        if self.cfg.aggregation == "max":
            agg = np.maximum.reduceat(block.max(axis=0), seg_start)
        else:
            agg = np.array(
                [
                    math.fsum(block[:, a : a + m].ravel().tolist()) / (k * m)
                    for a, m in zip(seg_start.tolist(), counts_h.tolist())
                ]
            )
        out[has] = agg
        return out

    def _row(self, j: int, cols: np.ndarray) -> np.ndarray:
        if self.cfg.mode == "plain":
            d = self._img_term(j, cols)
            return d if self.cfg.metric == "cosine" else np.sqrt(d)
        d = self._obj_term(j, cols)
        if self.cfg.use_image_features:
            d = d * self._img_term(j, cols)
        # self-distance is zero unless the sample has neither objects nor image term
        if self.obj_count[j] > 0 or self.cfg.use_image_features:
            d[cols == j] = 0.0
        return d

    def distances_to(self, j: int, cols) -> np.ndarray:
        """d(cols[i], j) for every i, in the order given."""
        cols = np.asarray(cols, dtype=np.int64)
        return _parallel.map_chunks(lambda c: self._row(j, c), cols)

    def pair(self, i: int, j: int) -> float:
        return float(self.distances_to(j, [i])[0])

    def pair_distances(self, I: np.ndarray, J: np.ndarray) -> np.ndarray:
        """d(I[t], J[t]) for arbitrary index pairs."""
        if self.cfg.mode == "plain":
            diff = self.img[:, I] - self.img[:, J]
            if self.cfg.metric == "cosine":
                dots = _channel_sum(self.img[:, I] * self.img[:, J])
                denom = self.img_norm[I] * self.img_norm[J]
                with np.errstate(divide="ignore", invalid="ignore"):
                    d = 1.0 - dots / denom
                return np.clip(np.where(denom == 0.0, 1.0, d), 0.0, 2.0)
            return np.sqrt(_channel_sum(diff * diff))
        return np.array([self.pair(int(i), int(j)) for i, j in zip(I, J)], dtype=np.float64)

    def d_max(self) -> float:
        n = len(self)
        if n < 2:
            raise InvalidInputError("d_max needs at least two samples")
        if self.cfg.dmax_pairs is None:
            best = 0.0
            for j in range(n - 1):
                best = max(best, float(self.distances_to(j, np.arange(j + 1, n)).max()))
        else:
            rng = np.random.default_rng(self.cfg.dmax_seed % 2**64)
            I = rng.integers(0, n, size=self.cfg.dmax_pairs)
            J = rng.integers(0, n - 1, size=self.cfg.dmax_pairs)
            J = J + (J >= I)
            best = float(self.pair_distances(I, J).max())
        if best <= 0.0:
            raise DegeneratePoolError("all pairwise distances are zero; d_max = 0")
        return best


def d_max(pool: Pool, cfg: DistanceConfig) -> float:
    """Largest pairwise distance in the pool (exact, or max over sampled pairs)."""
    return DistanceEngine(pool, cfg).d_max()
