"""Domain model for unlabeled pools, detections and selection settings.

Feature vectors are plain tuples of floats so that samples compare and hash
by value; the distance engine packs them into numpy matrices once per pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

FeatureVector = tuple  # tuple[float, ...]

STRATEGIES = ("noris-sum", "noris-max", "uncertainty", "random", "k-center", "hybrid")
METRICS = ("squared-euclidean", "cosine")
AGGREGATIONS = ("max", "avg")
MODES = ("object", "plain")
KERNELS = ("gaussian", "linear")


class NorisError(Exception):
    """Base class for engine errors."""


class InvalidInputError(NorisError, ValueError):
    """Malformed input: bad dimensions, out-of-range budget, unknown id."""


class DegeneratePoolError(NorisError):
    """The pool has zero diameter, so the kernel bandwidth cannot be resolved."""


class TooLargeError(NorisError):
    """A combinatorial or size guard was exceeded."""


def feature_vector(values: Iterable[float]) -> FeatureVector:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def check_inside(self, image_width: int, image_height: int) -> None:
        if not (self.w > 0 and self.h > 0):
            raise InvalidInputError(f"bbox must have positive size, got w={self.w} h={self.h}")
        if self.x < 0 or self.y < 0:
            raise InvalidInputError(f"bbox origin must be non-negative, got ({self.x}, {self.y})")
        if self.x + self.w > image_width or self.y + self.h > image_height:
            raise InvalidInputError(
                f"bbox ({self.x}, {self.y}, {self.w}, {self.h}) exceeds image "
                f"{image_width}x{image_height}"
            )

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class ObjectInstance:
    bbox: BoundingBox
    feature: FeatureVector
    detection_score: float = 1.0
    class_label: Optional[str] = None


@dataclass(frozen=True)
class Sample:
    id: str
    uncertainty: float
    image_feature: FeatureVector
    objects: tuple = ()  # tuple[ObjectInstance, ...]
    class_probs: Optional[tuple] = None


@dataclass(frozen=True)
class Pool:
    """Ordered, immutable collection of samples.

    Position in ``samples`` is the tie-breaking order used by every selector.
    Duplicate ids are accepted here and reported by :func:`validate_pool`;
    ``id_index`` then points at the first occurrence.
    """

    samples: tuple
    id_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        index: dict[str, int] = {}
        for pos, s in enumerate(self.samples):
            index.setdefault(s.id, pos)
        object.__setattr__(self, "id_index", index)

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, pos: int) -> Sample:
        return self.samples[pos]

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def positions(self, ids: Sequence[str]) -> list[int]:
        out = []
        for i in ids:
            if i not in self.id_index:
                raise InvalidInputError(f"unknown sample id {i!r}")
            out.append(self.id_index[i])
        return out

    def uncertainties(self):
        import numpy as np

        return np.array([s.uncertainty for s in self.samples], dtype=np.float64)


@dataclass(frozen=True)
class DistanceConfig:
    metric: str = "squared-euclidean"
    aggregation: str = "max"
    use_image_features: bool = True
    mode: str = "object"
    # None means exact d_max over all pairs
    dmax_pairs: Optional[int] = None
    dmax_seed: int = 0

    def __post_init__(self) -> None:
        if self.metric not in METRICS:
            raise InvalidInputError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.aggregation not in AGGREGATIONS:
            raise InvalidInputError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.dmax_pairs is not None and self.dmax_pairs < 1:
            raise InvalidInputError("sampled d_max needs pair_count >= 1")

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "aggregation": self.aggregation,
            "use_image_features": self.use_image_features,
            "mode": self.mode,
            "dmax": "exact" if self.dmax_pairs is None else f"sample:{self.dmax_pairs}",
            "dmax_seed": self.dmax_seed,
        }


@dataclass(frozen=True)
class SimilarityConfig:
    kind: str = "gaussian"
    alpha: float = 0.5
    lam: Optional[float] = None  # bandwidth, resolved per cycle from alpha and d_max

    def __post_init__(self) -> None:
        if self.kind not in KERNELS:
            raise InvalidInputError(f"similarity kind must be one of {KERNELS}, got {self.kind!r}")
        if not (0.0 < self.alpha <= 1.0):
            raise InvalidInputError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.lam is not None and not self.lam > 0:
            raise InvalidInputError(f"lambda must be positive, got {self.lam}")


@dataclass(frozen=True)
class SelectionConfig:
    strategy: str
    budget: int
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    distance: DistanceConfig = field(default_factory=DistanceConfig)
    clamp_scores: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise InvalidInputError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.budget < 1:
            raise InvalidInputError(f"budget must be >= 1, got {self.budget}")


@dataclass(frozen=True)
class Selected:
    id: str
    step: int
    marginal_score: float


@dataclass
class SelectionResult:
    selected: list  # list[Selected]
    d_max_used: Optional[float] = None
    lambda_used: Optional[float] = None
    objective_sum: Optional[float] = None
    objective_max: Optional[float] = None

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.selected]

    @property
    def marginal_scores(self) -> list[float]:
        return [s.marginal_score for s in self.selected]


@dataclass(frozen=True)
class Violation:
    sample_id: Optional[str]
    field: str
    message: str


def _check_vector(values, sample_id: str, name: str, out: list) -> None:
    if len(values) < 1:
        out.append(Violation(sample_id, name, "feature vector must have dim >= 1"))
    elif not all(math.isfinite(v) for v in values):
        out.append(Violation(sample_id, name, "feature vector has non-finite values"))


def validate_pool(pool: Pool) -> list[Violation]:
    """Return every invariant violation in ``pool``; an empty list means valid."""
    out: list[Violation] = []
    seen: set[str] = set()
    reported: set[str] = set()
    for s in pool.samples:
        if s.id in seen and s.id not in reported:
            out.append(Violation(s.id, "id", f"duplicate id {s.id!r}"))
            reported.add(s.id)
        seen.add(s.id)

        if not math.isfinite(s.uncertainty):
            out.append(Violation(s.id, "uncertainty", "uncertainty must be finite"))
        elif s.uncertainty < 0:
            out.append(Violation(s.id, "uncertainty", "uncertainty must be >= 0 on ingestion"))

        _check_vector(s.image_feature, s.id, "image_feature", out)

        obj_dims = set()
        for k, o in enumerate(s.objects):
            name = f"objects[{k}]"
            _check_vector(o.feature, s.id, name + ".feature", out)
            obj_dims.add(len(o.feature))
            b = o.bbox
            if not (b.w > 0 and b.h > 0):
                out.append(Violation(s.id, name + ".bbox", "bbox width and height must be positive"))
            if b.x < 0 or b.y < 0:
                out.append(Violation(s.id, name + ".bbox", "bbox origin must be non-negative"))
            if not (0.0 <= o.detection_score <= 1.0):
                out.append(Violation(s.id, name + ".score", "detection score must lie in [0, 1]"))
        if len(obj_dims) > 1:
            out.append(Violation(s.id, "objects", f"object features have mixed dims {sorted(obj_dims)}"))

        if s.class_probs is not None:
            p = s.class_probs
            if any(not math.isfinite(v) or v < 0 for v in p) or abs(math.fsum(p) - 1.0) > 1e-6:
                out.append(Violation(s.id, "class_probs", "class_probs must be non-negative and sum to 1"))

    # distances need one image-feature dim and one object-feature dim pool-wide
    if pool.samples:
        img_dim = len(pool.samples[0].image_feature)
        obj_dim = next((len(o.feature) for s in pool.samples for o in s.objects), None)
        for s in pool.samples:
            if len(s.image_feature) != img_dim:
                out.append(Violation(s.id, "image_feature", f"dim {len(s.image_feature)} != pool dim {img_dim}"))
            if any(len(o.feature) != obj_dim for o in s.objects):
                out.append(Violation(s.id, "objects", f"object feature dim differs from pool dim {obj_dim}"))
    return out
