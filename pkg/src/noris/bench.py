"""Synthetic clustered pools and a strategy comparison harness.

Pools are drawn from isotropic Gaussian clusters with per-cluster uncertainty
ranges, optionally padded with exact duplicates to stress redundancy.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .featgeom import DistanceEngine
from .pool import (
    STRATEGIES,
    DistanceConfig,
    InvalidInputError,
    Pool,
    Sample,
    SelectionConfig,
    SimilarityConfig,
)
from .selector import build_similarity, objective_sum, select, sim_matrix

REPORT_COLUMNS = (
    "seed",
    "strategy",
    "objective_sum",
    "total_uncertainty",
    "coverage_radius",
    "mean_intra_similarity",
    "residual_information",
    "wall_ms",
)


@dataclass(frozen=True)
class ClusterSpec:
    center: tuple
    std: float
    count: int
    uncertainty_range: tuple = (0.0, 1.0)

    def __post_init__(self) -> None:
        if self.count < 1:
            raise InvalidInputError("cluster count must be >= 1")
        if not self.std > 0:
            raise InvalidInputError("cluster std must be positive")
        lo, hi = self.uncertainty_range
        if not 0 <= lo <= hi:
            raise InvalidInputError(f"uncertainty range must satisfy 0 <= low <= high, got {self.uncertainty_range}")


@dataclass(frozen=True)
class SimExperiment:
    clusters: tuple
    dim: int
    seeds: tuple = (0,)
    budget: int = 10
    strategies: tuple = STRATEGIES
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    distance: DistanceConfig = field(default_factory=lambda: DistanceConfig(mode="plain"))
    duplicate_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise InvalidInputError("dim must be >= 1")
        for c in self.clusters:
            if len(c.center) != self.dim:
                raise InvalidInputError(f"cluster center has {len(c.center)} components, expected {self.dim}")
        if not 0.0 <= self.duplicate_fraction <= 1.0:
            raise InvalidInputError("duplicate_fraction must lie in [0, 1]")
        if self.distance.mode != "plain":
            raise InvalidInputError("simulated pools carry a single embedding; use distance mode 'plain'")
        unknown = set(self.strategies) - set(STRATEGIES)
        if unknown:
            raise InvalidInputError(f"unknown strategies {sorted(unknown)}")
        if self.budget < 1:
            raise InvalidInputError("budget must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SimExperiment":
        try:
            sim = d.get("similarity", {})
            dist = d.get("distance", {})
            dmax = dist.get("dmax", "exact")
            pairs = None if dmax == "exact" else int(str(dmax).split(":", 1)[1])
            return cls(
                clusters=tuple(
                    ClusterSpec(
                        center=tuple(float(x) for x in c["center"]),
                        std=float(c["std"]),
                        count=int(c["count"]),
                        uncertainty_range=tuple(float(x) for x in c.get("uncertainty_range", (0.0, 1.0))),
                    )
                    for c in d["clusters"]
                ),
                dim=int(d["dim"]),
                seeds=tuple(int(s) for s in d.get("seeds", (0,))),
                budget=int(d.get("budget", 10)),
                strategies=tuple(d.get("strategies", STRATEGIES)),
                similarity=SimilarityConfig(kind=sim.get("kind", "gaussian"), alpha=float(sim.get("alpha", 0.5))),
                distance=DistanceConfig(
                    metric=dist.get("metric", "squared-euclidean"),
                    mode=dist.get("mode", "plain"),
                    dmax_pairs=pairs,
                    dmax_seed=int(dist.get("dmax_seed", 0)),
                ),
                duplicate_fraction=float(d.get("duplicate_fraction", 0.0)),
            )
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            if isinstance(exc, InvalidInputError):
                raise
            raise InvalidInputError(f"invalid experiment spec: {exc}") from exc


def standard_experiment() -> SimExperiment:
    """The shipped acceptance experiment: 5 clusters, dim 16, 2000 samples, B=50, 10 seeds."""
    text = resources.files("noris").joinpath("data/standard_experiment.json").read_text()
    return SimExperiment.from_dict(json.loads(text))


def _normals(rng: np.random.Generator, count: int) -> np.ndarray:
    # Box-Muller on (0, 1] uniforms
    half = (count + 1) // 2
    u1 = 1.0 - rng.random(half)
    u2 = rng.random(half)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[:count]


def generate_pool(spec: SimExperiment, seed: int) -> Pool:
    rng = np.random.default_rng(seed % 2**64)
    samples = []
    for ci, c in enumerate(spec.clusters):
        z = _normals(rng, c.count * spec.dim).reshape(c.count, spec.dim)
        pts = np.asarray(c.center, dtype=np.float64) + c.std * z
        lo, hi = c.uncertainty_range
        sig = lo + (hi - lo) * rng.random(c.count)
        for k in range(c.count):
            samples.append(Sample(f"c{ci}_{k}", float(sig[k]), tuple(pts[k].tolist())))
    n_dup = int(round(spec.duplicate_fraction * len(samples)))
    if n_dup:
        picks = np.sort(rng.choice(len(samples), size=n_dup, replace=False))
        for p in picks.tolist():
            s = samples[p]
            samples.append(Sample(s.id + "_dup", s.uncertainty, s.image_feature))
    return Pool(samples)


def residual_information(pool: Pool, order: Sequence[str], sim, clamp: bool = False) -> float:
    """Remaining positive score of unselected samples after replaying the NORIS-Sum updates for ``order``."""
    positions = pool.positions(order)
    work = pool.uncertainties()
    available = np.ones(len(pool), dtype=bool)
    for p in positions:
        gain = float(work[p])
        available[p] = False
        rest = np.flatnonzero(available)
        if rest.size == 0:
            break
        upd = work[rest] - sim.sims_to(p, rest) * gain
        work[rest] = np.maximum(0.0, upd) if clamp else upd
    return float(np.maximum(0.0, work[available]).sum())


def coverage_radius(engine: DistanceEngine, positions: Sequence[int]) -> float:
    n = len(engine)
    min_d = np.full(n, np.inf)
    for p in positions:
        min_d = np.minimum(min_d, engine.distances_to(p, np.arange(n)))
    return float(min_d.max())


def mean_intra_similarity(sim, positions: Sequence[int]) -> float:
    if len(positions) < 2:
        return 0.0
    m = sim_matrix(sim, sorted(positions))
    iu = np.triu_indices(len(positions), k=1)
    return float(m[iu].mean())


@dataclass
class StrategyReport:
    seed: int
    strategy: str
    objective_sum: float
    total_uncertainty: float
    coverage_radius: float
    mean_intra_similarity: float
    residual_information: float
    wall_time: float  # seconds

    def row(self) -> dict:
        return {
            "seed": self.seed,
            "strategy": self.strategy,
            "objective_sum": self.objective_sum,
            "total_uncertainty": self.total_uncertainty,
            "coverage_radius": self.coverage_radius,
            "mean_intra_similarity": self.mean_intra_similarity,
            "residual_information": self.residual_information,
            "wall_ms": round(self.wall_time * 1000.0, 3),
        }


def run_seed(spec: SimExperiment, seed: int, pool: Optional[Pool] = None) -> list[StrategyReport]:
    pool = pool or generate_pool(spec, seed)
    engine = DistanceEngine(pool, spec.distance)
    base = SelectionConfig("uncertainty", spec.budget, spec.similarity, spec.distance, seed=seed)
    sim = build_similarity(pool, base, engine)
    sigma = pool.uncertainties()
    reports = []
    for strategy in spec.strategies:
        cfg = SelectionConfig(strategy, spec.budget, spec.similarity, spec.distance, seed=seed)
        t0 = time.perf_counter()
        res = select(pool, cfg, sim=sim, engine=engine)
        elapsed = time.perf_counter() - t0
        pos = pool.positions(res.ids)
        reports.append(
            StrategyReport(
                seed=seed,
                strategy=strategy,
                objective_sum=objective_sum(res.ids, pool, sim),
                total_uncertainty=float(sigma[sorted(pos)].sum()),
                coverage_radius=coverage_radius(engine, pos),
                mean_intra_similarity=mean_intra_similarity(sim, pos),
                residual_information=residual_information(pool, res.ids, sim),
                wall_time=elapsed,
            )
        )
    return reports


def run_experiment(spec: SimExperiment) -> list[StrategyReport]:
    """All strategies on every seed's pool; reports in seed order, then strategy order."""
    out = []
    for seed in spec.seeds:
        out.extend(run_seed(spec, seed))
    return out


__all__ = [
    "ClusterSpec",
    "SimExperiment",
    "StrategyReport",
    "generate_pool",
    "residual_information",
    "run_experiment",
    "run_seed",
    "standard_experiment",
]
