"""Batch selection strategies, objective evaluators and the exhaustive oracle.

Every argmax breaks ties toward the lowest pool position.
"""

from __future__ import annotations

import itertools
import math
from typing import Optional, Protocol, Sequence

import numpy as np

from . import simcore
from .featgeom import DistanceEngine
from .pool import (
    InvalidInputError,
    Pool,
    Selected,
    SelectionConfig,
    SelectionResult,
    TooLargeError,
)

BRUTE_FORCE_LIMIT = 10**7


class SimilarityProvider(Protocol):
    """Source of sim(u, v) in [0, 1] between pool positions.

    Implementations must satisfy sim(u, u) = 1 and sim(u, v) = sim(v, u).
    ``evaluations`` counts pair evaluations served so far.
    """

    evaluations: int

    def sims_to(self, j: int, cols: np.ndarray) -> np.ndarray: ...


class MatrixSimilarity:
    """Explicit similarity matrix, validated for symmetry, unit diagonal and range."""

    d_max = None
    lam = None

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError(f"similarity matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)) or m.min() < 0.0 or m.max() > 1.0:
            raise InvalidInputError("similarity values must lie in [0, 1]")
        if not np.array_equal(m, m.T):
            raise InvalidInputError("similarity matrix must be symmetric")
        if not np.all(np.diag(m) == 1.0):
            raise InvalidInputError("similarity matrix must have a unit diagonal")
        self.matrix = m
        self.evaluations = 0

    def sims_to(self, j: int, cols) -> np.ndarray:
        cols = np.asarray(cols, dtype=np.int64)
        self.evaluations += len(cols)
        return self.matrix[cols, j]


class PoolSimilarity:
    """Kernel of featgeom distances, bandwidth already resolved."""

    def __init__(self, engine: DistanceEngine, kind: str, lam: float, d_max: Optional[float] = None):
        if not lam > 0:
            raise InvalidInputError(f"lambda must be positive, got {lam}")
        self.engine = engine
        self.kind = kind
        self.lam = lam
        self.d_max = d_max
        self.evaluations = 0

    def sims_to(self, j: int, cols) -> np.ndarray:
        cols = np.asarray(cols, dtype=np.int64)
        self.evaluations += len(cols)
        s = simcore.similarity_array(self.engine.distances_to(j, cols), self.kind, self.lam)
        # sim(u, u) = 1 by contract, even where the distance convention gives d(u, u) > 0
        s[cols == j] = 1.0
        return s


def build_similarity(pool: Pool, config: SelectionConfig, engine: Optional[DistanceEngine] = None) -> PoolSimilarity:
    """Compute d_max for the pool, resolve lambda and wrap it all in a provider."""
    engine = engine or DistanceEngine(pool, config.distance)
    dmax = engine.d_max()
    lam = config.similarity.lam or simcore.resolve_lambda(config.similarity, dmax)
    return PoolSimilarity(engine, config.similarity.kind, lam, dmax)


def sim_matrix(sim: SimilarityProvider, positions: Sequence[int]) -> np.ndarray:
    pos = np.asarray(positions, dtype=np.int64)
    out = np.empty((len(pos), len(pos)))
    for c, j in enumerate(pos):
        out[:, c] = sim.sims_to(int(j), pos)
    return out


def least_confidence(probs) -> float:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or not np.all(np.isfinite(p)) or p.min() < 0:
        raise InvalidInputError("class probabilities must be a non-empty, non-negative vector")
    if abs(math.fsum(p.tolist()) - 1.0) > 1e-6:
        raise InvalidInputError(f"class probabilities sum to {p.sum()}, not 1")
    return float(1.0 - p.max())


def _check_budget(pool: Pool, budget: int) -> None:
    if not 1 <= budget <= len(pool):
        raise InvalidInputError(f"budget must lie in [1, {len(pool)}], got {budget}")


def _result(pool: Pool, order, scores, sim=None) -> SelectionResult:
    selected = [Selected(pool[p].id, k + 1, float(s)) for k, (p, s) in enumerate(zip(order, scores))]
    return SelectionResult(
        selected,
        d_max_used=getattr(sim, "d_max", None),
        lambda_used=getattr(sim, "lam", None),
    )


def _argmax_available(values: np.ndarray, available: np.ndarray) -> int:
    return int(np.argmax(np.where(available, values, -np.inf)))


def top_b_uncertainty(pool: Pool, budget: int) -> SelectionResult:
    _check_budget(pool, budget)
    sigma = pool.uncertainties()
    order = np.lexsort((np.arange(len(pool)), -sigma))[:budget]
    return _result(pool, order.tolist(), sigma[order])


def _noris(pool: Pool, budget: int, sim: SimilarityProvider, clamp: bool, closest_only: bool) -> SelectionResult:
    _check_budget(pool, budget)
    work = pool.uncertainties()
    available = np.ones(len(pool), dtype=bool)
    order, marginals = [], []
    for _ in range(budget):
        nxt = _argmax_available(work, available)
        gain = float(work[nxt])
        order.append(nxt)
        marginals.append(gain)
        available[nxt] = False
        rest = np.flatnonzero(available)
        if rest.size == 0:
            break
        s = sim.sims_to(nxt, rest)
        if closest_only:
            c = int(np.argmax(s))
            work[rest[c]] = simcore.update_score(float(work[rest[c]]), float(s[c]), gain, clamp)
        else:
            upd = work[rest] - s * gain
            work[rest] = np.maximum(0.0, upd) if clamp else upd
    return _result(pool, order, marginals, sim)


def noris_sum_select(pool: Pool, budget: int, sim: SimilarityProvider, clamp: bool = False) -> SelectionResult:
    """Greedy collective-score selection; each pick discounts every remaining sample.

    The discount uses the pick's *working* score, i.e. after the reductions
    it received from earlier picks.
    """
    return _noris(pool, budget, sim, clamp, closest_only=False)


def noris_max_select(pool: Pool, budget: int, sim: SimilarityProvider, clamp: bool = False) -> SelectionResult:
    """Like :func:`noris_sum_select`, but each pick discounts only its most similar remaining sample."""
    return _noris(pool, budget, sim, clamp, closest_only=True)


def _objective(m: np.ndarray, sigma: np.ndarray, kind: str) -> float:
    n = len(sigma)
    total = 0.0
    for a in range(n):
        if kind == "sum":
            penalty = 0.0
            for b in range(n):
                if b != a:
                    penalty += m[a, b] * sigma[b]
        elif n == 1:
            penalty = 0.0
        else:
            c = max((b for b in range(n) if b != a), key=lambda b: (m[a, b], -b))
            penalty = m[a, c] * sigma[c]
        total += sigma[a] - penalty
    return float(total)


def _canonical_positions(pool: Pool, ids: Sequence[str]) -> list[int]:
    pos = pool.positions(ids)
    if len(set(pos)) != len(pos):
        raise InvalidInputError("selected ids must be distinct")
    return sorted(pos)


def objective_sum(ids: Sequence[str], pool: Pool, sim: SimilarityProvider) -> float:
    """Collective score with every co-selected sample discounting, on ingestion scores."""
    pos = _canonical_positions(pool, ids)
    sigma = pool.uncertainties()[pos]
    return _objective(sim_matrix(sim, pos), sigma, "sum")


def objective_max(ids: Sequence[str], pool: Pool, sim: SimilarityProvider) -> float:
    """Collective score where only the most similar co-selected sample discounts."""
    pos = _canonical_positions(pool, ids)
    sigma = pool.uncertainties()[pos]
    return _objective(sim_matrix(sim, pos), sigma, "max")


def brute_force_optimum(pool: Pool, budget: int, sim: SimilarityProvider, objective: str = "sum"):
    """Exhaustive search over all size-``budget`` subsets.

    Returns ``(ids, value)``; among equal values the lexicographically
    smallest position set wins.
    """
    _check_budget(pool, budget)
    if objective not in ("sum", "max"):
        raise InvalidInputError(f"objective must be 'sum' or 'max', got {objective!r}")
    n = len(pool)
    if math.comb(n, budget) > BRUTE_FORCE_LIMIT:
        raise TooLargeError(f"C({n}, {budget}) subsets exceed the limit of {BRUTE_FORCE_LIMIT}")
    full = sim_matrix(sim, range(n))
    sigma = pool.uncertainties()
    best, best_val = None, -math.inf
    for combo in itertools.combinations(range(n), budget):
        idx = list(combo)
        val = _objective(full[np.ix_(idx, idx)], sigma[idx], objective)
        if val > best_val:
            best, best_val = combo, val
    return [pool[p].id for p in best], best_val


def k_center_greedy(pool: Pool, budget: int, engine: DistanceEngine) -> SelectionResult:
    """Farthest-first traversal seeded at position 0.

    The seed's recorded score is 0.0; later picks record their distance to
    the nearest already-selected sample.
    """
    _check_budget(pool, budget)
    n = len(pool)
    available = np.ones(n, dtype=bool)
    order, scores = [0], [0.0]
    available[0] = False
    min_d = engine.distances_to(0, np.arange(n))
    for _ in range(budget - 1):
        nxt = _argmax_available(min_d, available)
        order.append(nxt)
        scores.append(float(min_d[nxt]))
        available[nxt] = False
        min_d = np.minimum(min_d, engine.distances_to(nxt, np.arange(n)))
    return _result(pool, order, scores)


def hybrid_product(pool: Pool, budget: int, engine: DistanceEngine) -> SelectionResult:
    """Seed at the most uncertain sample, then maximize uncertainty x distance to the selection."""
    _check_budget(pool, budget)
    n = len(pool)
    sigma = pool.uncertainties()
    available = np.ones(n, dtype=bool)
    first = _argmax_available(sigma, available)
    order, scores = [first], [float(sigma[first])]
    available[first] = False
    min_d = engine.distances_to(first, np.arange(n))
    for _ in range(budget - 1):
        score = sigma * min_d
        nxt = _argmax_available(score, available)
        order.append(nxt)
        scores.append(float(score[nxt]))
        available[nxt] = False
        min_d = np.minimum(min_d, engine.distances_to(nxt, np.arange(n)))
    return _result(pool, order, scores)


def random_select(pool: Pool, budget: int, seed: int = 0) -> SelectionResult:
    """Top-``budget`` of i.i.d. uniform scores from numpy's PCG64 seeded with ``seed``."""
    _check_budget(pool, budget)
    scores = np.random.default_rng(seed % 2**64).random(len(pool))
    order = np.lexsort((np.arange(len(pool)), -scores))[:budget]
    return _result(pool, order.tolist(), scores[order])


def select(
    pool: Pool,
    config: SelectionConfig,
    sim: Optional[SimilarityProvider] = None,
    engine: Optional[DistanceEngine] = None,
) -> SelectionResult:
    """Run one configured strategy end to end.

    d_max and lambda are always computed from the pool. An explicit ``sim``
    (e.g. a :class:`MatrixSimilarity`) replaces the kernel for the NORIS
    strategies and for the reported objectives.
    """
    _check_budget(pool, config.budget)
    engine = engine or DistanceEngine(pool, config.distance)
    if isinstance(sim, PoolSimilarity) and sim.d_max is not None:
        pool_sim = sim
    else:
        pool_sim = build_similarity(pool, config, engine)
    sim = sim or pool_sim
    B, strategy = config.budget, config.strategy
    if strategy == "noris-sum":
        res = noris_sum_select(pool, B, sim, config.clamp_scores)
    elif strategy == "noris-max":
        res = noris_max_select(pool, B, sim, config.clamp_scores)
    elif strategy == "uncertainty":
        res = top_b_uncertainty(pool, B)
    elif strategy == "random":
        res = random_select(pool, B, config.seed)
    elif strategy == "k-center":
        res = k_center_greedy(pool, B, engine)
    else:
        res = hybrid_product(pool, B, engine)
    res.d_max_used = pool_sim.d_max
    res.lambda_used = pool_sim.lam
    res.objective_sum = objective_sum(res.ids, pool, sim)
    res.objective_max = objective_max(res.ids, pool, sim)
    return res
