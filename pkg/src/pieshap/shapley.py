"""Exact and Monte-Carlo Shapley values of the concept game.

Exact: full enumeration with classical weights |S|!(n-|S|-1)!/n!, every
coalition's utility evaluated exactly once.  Monte Carlo: per concept i,
K draws of (size k ~ Uniform{1..n}, then a uniform size-(k-1) subset of the
other concepts), averaging the marginal contributions; this reproduces the
1/n * 1/C(n-1, k-1) weighting and is unbiased.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .coalitions import (
    MAX_EXACT_ENUMERATION,
    Coalition,
    sample_coalition,
    with_concept,
)
from .fileformat import f2s, read_record, require, s2f, write_record
from .oracle import GameView

DEFAULT_MC_SAMPLES = 10_000


@dataclass(frozen=True)
class ShapleyEstimate:
    """Per-concept values with standard errors (all zero for the exact method)."""

    values: np.ndarray
    std_errors: np.ndarray
    method: str  # "exact" | "monte_carlo"
    K: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        se = np.asarray(self.std_errors, dtype=np.float64)
        if v.shape != se.shape or v.ndim != 1:
            raise ValueError(f"inconsistent estimate shapes {v.shape} vs {se.shape}")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(se))):
            raise ValueError("non-finite Shapley estimate")
        if np.any(se < 0):
            raise ValueError("negative standard error")
        if self.method == "exact" and self.K is not None:
            raise ValueError("exact method carries no sample count")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "std_errors", se)

    @property
    def n(self) -> int:
        return self.values.size


def marginal_contribution(game: GameView, i: int, s: Coalition) -> float:
    """u(S with concept i) - u(S); rejects i already in S."""
    if s.contains(i):
        raise ValueError(f"concept {i} already in coalition {s.to_text()!r}")
    return game.u(with_concept(s, i)) - game.u(s)


def _memo_utilities(game: GameView, n: int) -> np.ndarray:
    u = np.empty(1 << n, dtype=np.float64)
    for mask in range(1 << n):
        u[mask] = game.u(Coalition(mask, n))
    return u


def exact_shapley(game: GameView, n: int) -> ShapleyEstimate:
    """Exact values over all 2^n coalitions (guarded to n <= 20)."""
    if n > MAX_EXACT_ENUMERATION:
        raise ValueError(
            f"exact Shapley is guarded to n <= {MAX_EXACT_ENUMERATION}; got n={n}; "
            "use the Monte-Carlo estimator instead"
        )
    if n < 1:
        raise ValueError(f"need at least one concept, got n={n}")
    u = _memo_utilities(game, n)
    masks = np.arange(1 << n, dtype=np.int64)
    sizes = np.bitwise_count(masks.astype(np.uint64)).astype(np.int64)
    weights = np.array(
        [math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n) for s in range(n)]
    )
    values = np.empty(n, dtype=np.float64)
    for i in range(n):
        without = masks[(masks >> i) & 1 == 0]
        values[i] = float(
            np.sum(weights[sizes[without]] * (u[without | (1 << i)] - u[without]))
        )
    return ShapleyEstimate(values=values, std_errors=np.zeros(n), method="exact")


def exact_shapley_from_table(u: np.ndarray, n: int) -> ShapleyEstimate:
    """Exact values when the 2^n utilities are already materialized (index == mask)."""
    game = GameView(u=lambda s: float(u[s.mask]), n=n, backing="direct-oracle")
    return exact_shapley(game, n)


def mc_shapley(
    game: GameView, n: int, K: int = DEFAULT_MC_SAMPLES, seed: int = 0
) -> ShapleyEstimate:
    """Monte-Carlo estimate, K coalitions per concept.

    Deterministic per (seed, concept, sample index): each concept gets its
    own generator derived from (seed, concept), so per-concept loops can run
    in any order or in parallel without changing the result.
    """
    if K < 2:
        raise ValueError(f"need K >= 2 samples per concept, got {K}")
    if n < 1:
        raise ValueError(f"need at least one concept, got n={n}")
    values = np.empty(n, dtype=np.float64)
    std_errors = np.empty(n, dtype=np.float64)
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        sizes = rng.integers(1, n + 1, size=K)
        deltas = np.empty(K, dtype=np.float64)
        for k in range(K):
            s = sample_coalition(rng, n, int(sizes[k]) - 1, exclude=i)
            deltas[k] = game.u(with_concept(s, i)) - game.u(s)
        values[i] = deltas.mean()
        std_errors[i] = deltas.std(ddof=1) / math.sqrt(K)
    return ShapleyEstimate(
        values=values, std_errors=std_errors, method="monte_carlo", K=K, seed=seed
    )


def save_estimate(
    est: ShapleyEstimate, case_id: str, path: str | Path
) -> Path:
    payload = {
        "case_id": case_id,
        "method": est.method,
        "K": est.K,
        "seed": est.seed,
        "concepts": [
            {"value": f2s(v), "std_error": f2s(se)}
            for v, se in zip(est.values, est.std_errors)
        ],
    }
    return write_record(path, "shapley", payload)


def load_estimate(path: str | Path) -> tuple[str, ShapleyEstimate]:
    payload = read_record(path, "shapley")
    concepts = require(payload, "concepts", list)
    values = np.array([s2f(require(c, "value"), "concepts.value") for c in concepts])
    ses = np.array([s2f(require(c, "std_error"), "concepts.std_error") for c in concepts])
    est = ShapleyEstimate(
        values=values,
        std_errors=ses,
        method=require(payload, "method", str),
        K=payload.get("K"),
        seed=payload.get("seed"),
    )
    return require(payload, "case_id", str), est
