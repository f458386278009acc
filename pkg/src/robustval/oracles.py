"""Utility oracles: score functions over subsets of the cohort.

An oracle maps a :class:`~robustval.subsets.SubsetKey` to a scalar score.
Scores produced by model-training oracles live in ``[0, 1]`` (accuracy-like);
synthetic game oracles may take any real values, and robustness perturbations
may push scores outside the unit interval — such oracles carry
``out_of_range=True`` rather than clipping.

``deterministic`` is a contract: repeated evaluation of the same subset (with
any seeds) returns the identical score.  Stochastic oracles consume an
``eval_seed`` so that a given (experiment, subset, draw) triple is
reproducible across processes.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import CohortTooLarge, InvalidParam, OracleFailure
from .subsets import SubsetKey

#: Largest cohort for which full 2^n table materialization is permitted.
MAX_EXACT_N = 20


class UtilityOracle:
    """Base class: subclasses implement :meth:`evaluate`."""

    n: int
    deterministic: bool = True
    description: str = "utility oracle"
    out_of_range: bool = False

    def evaluate(self, subset: SubsetKey, eval_seed: int | None = None) -> float:
        raise NotImplementedError

    def __call__(self, subset: SubsetKey, eval_seed: int | None = None) -> float:
        return self.evaluate(subset, eval_seed)


class TableOracle(UtilityOracle):
    """Dense oracle backed by a length-2^n score table indexed by bitmask."""

    def __init__(
        self,
        table: Sequence[float] | np.ndarray,
        n: int,
        *,
        description: str = "table oracle",
        allow_out_of_range: bool = False,
    ):
        table = np.asarray(table, dtype=float)
        if table.shape != (1 << n,):
            raise InvalidParam(f"table must have 2^{n} entries, got {table.shape}")
        if not np.all(np.isfinite(table)):
            raise OracleFailure("table contains non-finite scores")
        in_range = bool(np.all((table >= 0.0) & (table <= 1.0)))
        if not in_range and not allow_out_of_range:
            raise InvalidParam(
                "scores outside [0, 1]; pass allow_out_of_range=True if intended"
            )
        self.table = table
        self.n = n
        self.deterministic = True
        self.description = description
        self.out_of_range = not in_range

    def evaluate(self, subset: SubsetKey, eval_seed: int | None = None) -> float:
        return float(self.table[subset.mask])


class FunctionOracle(UtilityOracle):
    """Wrap a plain callable ``fn(subset) -> float``."""

    def __init__(
        self,
        fn: Callable[[SubsetKey], float],
        n: int,
        *,
        deterministic: bool = True,
        description: str = "function oracle",
    ):
        self.fn = fn
        self.n = n
        self.deterministic = deterministic
        self.description = description

    def evaluate(self, subset: SubsetKey, eval_seed: int | None = None) -> float:
        score = float(self.fn(subset))
        if not math.isfinite(score):
            raise OracleFailure(f"oracle returned non-finite score for {subset.text!r}")
        return score


class AdditiveOracle(UtilityOracle):
    """U(S) = base + sum of per-point contributions; the classic dummy/linearity testbed."""

    def __init__(self, contributions: Sequence[float], base: float = 0.0):
        self.contributions = np.asarray(contributions, dtype=float)
        self.base = float(base)
        self.n = len(self.contributions)
        self.deterministic = True
        self.description = f"additive oracle over {self.n} points"

    def evaluate(self, subset: SubsetKey, eval_seed: int | None = None) -> float:
        if not subset.members:
            return self.base
        return self.base + float(self.contributions[list(subset.members)].sum())


class CountingOracle(UtilityOracle):
    """Delegating wrapper that counts actual evaluations (budget audits)."""

    def __init__(self, inner: UtilityOracle):
        self.inner = inner
        self.n = inner.n
        self.deterministic = inner.deterministic
        self.description = f"counting[{inner.description}]"
        self.out_of_range = inner.out_of_range
        self.calls = 0

    def evaluate(self, subset: SubsetKey, eval_seed: int | None = None) -> float:
        self.calls += 1
        return self.inner.evaluate(subset, eval_seed)


def materialize_table(
    oracle: UtilityOracle, *, max_n: int = MAX_EXACT_N, eval_seed: int | None = None
) -> np.ndarray:
    """Evaluate every subset once and return the dense 2^n score table.

    Stochastic oracles are sampled once per subset (seeded by ``eval_seed``),
    which freezes one realization of the noisy utility.
    """
    n = oracle.n
    if n > max_n:
        raise CohortTooLarge(f"2^{n} table exceeds the n={max_n} enumeration cap")
    if isinstance(oracle, TableOracle):
        return oracle.table.copy()
    table = np.empty(1 << n, dtype=float)
    for mask in range(1 << n):
        table[mask] = oracle.evaluate(SubsetKey.from_mask(mask, n), eval_seed)
    if not np.all(np.isfinite(table)):
        raise OracleFailure("oracle produced non-finite scores during enumeration")
    return table


def popcount_table(n: int) -> np.ndarray:
    """Number of set bits for every mask below 2^n (vectorized SWAR)."""
    if n > MAX_EXACT_N + 5:
        raise CohortTooLarge(f"popcount table for n={n} would be too large")
    v = np.arange(1 << n, dtype=np.uint64)
    v = v - ((v >> np.uint64(1)) & np.uint64(0x5555555555555555))
    v = (v & np.uint64(0x3333333333333333)) + (
        (v >> np.uint64(2)) & np.uint64(0x3333333333333333)
    )
    v = (v + (v >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return ((v * np.uint64(0x0101010101010101)) >> np.uint64(56)).astype(np.int64)
