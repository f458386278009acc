"""Exact semivalue computation by full enumeration.

All operations here are exact: the oracle is materialized into a dense
2^n score table (each subset evaluated once) and values are computed from

    value(i) = (1/n) * sum_{S : i not in S} w(|S|+1) * [U(S+i) - U(S)],

which specializes to leave-one-out, Shapley, Banzhaf and Beta-weighted
values through the :class:`~robustval.weights.SemivalueSpec`.  Enumeration is
capped (default n <= 20); Monte Carlo estimation beyond that scale lives in
:mod:`robustval.estimators`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidParam, InvalidTau, SamePoint
from .oracles import MAX_EXACT_N, UtilityOracle, materialize_table, popcount_table
from .subsets import SubsetKey
from .weights import SemivalueSpec


@dataclass
class ValueVector:
    """Per-point values with their provenance.

    ``exact`` distinguishes enumeration results from Monte Carlo estimates;
    serialization with :meth:`to_dict` is the stable interchange schema.
    """

    values: np.ndarray
    spec_label: str
    n: int
    exact: bool = True

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.n,):
            raise InvalidParam(
                f"expected {self.n} values, got shape {self.values.shape}"
            )

    def to_dict(self) -> dict:
        return {
            "spec": self.spec_label,
            "n": self.n,
            "exact": self.exact,
            "values": [float(v) for v in self.values],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, payload: dict) -> "ValueVector":
        return cls(
            values=np.asarray(payload["values"], dtype=float),
            spec_label=payload["spec"],
            n=int(payload["n"]),
            exact=bool(payload["exact"]),
        )


@dataclass(frozen=True)
class DistinguishabilityProfile:
    """Size-stratified mean utility gaps between a pair of points.

    ``deltas[k-1]`` is the average of ``U(S+i) - U(S+j)`` over coalitions
    ``S`` of size ``k-1`` drawn from the cohort minus ``{i, j}``, for
    ``k = 1..n-1``.
    """

    i: int
    j: int
    n: int
    deltas: tuple[float, ...] = field(repr=False)

    @property
    def max_tau(self) -> float:
        """Largest threshold at which the pair is still distinguishable."""
        return min(self.deltas)

    def is_distinguishable(self, tau: float) -> bool:
        """True when every per-size gap is at least ``tau`` (must be > 0)."""
        if tau <= 0:
            raise InvalidTau(f"threshold must be positive, got {tau}")
        return all(d >= tau for d in self.deltas)


def _check_pair(n: int, i: int, j: int) -> None:
    if not (0 <= i < n and 0 <= j < n):
        raise InvalidParam(f"pair ({i}, {j}) outside cohort of size {n}")
    if i == j:
        raise SamePoint(f"pairwise operation needs distinct points, got i=j={i}")


def marginal_contribution(oracle: UtilityOracle, i: int, s: SubsetKey) -> float:
    """U(S+i) - U(S); raises if ``i`` is already a member."""
    if not 0 <= i < oracle.n:
        raise InvalidParam(f"point {i} outside cohort of size {oracle.n}")
    with_i = s.with_member(i)
    return oracle.evaluate(with_i) - oracle.evaluate(s)


def exact_semivalue(
    oracle: UtilityOracle, spec: SemivalueSpec, *, max_n: int = MAX_EXACT_N
) -> ValueVector:
    """Exact per-point values for ``spec`` by full subset enumeration.

    The oracle is queried at most once per subset (2^n evaluations total).
    """
    n = oracle.n
    if spec.n != n:
        raise InvalidParam(f"spec is for n={spec.n}, oracle for n={n}")
    table = materialize_table(oracle, max_n=max_n)
    sizes = popcount_table(n)
    masks = np.arange(1 << n, dtype=np.int64)
    wvec = spec.as_array()  # wvec[|S|] == w(|S|+1)
    values = np.empty(n, dtype=float)
    for i in range(n):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        gains = table[without + bit] - table[without]
        values[i] = float(np.dot(wvec[sizes[without]], gains)) / n
    return ValueVector(values=values, spec_label=spec.label, n=n, exact=True)


def distinguishability_profile(
    oracle: UtilityOracle, i: int, j: int, *, max_n: int = MAX_EXACT_N
) -> DistinguishabilityProfile:
    """Exact per-size mean gaps between points ``i`` and ``j``."""
    n = oracle.n
    _check_pair(n, i, j)
    if n < 2:
        raise InvalidParam("need at least two points for a pairwise profile")
    table = materialize_table(oracle, max_n=max_n)
    sizes = popcount_table(n)
    masks = np.arange(1 << n, dtype=np.int64)
    bit_i, bit_j = 1 << i, 1 << j
    base = masks[(masks & (bit_i | bit_j)) == 0]  # S over N \ {i, j}
    diffs = table[base + bit_i] - table[base + bit_j]
    ssize = sizes[base]
    sums = np.bincount(ssize, weights=diffs, minlength=n - 1)
    counts = np.bincount(ssize, minlength=n - 1).astype(float)
    deltas = sums[: n - 1] / counts[: n - 1]
    return DistinguishabilityProfile(i=i, j=j, n=n, deltas=tuple(float(d) for d in deltas))


def pairwise_difference(
    oracle: UtilityOracle,
    spec: SemivalueSpec,
    i: int,
    j: int,
    *,
    max_n: int = MAX_EXACT_N,
) -> float:
    """Scaled value gap  D(i, j) = n * (value(i) - value(j)).

    Computed through the size-stratified decomposition

        D = sum_{k=1}^{n-1} (w(k) + w(k+1)) * C(n-2, k-1) * delta_k,

    which agrees with ``n * (value(i) - value(j))`` from
    :func:`exact_semivalue` but isolates how each coalition size contributes.
    """
    n = oracle.n
    if spec.n != n:
        raise InvalidParam(f"spec is for n={spec.n}, oracle for n={n}")
    profile = distinguishability_profile(oracle, i, j, max_n=max_n)
    return math.fsum(
        (spec.w(k) + spec.w(k + 1)) * math.comb(n - 2, k - 1) * profile.deltas[k - 1]
        for k in range(1, n)
    )


def value_ranking(values: Sequence[float]) -> np.ndarray:
    """Indices sorted by descending value (ties broken by index)."""
    arr = np.asarray(values, dtype=float)
    return np.lexsort((np.arange(len(arr)), -arr))
