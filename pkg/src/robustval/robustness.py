"""Robustness theory for semivalues: safety margins, adversarial utility
perturbations, and Lipschitz analysis of the value map.

Conventions
-----------
For a pair of points ``(i, j)`` write ``f(k) = w(k) + w(k+1)`` (with
``w(n+1) = 0``) and ``C_k = C(n-2, k-1)`` for ``k = 1..n-1``.  The scaled
value gap decomposes over coalition sizes as

    D(i, j) = sum_k  C_k * f(k) * delta_k,

where ``delta_k`` is the mean utility gap at size ``k`` (see
:func:`robustval.exact.distinguishability_profile`).  Because of the weight
normalization, ``sum_k C_k * f(k) = n`` for every valid spec, so for a pair
that is distinguishable at threshold ``tau`` (every ``delta_k >= tau``) the
gap is at least ``tau * n``.

The *safety margin* is the score-table perturbation budget (vector l2 norm
over all 2^n subset scores) below which no such pair can have its order
flipped:

    margin(tau) = tau * (sum_k C_k * f(k)) / sqrt(sum_k C_k * f(k)^2).

Constant weights (the Banzhaf value) maximize this margin at
``tau * 2^(n/2-1)``; leave-one-out sits at the minimum ``tau``.

The *semivalue matrix* is the linear map from the score table to the value
vector; its operator norm is the Lipschitz constant of the values with
respect to utility perturbations and has the closed form
``sqrt(d1 + (n-1) * d2)`` computed by :func:`lipschitz_constant`.

Binomial coefficients are taken exactly (arbitrary-precision integers) at
desk scale and in log space beyond the float range; sums use compensated
summation so Shapley-style weights spanning many orders of magnitude do not
lose the small terms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    CohortTooLarge,
    InvalidParam,
    InvalidTau,
    TauTooLarge,
)
from .exact import distinguishability_profile, pairwise_difference, _check_pair
from .oracles import (
    MAX_EXACT_N,
    TableOracle,
    UtilityOracle,
    materialize_table,
    popcount_table,
)
from .seeding import stable_hash
from .subsets import SubsetKey
from .weights import SemivalueSpec, log_comb

#: Largest cohort for which the explicit n x 2^n matrix is materialized.
MAX_NUMERIC_N = 12

#: Above this cohort size binomials leave the exact-integer fast path.
_EXACT_COMB_LIMIT = 170


def _binomial(n: int, k: int) -> float:
    """C(n, k) as a float: exact integers at desk scale, log-space beyond."""
    if k < 0 or k > n:
        return 0.0
    if n <= _EXACT_COMB_LIMIT:
        return float(math.comb(n, k))
    return math.exp(log_comb(n, k))


def _pair_coefficients(spec: SemivalueSpec) -> np.ndarray:
    """f(k) = w(k) + w(k+1) for k = 1..n-1 (w(n+1) = 0)."""
    n = spec.n
    return np.array([spec.w(k) + spec.w(k + 1) for k in range(1, n)], dtype=float)


@dataclass(frozen=True)
class SafetyMarginReport:
    """Closed-form safety margin with its per-size decomposition.

    ``per_term[k-1] = C(n-2, k-1) * (w(k) + w(k+1))``; the margin equals
    ``tau * sum(per_term) / sqrt(sum_k C(n-2,k-1) * (w(k)+w(k+1))^2)``.
    """

    spec_label: str
    n: int
    tau: float
    margin: float
    per_term: tuple[float, ...] = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec_label,
            "n": self.n,
            "tau": self.tau,
            "margin": self.margin,
            "per_term": list(self.per_term),
        }


@dataclass(frozen=True)
class LipschitzReport:
    """Lipschitz constant of the utility-to-value map.

    ``closed_form = sqrt(d1 + (n-1)*d2)`` with

        d1 = (2/n^2) * sum_{k=1}^{n}   C(n-1, k-1) * w(k)^2
        d2 = (1/n^2) * sum_{k=0}^{n-2} C(n-2, k) * (w(k+2) - w(k+1))^2.

    ``numeric_operator_norm`` is the largest singular value of the explicit
    semivalue matrix and is only present when it was requested (n within the
    numeric cap).
    """

    spec_label: str
    n: int
    d1: float
    d2: float
    closed_form: float
    numeric_operator_norm: float | None = None

    def to_dict(self) -> dict:
        payload = {
            "spec": self.spec_label,
            "n": self.n,
            "d1": self.d1,
            "d2": self.d2,
            "closed_form": self.closed_form,
        }
        if self.numeric_operator_norm is not None:
            payload["numeric_operator_norm"] = self.numeric_operator_norm
        return payload


def safety_margin(spec: SemivalueSpec, tau: float) -> SafetyMarginReport:
    """Smallest score-table l2 perturbation that can reverse a tau-gap pair.

    Requires ``tau > 0`` and ``n >= 2``.  The numerator
    ``sum_k C(n-2,k-1) * (w(k)+w(k+1))`` telescopes to ``n`` for every
    normalized spec, so the margin is always positive.
    """
    if tau <= 0:
        raise InvalidTau(f"threshold must be positive, got {tau}")
    if spec.n < 2:
        raise InvalidParam("safety margin needs a cohort of at least 2 points")
    n = spec.n
    f = _pair_coefficients(spec)
    coeffs = np.array([_binomial(n - 2, k - 1) for k in range(1, n)], dtype=float)
    per_term = coeffs * f
    if n > _EXACT_COMB_LIMIT and np.all(f >= 0.0):
        # Scale-free ratio in log space: huge binomials never materialize.
        logs = np.array(
            [log_comb(n - 2, k - 1) for k in range(1, n)], dtype=float
        )
        with np.errstate(divide="ignore"):
            logf = np.where(f > 0.0, np.log(np.maximum(f, 1e-300)), -np.inf)
        from scipy.special import logsumexp

        log_num = logsumexp(logs + logf)
        log_den = 0.5 * logsumexp(logs + 2.0 * logf)
        margin = tau * math.exp(log_num - log_den)
    else:
        num = math.fsum(per_term)
        den = math.sqrt(math.fsum(c * fk * fk for c, fk in zip(coeffs, f)))
        margin = tau * num / den
    return SafetyMarginReport(
        spec_label=spec.label,
        n=n,
        tau=tau,
        margin=float(margin),
        per_term=tuple(float(t) for t in per_term),
    )


def worst_case_utility(n: int, i: int, j: int, tau: float) -> TableOracle:
    """The extremal oracle with a flat distinguishability profile.

    Scores sit at 0.5 except that subsets containing ``i`` but not ``j``
    gain ``tau/2`` and those containing ``j`` but not ``i`` lose ``tau/2``,
    so every per-size gap equals ``tau`` exactly.  Requires ``tau <= 1`` to
    keep scores inside ``[0, 1]``.
    """
    _check_pair(n, i, j)
    if n > MAX_EXACT_N:
        raise CohortTooLarge(f"n={n} exceeds the enumeration cap {MAX_EXACT_N}")
    if tau < 0:
        raise InvalidTau(f"gap must be non-negative, got {tau}")
    if tau > 1.0:
        raise TauTooLarge(f"gap {tau} would push scores outside [0, 1]")
    masks = np.arange(1 << n, dtype=np.int64)
    has_i = (masks >> i) & 1
    has_j = (masks >> j) & 1
    table = np.full(1 << n, 0.5)
    table[(has_i == 1) & (has_j == 0)] += tau / 2.0
    table[(has_j == 1) & (has_i == 0)] -= tau / 2.0
    return TableOracle(
        table, n, description=f"worst-case oracle (i={i}, j={j}, tau={tau:g})"
    )


class PerturbedOracle(TableOracle):
    """Result of :func:`adversarial_perturbation`: a table oracle plus
    diagnostics of the attack that produced it."""

    def __init__(
        self,
        table: np.ndarray,
        n: int,
        *,
        magnitude: float,
        flip_threshold: float,
        gap_before: float,
        gap_after: float,
        degenerate_pair: bool,
        description: str,
    ):
        super().__init__(table, n, description=description, allow_out_of_range=True)
        self.magnitude = magnitude
        self.flip_threshold = flip_threshold
        self.gap_before = gap_before
        self.gap_after = gap_after
        self.degenerate_pair = degenerate_pair


def adversarial_perturbation(
    oracle: UtilityOracle,
    spec: SemivalueSpec,
    i: int,
    j: int,
    magnitude: float,
    *,
    max_n: int = MAX_EXACT_N,
) -> PerturbedOracle:
    """Spend an l2 budget on the score table to push value(i) below value(j).

    The budget is placed on the subsets containing ``i`` (and not ``j``),
    each moved proportionally to its gap coefficient ``f(|S|) = w(|S|) +
    w(|S|+1)`` and against the sign of the current gap ``D(i, j)``.  Along
    this direction the gap shrinks at rate ``sqrt(sum_k C_k f(k)^2)`` per
    unit of budget, so the order flips exactly when

        magnitude >= |D(i, j)| / sqrt(sum_k C(n-2,k-1) * (w(k)+w(k+1))^2),

    the ``flip_threshold`` reported on the result.  On the worst-case oracle
    of :func:`worst_case_utility` this threshold coincides with the
    closed-form safety margin.  A zero starting gap leaves the direction
    arbitrary; the perturbed oracle is still returned, flagged with
    ``degenerate_pair=True``.  Scores may leave ``[0, 1]``; the oracle's
    ``out_of_range`` flag records this rather than clipping.
    """
    n = oracle.n
    _check_pair(n, i, j)
    if spec.n != n:
        raise InvalidParam(f"spec is for n={spec.n}, oracle for n={n}")
    if magnitude < 0:
        raise InvalidParam(f"perturbation magnitude must be >= 0, got {magnitude}")
    table = materialize_table(oracle, max_n=max_n)
    gap_before = pairwise_difference(oracle, spec, i, j, max_n=max_n)

    masks = np.arange(1 << n, dtype=np.int64)
    sizes = popcount_table(n)
    bit_i, bit_j = 1 << i, 1 << j
    base = masks[(masks & (bit_i | bit_j)) == 0]  # S over N \ {i, j}
    f_by_size = _pair_coefficients(spec)  # f(k), k = |S|+1 in 1..n-1
    direction = np.zeros_like(table)
    direction[base + bit_i] = f_by_size[sizes[base]]
    norm = float(np.linalg.norm(direction))
    degenerate = abs(gap_before) == 0.0
    sign = -1.0 if gap_before >= 0 else 1.0

    perturbed = table.copy()
    if norm > 0 and magnitude > 0:
        perturbed += (sign * magnitude / norm) * direction
        gap_after = gap_before + sign * magnitude * norm
    else:
        gap_after = gap_before
    flip_threshold = abs(gap_before) / norm if norm > 0 else math.inf

    return PerturbedOracle(
        perturbed,
        n,
        magnitude=magnitude,
        flip_threshold=float(flip_threshold),
        gap_before=float(gap_before),
        gap_after=float(gap_after),
        degenerate_pair=degenerate,
        description=f"perturbed[{oracle.description}] (i={i}, j={j}, c={magnitude:g})",
    )


def semivalue_matrix(spec: SemivalueSpec, *, max_n: int = MAX_NUMERIC_N) -> np.ndarray:
    """The explicit n x 2^n linear map from score tables to value vectors.

    Columns follow ascending mask order; entry (i, S) is ``w(|S|)/n`` when
    ``i`` is in ``S`` and ``-w(|S|+1)/n`` otherwise, so for any score table
    ``U``, ``matrix @ U`` equals the exact semivalue vector.
    """
    n = spec.n
    if n > max_n:
        raise CohortTooLarge(f"n={n} exceeds the numeric cap {max_n}")
    sizes = popcount_table(n)
    masks = np.arange(1 << n, dtype=np.int64)
    wvec = spec.as_array()  # wvec[k-1] = w(k)
    matrix = np.empty((n, 1 << n), dtype=float)
    for i in range(n):
        has_i = ((masks >> i) & 1).astype(bool)
        matrix[i, has_i] = wvec[sizes[has_i] - 1] / n
        matrix[i, ~has_i] = -wvec[sizes[~has_i]] / n
    return matrix


def lipschitz_constant(
    spec: SemivalueSpec, numeric: bool = False, *, max_n: int = MAX_NUMERIC_N
) -> LipschitzReport:
    """Operator norm of the value map, closed form and (optionally) by SVD."""
    n = spec.n
    if n < 2:
        raise InvalidParam("Lipschitz analysis needs a cohort of at least 2 points")
    d1 = (2.0 / (n * n)) * math.fsum(
        _binomial(n - 1, k - 1) * spec.w(k) ** 2 for k in range(1, n + 1)
    )
    d2 = (1.0 / (n * n)) * math.fsum(
        _binomial(n - 2, k) * (spec.w(k + 2) - spec.w(k + 1)) ** 2
        for k in range(0, n - 1)
    )
    closed = math.sqrt(d1 + (n - 1) * d2)
    numeric_norm: float | None = None
    if numeric:
        matrix = semivalue_matrix(spec, max_n=max_n)
        numeric_norm = float(np.linalg.norm(matrix, 2))
    return LipschitzReport(
        spec_label=spec.label,
        n=n,
        d1=float(d1),
        d2=float(d2),
        closed_form=float(closed),
        numeric_operator_norm=numeric_norm,
    )


# ---------------------------------------------------------------------------
# Noise models


@dataclass(frozen=True)
class NoiseModel:
    """Declarative description of utility noise.

    kinds:
      * ``gaussian`` — adds N(0, sigma^2) per subset, frozen per (seed, subset)
        so the same subset queried twice in one experiment sees one draw.
      * ``repeat_average`` — averages ``repeats`` independent evaluations of a
        stochastic oracle (variance shrinks like 1/repeats).
      * ``bounded_adversarial`` — routes to :func:`adversarial_perturbation`
        with the stored spec, pair and magnitude.
    """

    kind: str
    sigma: float = 0.0
    repeats: int = 1
    magnitude: float = 0.0
    pair: tuple[int, int] | None = None
    spec: SemivalueSpec | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("gaussian", "repeat_average", "bounded_adversarial"):
            raise InvalidParam(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise InvalidParam(f"sigma must be >= 0, got {self.sigma}")
        if self.repeats < 1:
            raise InvalidParam(f"repeats must be >= 1, got {self.repeats}")
        if self.kind == "bounded_adversarial" and (
            self.pair is None or self.spec is None
        ):
            raise InvalidParam("bounded_adversarial needs a spec and a point pair")


class GaussianNoisyOracle(UtilityOracle):
    """Base oracle plus a frozen Gaussian perturbation of the score table.

    The draw for a subset is a pure function of (seed, subset text), so one
    noise realization is shared by all queries in an experiment; a fresh seed
    yields a fresh realization.  Scores may leave [0, 1] (flagged, unclipped).
    """

    def __init__(self, inner: UtilityOracle, sigma: float, seed: int):
        self.inner = inner
        self.sigma = float(sigma)
        self.seed = int(seed)
        self.n = inner.n
        self.deterministic = inner.deterministic
        self.description = f"gaussian(sigma={sigma:g},seed={seed})[{inner.description}]"
        self.out_of_range = True

    def evaluate(self, subset: SubsetKey, eval_seed: int | None = None) -> float:
        base = self.inner.evaluate(subset, eval_seed)
        z = np.random.default_rng(
            stable_hash("gaussian-noise", self.seed, subset.text)
        ).standard_normal()
        return base + self.sigma * float(z)


class RepeatAverageOracle(UtilityOracle):
    """Mean of k independent evaluations of a stochastic base oracle."""

    def __init__(self, inner: UtilityOracle, repeats: int, seed: int):
        self.inner = inner
        self.repeats = int(repeats)
        self.seed = int(seed)
        self.n = inner.n
        self.deterministic = False
        self.description = f"repeat_average(k={repeats})[{inner.description}]"
        self.out_of_range = inner.out_of_range

    def evaluate(self, subset: SubsetKey, eval_seed: int | None = None) -> float:
        scores = [
            self.inner.evaluate(
                subset, stable_hash("repeat", self.seed, eval_seed, r)
            )
            for r in range(self.repeats)
        ]
        return float(np.mean(scores))


def apply_noise(oracle: UtilityOracle, model: NoiseModel) -> UtilityOracle:
    """Wrap ``oracle`` according to ``model``; see :class:`NoiseModel`.

    ``repeat_average`` on an already-deterministic oracle is a no-op: the
    base oracle is returned unchanged with a warning.
    """
    if model.kind == "gaussian":
        if model.sigma == 0.0:
            return oracle
        return GaussianNoisyOracle(oracle, model.sigma, model.seed)
    if model.kind == "repeat_average":
        if oracle.deterministic:
            warnings.warn(
                "repeat_average over a deterministic oracle has no effect; "
                "returning the base oracle",
                stacklevel=2,
            )
            return oracle
        if model.repeats == 1:
            return oracle
        return RepeatAverageOracle(oracle, model.repeats, model.seed)
    # bounded_adversarial
    i, j = model.pair  # validated non-None in __post_init__
    return adversarial_perturbation(oracle, model.spec, i, j, model.magnitude)
