"""Semivalue weight families and their normalization contract.

A semivalue on a cohort of ``n`` points is determined by a weight function
``w(k)`` over coalition sizes ``k = 1..n`` (the size *including* the point
being valued) subject to

    sum_{k=1}^{n}  C(n-1, k-1) * w(k)  =  n.

The per-point value is then

    value(i) = (1/n) * sum_{S not containing i} w(|S|+1) * [U(S+i) - U(S)].

Built-in families:

* ``shapley``   w(k) = 1 / C(n-1, k-1)       (uniform over coalition sizes)
* ``loo``       w(k) = n * [k == n]          (leave-one-out, grand coalition only)
* ``banzhaf``   w(k) = n / 2^(n-1)           (constant; uniform over subsets)
* ``beta``      w(k) proportional to Beta(k+b-1, n-k+a) / Beta(a, b),
                rescaled so the constraint above holds exactly.

Normalization sums are evaluated with exact integer binomials
(``math.comb``) and compensated summation, so the check does not lose
precision or overflow for any cohort size where the weights themselves are
representable.  Scale-free ratios of binomial sums (safety margins, Lipschitz
constants) live in :mod:`robustval.robustness` and use log-space arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidParam, NormalizationViolation

#: Relative tolerance for the normalization constraint.
NORMALIZATION_RTOL = 1e-9

WEIGHT_FAMILIES = ("shapley", "loo", "banzhaf", "beta", "custom")


def log_comb(n: int, k: int) -> float:
    """log C(n, k); -inf outside the valid range."""
    if k < 0 or k > n:
        return -math.inf
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def normalization_sum(weights: Sequence[float], n: int) -> float:
    """sum_k C(n-1, k-1) * w(k), computed with exact binomials and fsum."""
    return math.fsum(math.comb(n - 1, k - 1) * weights[k - 1] for k in range(1, n + 1))


@dataclass(frozen=True)
class SemivalueSpec:
    """A validated semivalue: cohort size, per-size weights, display label.

    ``weights[k-1]`` is ``w(k)`` for coalition size ``k``.  Construction
    fails with :class:`NormalizationViolation` unless the weights satisfy
    the normalization constraint to relative tolerance ``1e-9``.
    """

    n: int
    weights: tuple[float, ...]
    label: str = "custom"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvalidParam(f"cohort size must be >= 1, got {self.n}")
        if len(self.weights) != self.n:
            raise InvalidParam(
                f"expected {self.n} weights, got {len(self.weights)}"
            )
        if not all(math.isfinite(w) for w in self.weights):
            raise InvalidParam("weights must be finite")
        total = normalization_sum(self.weights, self.n)
        if not math.isclose(total, self.n, rel_tol=NORMALIZATION_RTOL, abs_tol=0.0):
            raise NormalizationViolation(
                f"sum C(n-1,k-1) w(k) = {total!r}, expected {self.n}"
            )

    def w(self, k: int) -> float:
        """Weight for coalition size ``k`` (1-indexed); 0 outside ``1..n``."""
        if 1 <= k <= self.n:
            return self.weights[k - 1]
        return 0.0

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @property
    def is_banzhaf(self) -> bool:
        c = self.n / 2.0 ** (self.n - 1)
        return all(math.isclose(w, c, rel_tol=1e-12, abs_tol=1e-300) for w in self.weights)


def rescaled(raw: Sequence[float], n: int, label: str = "custom") -> SemivalueSpec:
    """Rescale a raw weight profile so the normalization holds exactly.

    The profile must not be orthogonal to the binomial row (its weighted sum
    must be nonzero); the shape is preserved up to the positive or negative
    factor ``n / sum``.
    """
    if len(raw) != n:
        raise InvalidParam(f"expected {n} raw weights, got {len(raw)}")
    total = normalization_sum(raw, n)
    if total == 0.0 or not math.isfinite(total):
        raise InvalidParam("raw weights have zero or non-finite normalization sum")
    scale = n / total
    return SemivalueSpec(n, tuple(float(w) * scale for w in raw), label=label)


def _beta_raw(n: int, alpha: float, beta: float) -> list[float]:
    # log Beta(k+beta-1, n-k+alpha) - log Beta(alpha, beta), exponentiated
    # after subtracting the max so tiny/huge parameters stay in range.
    def log_beta_fn(a: float, b: float) -> float:
        return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)

    ref = log_beta_fn(alpha, beta)
    logs = [log_beta_fn(k + beta - 1.0, n - k + alpha) - ref for k in range(1, n + 1)]
    peak = max(logs)
    return [math.exp(lw - peak) for lw in logs]


def make_weights(
    kind: str,
    n: int,
    *,
    alpha: float | None = None,
    beta: float | None = None,
    weights: Sequence[float] | None = None,
) -> SemivalueSpec:
    """Build a :class:`SemivalueSpec` from a named family.

    ``beta`` requires ``alpha > 0`` and ``beta > 0``; ``custom`` requires an
    explicit weight vector that already satisfies the normalization.
    """
    if n < 1:
        raise InvalidParam(f"cohort size must be >= 1, got {n}")
    if kind == "shapley":
        return SemivalueSpec(
            n,
            tuple(1.0 / math.comb(n - 1, k - 1) for k in range(1, n + 1)),
            label="shapley",
        )
    if kind == "loo":
        w = [0.0] * n
        w[n - 1] = float(n)
        return SemivalueSpec(n, tuple(w), label="loo")
    if kind == "banzhaf":
        c = n / 2.0 ** (n - 1)
        return SemivalueSpec(n, (c,) * n, label="banzhaf")
    if kind == "beta":
        if alpha is None or beta is None or alpha <= 0 or beta <= 0:
            raise InvalidParam(
                f"beta family needs alpha > 0 and beta > 0, got {alpha}, {beta}"
            )
        return rescaled(_beta_raw(n, alpha, beta), n, label=f"beta({alpha:g},{beta:g})")
    if kind == "custom":
        if weights is None:
            raise InvalidParam("custom family needs an explicit weight vector")
        return SemivalueSpec(n, tuple(float(w) for w in weights), label="custom")
    raise InvalidParam(f"unknown weight family {kind!r}; choose from {WEIGHT_FAMILIES}")
