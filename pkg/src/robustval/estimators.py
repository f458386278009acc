"""Monte Carlo value estimators over persistable sample ledgers.

The maximum-sample-reuse (MSR) estimator targets the Banzhaf value: draw
subsets ``S_1..S_m`` i.i.d. uniformly from the power set (each point included
independently with probability 1/2) and score each once; the estimate for
point ``i`` is the mean score over subsets containing ``i`` minus the mean
over subsets that do not.  Every evaluation is reused by all ``n`` points,
so ``m`` oracle calls serve the whole cohort.  If either partition for a
point is empty the estimate is 0 and the point is recorded as degenerate.

The simple Monte Carlo estimator averages marginal contributions
``U(S+i) - U(S)`` with ``S`` uniform over subsets avoiding ``i``; it spends
``2 * n * m_per_point`` evaluations.  With a non-Banzhaf weight spec each
marginal is importance-weighted by ``2^(n-1) * w(|S|+1) / n`` (identically 1
for Banzhaf); MSR itself is not exposed for non-constant weights, whose
reuse reweighting is numerically unstable — such requests belong here.

Permutation sampling estimates the Shapley value from random orderings at
``n + 1`` evaluations per permutation.

Reproducibility: the subset sequence is a pure function of the sampler seed,
and each draw carries an evaluation seed derived from (sampler seed, subset
text, draw index), so stochastic oracles are replayable draw-for-draw.
Duplicate subsets are distinct draws: re-evaluated under a stochastic
oracle, served from a per-ledger cache under a deterministic one.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import InvalidParam, OracleFailure, SchemeMismatch, StorageFailure
from .exact import ValueVector
from .oracles import UtilityOracle
from .seeding import derive_eval_seed, stable_hash
from .subsets import SubsetKey
from .weights import SemivalueSpec

SCHEMES = ("uniform_powerset", "per_point_uniform", "permutation")


class LedgerDraw(NamedTuple):
    index: int
    subset: SubsetKey
    score: float
    eval_seed: int


@dataclass
class SampleLedger:
    """An ordered, replayable record of oracle evaluations."""

    n: int
    scheme: str
    sampler_seed: int
    draws: list[LedgerDraw] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise InvalidParam(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")

    def __len__(self) -> int:
        return len(self.draws)

    def scores(self) -> np.ndarray:
        return np.array([d.score for d in self.draws], dtype=float)

    def membership_matrix(self) -> np.ndarray:
        """(m, n) boolean matrix; row t marks the members of draw t."""
        matrix = np.zeros((len(self.draws), self.n), dtype=bool)
        for t, draw in enumerate(self.draws):
            matrix[t, list(draw.subset.members)] = True
        return matrix

    def prefix(self, m: int) -> "SampleLedger":
        """The ledger truncated to its first ``m`` draws (shared records)."""
        if not 0 <= m <= len(self.draws):
            raise InvalidParam(f"prefix length {m} outside [0, {len(self.draws)}]")
        return SampleLedger(self.n, self.scheme, self.sampler_seed, self.draws[:m])

    def save(self, path: str | Path) -> None:
        path = Path(path)
        try:
            with path.open("w", encoding="utf-8") as fh:
                header = {
                    "n": self.n,
                    "sampler_seed": self.sampler_seed,
                    "scheme": self.scheme,
                }
                fh.write(json.dumps(header, sort_keys=True) + "\n")
                for d in self.draws:
                    record = {
                        "idx": d.index,
                        "subset": d.subset.text,
                        "score": d.score,
                        "eval_seed": d.eval_seed,
                    }
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
        except OSError as exc:
            raise StorageFailure(f"cannot write ledger to {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "SampleLedger":
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise StorageFailure(f"cannot read ledger from {path}: {exc}") from exc
        if not lines:
            raise StorageFailure(f"ledger file {path} is empty")
        try:
            header = json.loads(lines[0])
            ledger = cls(
                n=int(header["n"]),
                scheme=str(header["scheme"]),
                sampler_seed=int(header["sampler_seed"]),
            )
            for line in lines[1:]:
                if not line.strip():
                    continue
                rec = json.loads(line)
                ledger.draws.append(
                    LedgerDraw(
                        index=int(rec["idx"]),
                        subset=SubsetKey.from_text(rec["subset"], ledger.n),
                        score=float(rec["score"]),
                        eval_seed=int(rec["eval_seed"]),
                    )
                )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise StorageFailure(f"malformed ledger file {path}: {exc}") from exc
        return ledger


@dataclass
class ValueEstimate(ValueVector):
    """A Monte Carlo :class:`ValueVector` with its sampling provenance."""

    estimator: str = ""
    m: int = 0
    degenerate_points: tuple[int, ...] = ()
    sampler_seed: int | None = None

    def to_dict(self) -> dict:
        payload = super().to_dict()
        payload["estimator"] = self.estimator
        payload["m"] = self.m
        payload["degenerate_points"] = list(self.degenerate_points)
        return payload


@dataclass(frozen=True)
class ApproximationTarget:
    """An (epsilon, delta) accuracy goal in a chosen norm."""

    epsilon: float
    delta: float
    norm: str = "linf"

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise InvalidParam(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise InvalidParam(f"delta must be in (0, 1), got {self.delta}")
        if self.norm not in ("linf", "l2"):
            raise InvalidParam(f"norm must be 'linf' or 'l2', got {self.norm!r}")


def plan_sample_size(target: ApproximationTarget, n: int, estimator: str = "msr") -> int:
    """Samples guaranteeing the target with the concentration-proof constants.

    MSR: m = 32 * eps^-2 * ln(5n / delta) uniform draws (l2 multiplies by n).
    Simple MC: per-point samples m = ln(2n / delta) / (2 eps^2), same n
    factor for l2.  Returned values are the exact ceilings, no slack added.
    """
    if n < 1:
        raise InvalidParam(f"cohort size must be >= 1, got {n}")
    eps2 = target.epsilon**2
    if estimator == "msr":
        m = 32.0 / eps2 * math.log(5.0 * n / target.delta)
        if target.norm == "l2":
            m *= n
    elif estimator == "simple_mc":
        m = math.log(2.0 * n / target.delta) / (2.0 * eps2)
        if target.norm == "l2":
            m *= n
    else:
        raise InvalidParam(f"no sample-size rule for estimator {estimator!r}")
    return max(1, math.ceil(m))


# ---------------------------------------------------------------------------
# Sampling


def _uniform_membership(n: int, m: int, seed: int) -> np.ndarray:
    """(m, n) boolean membership rows, each cell an independent fair coin."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=(m, n), dtype=np.int8).astype(bool)


def _subset_from_row(row: np.ndarray, n: int) -> SubsetKey:
    return SubsetKey(tuple(int(i) for i in np.flatnonzero(row)), n)


def _checked_score(oracle: UtilityOracle, subset: SubsetKey, eval_seed: int) -> float:
    try:
        score = float(oracle.evaluate(subset, eval_seed))
    except Exception as exc:  # noqa: BLE001 - annotate with the failing subset
        if isinstance(exc, OracleFailure):
            raise
        raise OracleFailure(
            f"oracle raised on subset {subset.text!r}: {exc}"
        ) from exc
    if not math.isfinite(score):
        raise OracleFailure(f"non-finite score for subset {subset.text!r}")
    if not oracle.out_of_range and not -1e-12 <= score <= 1.0 + 1e-12:
        raise OracleFailure(
            f"score {score} outside [0, 1] for subset {subset.text!r}"
        )
    return score


def draw_ledger(
    oracle: UtilityOracle,
    n: int,
    m: int,
    sampler_seed: int,
    *,
    workers: int = 1,
) -> SampleLedger:
    """Sample ``m`` subsets uniformly from the power set and score them.

    The subset sequence depends only on ``sampler_seed``.  Deterministic
    oracles are consulted once per distinct subset (duplicates reuse the
    committed score); stochastic oracles are called once per draw with that
    draw's derived seed.  With ``workers > 1`` evaluations run concurrently;
    scores are committed by draw index, so the ledger is identical either way.
    """
    if m < 1:
        raise InvalidParam(f"need at least one draw, got m={m}")
    if oracle.n != n:
        raise InvalidParam(f"oracle is for n={oracle.n}, ledger for n={n}")
    membership = _uniform_membership(n, m, sampler_seed)
    subsets = [_subset_from_row(membership[t], n) for t in range(m)]
    seeds = [derive_eval_seed(sampler_seed, s.text, t) for t, s in enumerate(subsets)]

    scores: list[float | None] = [None] * m
    if oracle.deterministic:
        first_idx: dict[str, int] = {}
        for t, s in enumerate(subsets):
            first_idx.setdefault(s.text, t)
        unique = sorted(first_idx.values())
        _run_indexed(
            unique, lambda t: _checked_score(oracle, subsets[t], seeds[t]), scores, workers
        )
        for t, s in enumerate(subsets):
            scores[t] = scores[first_idx[s.text]]
    else:
        _run_indexed(
            range(m), lambda t: _checked_score(oracle, subsets[t], seeds[t]), scores, workers
        )

    ledger = SampleLedger(n=n, scheme="uniform_powerset", sampler_seed=sampler_seed)
    ledger.draws = [
        LedgerDraw(index=t, subset=subsets[t], score=scores[t], eval_seed=seeds[t])
        for t in range(m)
    ]
    return ledger


def _run_indexed(
    indices: Sequence[int],
    task: Callable[[int], float],
    out: list,
    workers: int,
) -> None:
    if workers <= 1 or len(indices) <= 1:
        for t in indices:
            out[t] = task(t)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for t, score in zip(indices, pool.map(task, indices)):
            out[t] = score


# ---------------------------------------------------------------------------
# Estimators


def msr_estimate(ledger: SampleLedger) -> ValueEstimate:
    """Banzhaf values by partition means over a uniform-power-set ledger."""
    if ledger.scheme != "uniform_powerset":
        raise SchemeMismatch(
            f"msr_estimate needs a uniform_powerset ledger, got {ledger.scheme!r}"
        )
    n, m = ledger.n, len(ledger.draws)
    values = np.zeros(n, dtype=float)
    degenerate: list[int] = []
    if m == 0:
        degenerate = list(range(n))
    else:
        member = ledger.membership_matrix()
        scores = ledger.scores()
        in_counts = member.sum(axis=0)
        out_counts = m - in_counts
        in_sums = member.T.astype(float) @ scores
        total = float(scores.sum())
        for i in range(n):
            if in_counts[i] == 0 or out_counts[i] == 0:
                degenerate.append(i)
            else:
                values[i] = in_sums[i] / in_counts[i] - (total - in_sums[i]) / out_counts[i]
    return ValueEstimate(
        values=values,
        spec_label="banzhaf",
        n=n,
        exact=False,
        estimator="msr",
        m=m,
        degenerate_points=tuple(degenerate),
        sampler_seed=ledger.sampler_seed,
    )


def _mc_weight_factors(spec: SemivalueSpec | None, n: int) -> np.ndarray:
    """Importance weight per coalition size |S| = 0..n-1: 2^(n-1) w(|S|+1)/n.

    Identically 1.0 for the Banzhaf weights, recovering the plain marginal
    mean.
    """
    if spec is None:
        return np.ones(n, dtype=float)
    if spec.n != n:
        raise InvalidParam(f"spec is for n={spec.n}, oracle for n={n}")
    return np.array(
        [2.0 ** (n - 1) * spec.w(s + 1) / n for s in range(n)], dtype=float
    )


def _simple_mc_contributions(
    oracle: UtilityOracle,
    n: int,
    m_per_point: int,
    seed: int,
    spec: SemivalueSpec | None,
) -> tuple[np.ndarray, SampleLedger]:
    """Per-draw weighted marginals, shape (n, m_per_point), plus the ledger."""
    factors = _mc_weight_factors(spec, n)
    rng = np.random.default_rng(seed)
    ledger = SampleLedger(n=n, scheme="per_point_uniform", sampler_seed=seed)
    contrib = np.empty((n, m_per_point), dtype=float)
    draw_idx = 0
    for i in range(n):
        membership = rng.integers(0, 2, size=(m_per_point, n), dtype=np.int8).astype(bool)
        membership[:, i] = False
        for t in range(m_per_point):
            without = _subset_from_row(membership[t], n)
            with_i = without.with_member(i)
            pair_scores = []
            for subset in (without, with_i):
                eval_seed = derive_eval_seed(seed, subset.text, draw_idx)
                score = _checked_score(oracle, subset, eval_seed)
                ledger.draws.append(LedgerDraw(draw_idx, subset, score, eval_seed))
                pair_scores.append(score)
                draw_idx += 1
            contrib[i, t] = factors[without.size] * (pair_scores[1] - pair_scores[0])
    return contrib, ledger


def simple_mc_estimate(
    oracle: UtilityOracle,
    n: int,
    m_per_point: int,
    seed: int,
    *,
    spec: SemivalueSpec | None = None,
    return_ledger: bool = False,
):
    """Per-point marginal-contribution means; 2*n*m_per_point oracle calls.

    Default target is the Banzhaf value; pass a spec for importance-weighted
    estimation of other semivalues.
    """
    if m_per_point < 1:
        raise InvalidParam(f"need m_per_point >= 1, got {m_per_point}")
    if oracle.n != n:
        raise InvalidParam(f"oracle is for n={oracle.n}, estimate for n={n}")
    contrib, ledger = _simple_mc_contributions(oracle, n, m_per_point, seed, spec)
    estimate = ValueEstimate(
        values=contrib.mean(axis=1),
        spec_label=spec.label if spec is not None else "banzhaf",
        n=n,
        exact=False,
        estimator="simple_mc",
        m=m_per_point,
        degenerate_points=(),
        sampler_seed=seed,
    )
    return (estimate, ledger) if return_ledger else estimate


def _permutation_marginals(
    oracle: UtilityOracle, n: int, permutations: int, seed: int
) -> tuple[np.ndarray, SampleLedger]:
    """Marginal per (permutation, point), shape (permutations, n), plus ledger."""
    rng = np.random.default_rng(seed)
    ledger = SampleLedger(n=n, scheme="permutation", sampler_seed=seed)
    marginals = np.empty((permutations, n), dtype=float)
    memo: dict[int, float] = {}
    draw_idx = 0

    def scored(subset: SubsetKey) -> float:
        nonlocal draw_idx
        if oracle.deterministic and subset.mask in memo:
            score = memo[subset.mask]
        else:
            score = _checked_score(
                oracle, subset, derive_eval_seed(seed, subset.text, draw_idx)
            )
            if oracle.deterministic:
                memo[subset.mask] = score
        ledger.draws.append(
            LedgerDraw(draw_idx, subset, score,
                       derive_eval_seed(seed, subset.text, draw_idx))
        )
        draw_idx += 1
        return score

    for p in range(permutations):
        order = rng.permutation(n)
        prefix = SubsetKey.empty(n)
        prev = scored(prefix)
        for point in order:
            prefix = prefix.with_member(int(point))
            cur = scored(prefix)
            marginals[p, int(point)] = cur - prev
            prev = cur
    return marginals, ledger


def permutation_shapley_estimate(
    oracle: UtilityOracle,
    n: int,
    permutations: int,
    seed: int,
    *,
    return_ledger: bool = False,
):
    """Shapley values by averaging marginals along random orderings."""
    if permutations < 1:
        raise InvalidParam(f"need permutations >= 1, got {permutations}")
    if oracle.n != n:
        raise InvalidParam(f"oracle is for n={oracle.n}, estimate for n={n}")
    marginals, ledger = _permutation_marginals(oracle, n, permutations, seed)
    estimate = ValueEstimate(
        values=marginals.mean(axis=0),
        spec_label="shapley",
        n=n,
        exact=False,
        estimator="permutation",
        m=permutations,
        degenerate_points=(),
        sampler_seed=seed,
    )
    return (estimate, ledger) if return_ledger else estimate


# ---------------------------------------------------------------------------
# Convergence traces


@dataclass
class TracePoint:
    budget: int
    estimate: ValueEstimate
    relative_spearman: float | None


def convergence_trace(
    estimator: str,
    oracle: UtilityOracle,
    budgets: Sequence[int],
    seed: int,
    *,
    spec: SemivalueSpec | None = None,
) -> list[TracePoint]:
    """Estimates at a ladder of budgets drawn from one nested sample stream.

    Budgets count total oracle evaluations and must be strictly increasing;
    the draw at budget t+1 extends the draws at budget t, matching the
    add-a-batch-per-iteration protocol.  Each entry carries the Spearman
    correlation between its values and the next budget's values (the last
    entry has no successor and carries ``None``).
    """
    budgets = [int(b) for b in budgets]
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise InvalidParam(f"budgets must be strictly increasing, got {budgets}")
    if not budgets:
        return []
    if any(b < 1 for b in budgets):
        raise InvalidParam(f"budgets must be positive, got {budgets}")
    n = oracle.n

    estimates: list[ValueEstimate] = []
    if estimator == "msr":
        full = draw_ledger(oracle, n, budgets[-1], seed)
        for b in budgets:
            estimates.append(msr_estimate(full.prefix(b)))
    elif estimator == "simple_mc":
        per_point = [max(1, b // (2 * n)) for b in budgets]
        contrib, _ = _simple_mc_contributions(oracle, n, per_point[-1], seed, spec)
        for b, mp in zip(budgets, per_point):
            estimates.append(
                ValueEstimate(
                    values=contrib[:, :mp].mean(axis=1),
                    spec_label=spec.label if spec is not None else "banzhaf",
                    n=n,
                    exact=False,
                    estimator="simple_mc",
                    m=mp,
                    sampler_seed=seed,
                )
            )
    elif estimator == "permutation":
        perms = [max(1, b // (n + 1)) for b in budgets]
        marginals, _ = _permutation_marginals(oracle, n, perms[-1], seed)
        for b, p in zip(budgets, perms):
            estimates.append(
                ValueEstimate(
                    values=marginals[:p].mean(axis=0),
                    spec_label="shapley",
                    n=n,
                    exact=False,
                    estimator="permutation",
                    m=p,
                    sampler_seed=seed,
                )
            )
    else:
        raise InvalidParam(f"unknown estimator {estimator!r}")

    from .evalkit import spearman  # local import: evalkit is a peer module

    trace: list[TracePoint] = []
    for t, (b, est) in enumerate(zip(budgets, estimates)):
        rel = None
        if t + 1 < len(estimates):
            rel = spearman(est.values, estimates[t + 1].values).spearman
        trace.append(TracePoint(budget=b, estimate=est, relative_spearman=rel))
    return trace
