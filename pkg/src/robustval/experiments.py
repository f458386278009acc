"""End-to-end experiment drivers shared by the CLI and the test suite.

Each driver owns one protocol: exact-vs-estimate error curves, paired
estimator duels at a fixed evaluation budget, rank stability under utility
noise, flip-threshold bisection, and the mislabel-detection pipeline.
Drivers return plain data (dicts / dataclasses); callers decide how to
persist them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cache import EvalCache
from .datasets import TabularDataset, flip_labels, synthetic_gaussian_dataset
from .errors import InvalidParam
from .estimators import draw_ledger, msr_estimate, simple_mc_estimate
from .evalkit import DetectionReport, mislabel_detect, spearman
from .exact import ValueVector, pairwise_difference
from .oracles import TableOracle, UtilityOracle, materialize_table
from .robustness import adversarial_perturbation, safety_margin, semivalue_matrix
from .seeding import stable_hash
from .subsets import SubsetKey
from .training import TrainerConfig, TrainerOracle, make_oracle
from .weights import SemivalueSpec, make_weights

#: Trainer settings for the 10-point bivariate-Gaussian reference game.
DESK_TRAINER = TrainerConfig(
    model="logistic_regression",
    optimizer="full_batch_gd",
    learning_rate=0.5,
    epochs=150,
    init="zeros",
)


def synthetic_game(
    n_points: int = 10,
    seed: int = 7,
    *,
    config: TrainerConfig | None = None,
    cache: EvalCache | None = None,
) -> tuple[TrainerOracle, TabularDataset, TabularDataset]:
    """The reference valuation game: Gaussian points, logistic trainer."""
    train_ds, val_ds = synthetic_gaussian_dataset(n_points, seed)
    oracle = make_oracle(train_ds, val_ds, config or DESK_TRAINER, cache=cache)
    return oracle, train_ds, val_ds


def frozen_table_oracle(oracle: UtilityOracle, *, max_n: int = 20) -> TableOracle:
    """Materialize any oracle into a fast table-backed equivalent."""
    table = materialize_table(oracle, max_n=max_n)
    out_of_range = bool(np.any((table < 0.0) | (table > 1.0)))
    return TableOracle(
        table,
        oracle.n,
        description=f"frozen[{oracle.description}]",
        allow_out_of_range=out_of_range,
    )


def loo_values(oracle: UtilityOracle) -> np.ndarray:
    """Leave-one-out values U(N) - U(N \\ i) without full enumeration."""
    n = oracle.n
    full = SubsetKey.full(n)
    u_full = oracle.evaluate(full)
    return np.array(
        [u_full - oracle.evaluate(full.without_member(i)) for i in range(n)]
    )


# ---------------------------------------------------------------------------
# Estimator studies


def msr_error_curve(
    oracle: UtilityOracle,
    exact: ValueVector,
    budgets: Sequence[int],
    seeds: Sequence[int],
) -> np.ndarray:
    """linf error of MSR vs the exact values; shape (len(seeds), len(budgets)).

    One nested ledger per seed: the error at each budget is measured on that
    ledger's prefix, mirroring the add-a-batch sampling protocol.
    """
    budgets = [int(b) for b in budgets]
    errors = np.empty((len(seeds), len(budgets)))
    for row, seed in enumerate(seeds):
        ledger = draw_ledger(oracle, oracle.n, max(budgets), int(seed))
        for col, budget in enumerate(budgets):
            est = msr_estimate(ledger.prefix(budget))
            errors[row, col] = float(
                np.max(np.abs(est.values - exact.values))
            )
    return errors


def loglog_slope(budgets: Sequence[int], mean_errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(budget)."""
    x = np.log(np.asarray(budgets, dtype=float))
    y = np.log(np.asarray(mean_errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass(frozen=True)
class DuelResult:
    seed: int
    msr_l2: float
    mc_l2: float

    @property
    def msr_wins(self) -> bool:
        return self.msr_l2 < self.mc_l2


def estimator_duel(
    oracle: UtilityOracle,
    exact: ValueVector,
    total_budget: int,
    seeds: Sequence[int],
) -> list[DuelResult]:
    """MSR vs simple MC at the same total number of oracle evaluations.

    MSR spends the whole budget on one uniform ledger; simple MC gets
    ``total_budget // (2n)`` marginal-contribution samples per point.
    """
    n = oracle.n
    m_per_point = total_budget // (2 * n)
    if m_per_point < 1:
        raise InvalidParam(
            f"budget {total_budget} cannot fund one marginal sample per point"
        )
    results = []
    for seed in seeds:
        msr = msr_estimate(draw_ledger(oracle, n, total_budget, int(seed)))
        mc = simple_mc_estimate(oracle, n, m_per_point, int(seed))
        results.append(
            DuelResult(
                seed=int(seed),
                msr_l2=float(np.linalg.norm(msr.values - exact.values)),
                mc_l2=float(np.linalg.norm(mc.values - exact.values)),
            )
        )
    return results


def partition_biased_table(table: np.ndarray, n: int, point: int, bound: float) -> np.ndarray:
    """Worst-case bounded noise for MSR at ``point``: +bound on subsets
    containing it, -bound on the rest (shifts its partition-mean gap by
    exactly 2*bound)."""
    masks = np.arange(1 << n, dtype=np.int64)
    sign = np.where((masks >> point) & 1, 1.0, -1.0)
    return table + bound * sign


def msr_noise_plateau(
    clean_oracle: TableOracle,
    exact: ValueVector,
    point: int,
    bound: float,
    budgets: Sequence[int],
    seed: int,
) -> dict[int, float]:
    """linf MSR error vs clean exact values under adversarial bounded noise."""
    n = clean_oracle.n
    noisy = TableOracle(
        partition_biased_table(clean_oracle.table, n, point, bound),
        n,
        description=f"biased[{clean_oracle.description}]",
        allow_out_of_range=True,
    )
    errors: dict[int, float] = {}
    ledger = draw_ledger(noisy, n, max(int(b) for b in budgets), seed)
    for budget in budgets:
        est = msr_estimate(ledger.prefix(int(budget)))
        errors[int(budget)] = float(np.max(np.abs(est.values - exact.values)))
    return errors


# ---------------------------------------------------------------------------
# Rank stability under utility noise


@dataclass(frozen=True)
class StabilityCell:
    spec_label: str
    sigma: float
    mean_spearman: float
    stderr: float
    per_trial: tuple[float, ...]


def gaussian_rank_stability(
    oracle: UtilityOracle,
    specs: Sequence[SemivalueSpec],
    sigmas: Sequence[float],
    trials: int,
    seed: int,
) -> list[StabilityCell]:
    """Spearman between exact values and values of a noise-corrupted table.

    One Gaussian perturbation is drawn per (sigma, trial) and shared by all
    specs, making the per-trial comparison between weightings paired.
    """
    if trials < 1:
        raise InvalidParam(f"trials must be >= 1, got {trials}")
    n = oracle.n
    table = materialize_table(oracle)
    matrices = {spec.label: semivalue_matrix(spec) for spec in specs}
    exact = {spec.label: matrices[spec.label] @ table for spec in specs}
    rhos: dict[tuple[str, float], list[float]] = {
        (spec.label, float(s)): [] for spec in specs for s in sigmas
    }
    for sigma in sigmas:
        for t in range(trials):
            rng = np.random.default_rng(stable_hash("stability", seed, float(sigma), t))
            noisy_table = table + float(sigma) * rng.standard_normal(1 << n)
            for spec in specs:
                noisy_values = matrices[spec.label] @ noisy_table
                rho = spearman(exact[spec.label], noisy_values).spearman
                rhos[(spec.label, float(sigma))].append(rho)
    cells = []
    for (label, sigma), vals in rhos.items():
        arr = np.asarray(vals)
        stderr = float(arr.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        cells.append(
            StabilityCell(
                spec_label=label,
                sigma=sigma,
                mean_spearman=float(arr.mean()),
                stderr=stderr,
                per_trial=tuple(float(v) for v in arr),
            )
        )
    return cells


# ---------------------------------------------------------------------------
# Flip-threshold bisection


@dataclass
class FlipTestResult:
    spec_label: str
    n: int
    tau: float
    closed_form_margin: float
    empirical_threshold: float
    relative_gap: float
    transcript: list[dict]


def flip_threshold_bisection(
    oracle: UtilityOracle,
    spec: SemivalueSpec,
    i: int,
    j: int,
    *,
    rel_tol: float = 1e-4,
    max_iter: int = 80,
) -> tuple[float, list[dict]]:
    """Smallest perturbation magnitude that reverses the (i, j) value order.

    The check at each probe recomputes the pairwise gap of the perturbed
    oracle from scratch (no reuse of the construction's own threshold), so
    the bisection is an independent measurement.
    """
    gap0 = pairwise_difference(oracle, spec, i, j)
    if gap0 == 0.0:
        raise InvalidParam("pair already tied; no flip threshold to find")
    sign0 = math.copysign(1.0, gap0)

    def flipped(magnitude: float) -> tuple[bool, float]:
        perturbed = adversarial_perturbation(oracle, spec, i, j, magnitude)
        gap = pairwise_difference(perturbed, spec, i, j)
        return gap * sign0 <= 0.0, gap

    transcript: list[dict] = []
    lo, hi = 0.0, 1.0
    is_flipped, gap = flipped(hi)
    transcript.append({"magnitude": hi, "gap": gap, "flipped": is_flipped})
    while not is_flipped:
        hi *= 2.0
        if hi > 1e9:
            raise InvalidParam("no flip found below magnitude 1e9")
        is_flipped, gap = flipped(hi)
        transcript.append({"magnitude": hi, "gap": gap, "flipped": is_flipped})
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        is_flipped, gap = flipped(mid)
        transcript.append({"magnitude": mid, "gap": gap, "flipped": is_flipped})
        if is_flipped:
            hi = mid
        else:
            lo = mid
        if hi - lo <= rel_tol * hi:
            break
    return hi, transcript


def run_fliptest(
    n: int, i: int, j: int, tau: float, spec: SemivalueSpec, *, rel_tol: float = 1e-4
) -> FlipTestResult:
    """Bisection threshold vs closed-form margin on the worst-case oracle."""
    from .robustness import worst_case_utility

    oracle = worst_case_utility(n, i, j, tau)
    margin = safety_margin(spec, tau).margin
    threshold, transcript = flip_threshold_bisection(
        oracle, spec, i, j, rel_tol=rel_tol
    )
    return FlipTestResult(
        spec_label=spec.label,
        n=n,
        tau=tau,
        closed_form_margin=margin,
        empirical_threshold=threshold,
        relative_gap=abs(threshold - margin) / margin,
        transcript=transcript,
    )


# ---------------------------------------------------------------------------
# Mislabel detection pipeline


@dataclass
class DetectionRun:
    report: DetectionReport
    values: np.ndarray
    flipped: tuple[int, ...]
    method: str
    trainings: int


def detection_pipeline(
    n_points: int = 200,
    flip_fraction: float = 0.1,
    *,
    data_seed: int = 11,
    sampler_seed: int = 3,
    samples: int = 20_000,
    percentile: float = 10.0,
    methods: Sequence[str] = ("banzhaf-msr",),
    config: TrainerConfig | None = None,
    cache: EvalCache | None = None,
    workers: int = 1,
) -> list[DetectionRun]:
    """Corrupt a synthetic set, value its points, flag the lowest values.

    ``banzhaf-msr`` estimates Banzhaf values from a uniform ledger of
    ``samples`` draws; ``loo`` computes leave-one-out values exactly from
    n + 1 trainings.
    """
    train_ds, val_ds = synthetic_gaussian_dataset(n_points, data_seed)
    corrupted, flipped = flip_labels(train_ds, flip_fraction, data_seed + 1)
    oracle = make_oracle(corrupted, val_ds, config or DESK_TRAINER, cache=cache)
    runs = []
    for method in methods:
        if method == "banzhaf-msr":
            ledger = draw_ledger(oracle, n_points, samples, sampler_seed, workers=workers)
            values = msr_estimate(ledger).values
        elif method == "loo":
            values = loo_values(oracle)
        else:
            raise InvalidParam(f"unknown detection method {method!r}")
        report = mislabel_detect(values, flipped, percentile)
        runs.append(
            DetectionRun(
                report=report,
                values=values,
                flipped=flipped,
                method=method,
                trainings=oracle.trainings,
            )
        )
    return runs


def builtin_specs(n: int) -> list[SemivalueSpec]:
    """The weight families exercised by cross-family comparisons."""
    return [
        make_weights("loo", n),
        make_weights("shapley", n),
        make_weights("banzhaf", n),
        make_weights("beta", n, alpha=4.0, beta=1.0),
        make_weights("beta", n, alpha=1.0, beta=4.0),
    ]
