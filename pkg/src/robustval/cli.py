"""Command-line front end.

Subcommands: ``value``, ``robustness {margin, lipschitz, fliptest}``,
``stability``, ``detect``, ``convergence``.  Every command writes a single
JSON artifact whose bytes depend only on the semantic configuration and
seed — output locations, worker counts, cache directories, and run metadata
such as timestamps go to a ``.meta.json`` sidecar — so a rerun with the
same parameters reproduces the artifact exactly even when written elsewhere.

Option precedence: command-line flags > ``--config`` JSON file > built-in
defaults.  The resolved configuration is echoed into the artifact.
Exit codes: 0 success, 2 configuration error, 3 runtime/oracle failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .cache import EvalCache
from .errors import (
    CohortTooLarge,
    InvalidParam,
    InvalidTau,
    LengthMismatch,
    MemberAlreadyPresent,
    NormalizationViolation,
    NumericalDivergence,
    OracleFailure,
    SamePoint,
    SchemeMismatch,
    StorageFailure,
    TauTooLarge,
)
from .datasets import load_csv
from .estimators import (
    convergence_trace,
    draw_ledger,
    msr_estimate,
    permutation_shapley_estimate,
    simple_mc_estimate,
)
from .exact import exact_semivalue
from .experiments import (
    detection_pipeline,
    frozen_table_oracle,
    gaussian_rank_stability,
    run_fliptest,
    synthetic_game,
)
from .robustness import MAX_NUMERIC_N, lipschitz_constant, safety_margin
from .training import TrainerConfig, make_oracle
from .weights import SemivalueSpec, make_weights

CACHE_ENV = "ROBUSTVAL_CACHE_DIR"

_CONFIG_ERRORS = (
    InvalidParam,
    NormalizationViolation,
    InvalidTau,
    TauTooLarge,
    SamePoint,
    CohortTooLarge,
    LengthMismatch,
    MemberAlreadyPresent,
    SchemeMismatch,
    FileNotFoundError,
    KeyError,
    ValueError,
)
_RUNTIME_ERRORS = (OracleFailure, NumericalDivergence, StorageFailure)


# ---------------------------------------------------------------------------
# Shared plumbing


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > config file > defaults; unknown config keys are rejected."""
    resolved = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(loaded, dict):
            raise InvalidParam(f"config file {config_path} must hold a JSON object")
        for key, value in loaded.items():
            if key not in defaults:
                raise InvalidParam(f"unknown config key {key!r}")
            resolved[key] = value
    for key in defaults:
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            resolved[key] = cli_value
    return resolved


_OUTPUT_KEYS = frozenset({"out", "cache_dir", "workers", "ledger"})


def _echo_config(resolved: dict, *drop: str) -> dict:
    """The semantic slice of the configuration, safe to embed in artifacts."""
    return {k: v for k, v in resolved.items() if k not in _OUTPUT_KEYS and k not in drop}


def _write_artifact(out: str, payload: dict, meta: dict) -> None:
    out_path = Path(out)
    if out_path.parent and not out_path.parent.exists():
        out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    meta_path = out_path.with_name(out_path.name + ".meta.json")
    meta_path.write_text(
        json.dumps(
            {"written_at": _dt.datetime.now(_dt.timezone.utc).isoformat(), **meta},
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    csv_path = Path(path)
    if csv_path.parent and not csv_path.parent.exists():
        csv_path.parent.mkdir(parents=True, exist_ok=True)
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _open_cache(resolved: dict) -> EvalCache | None:
    cache_dir = resolved.get("cache_dir") or os.environ.get(CACHE_ENV)
    if not cache_dir:
        return None
    directory = Path(cache_dir)
    directory.mkdir(parents=True, exist_ok=True)
    return EvalCache(directory / "evals.jsonl")


def _spec_from(resolved: dict, n: int) -> SemivalueSpec:
    name = resolved["spec"]
    if name == "beta":
        return make_weights("beta", n, alpha=resolved["alpha"], beta=resolved["beta"])
    return make_weights(name, n)


def _trainer_config(resolved: dict) -> TrainerConfig:
    return TrainerConfig(
        model=resolved["model"],
        optimizer=resolved["optimizer"],
        learning_rate=resolved["learning_rate"],
        epochs=resolved["epochs"],
        init=resolved["init"],
        seed=resolved["trainer_seed"],
    )


def _build_oracle(resolved: dict, cache: EvalCache | None):
    if resolved.get("csv"):
        if not resolved.get("csv_val"):
            raise InvalidParam("--csv requires --csv-val for the held-out split")
        train_ds = load_csv(resolved["csv"])
        val_ds = load_csv(resolved["csv_val"], split="validation")
        oracle = make_oracle(train_ds, val_ds, _trainer_config(resolved), cache=cache)
        return oracle
    n = int(resolved["synthetic"])
    oracle, _, _ = synthetic_game(
        n, int(resolved["seed"]), config=_trainer_config(resolved), cache=cache
    )
    return oracle


def _ints(text: str) -> list[int]:
    return [int(tok) for tok in str(text).split(",") if tok != ""]


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in str(text).split(",") if tok != ""]


def _names(text: str) -> list[str]:
    return [tok.strip() for tok in str(text).split(",") if tok.strip()]


_TRAINER_DEFAULTS = {
    "model": "logistic_regression",
    "optimizer": "full_batch_gd",
    "learning_rate": 0.5,
    "epochs": 150,
    "init": "zeros",
    "trainer_seed": 0,
}


def _add_trainer_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--model", choices=["logistic_regression", "linear"])
    sub.add_argument(
        "--optimizer", choices=["full_batch_gd", "minibatch_sgd", "smoothed_gd"]
    )
    sub.add_argument("--learning-rate", dest="learning_rate", type=float)
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--init", choices=["zeros", "gaussian"])
    sub.add_argument("--trainer-seed", dest="trainer_seed", type=int)


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON file with defaults for this command")
    sub.add_argument("--out", help="output JSON artifact path")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--cache-dir", dest="cache_dir")
    sub.add_argument("--workers", type=int)


# ---------------------------------------------------------------------------
# value


_VALUE_DEFAULTS = {
    "synthetic": 10,
    "csv": None,
    "csv_val": None,
    "method": "exact",
    "spec": "banzhaf",
    "alpha": 1.0,
    "beta": 1.0,
    "samples": 4096,
    "seed": 7,
    "out": "value.json",
    "ledger": None,
    "cache_dir": None,
    "workers": 1,
    **_TRAINER_DEFAULTS,
}

_METHOD_ALIASES = {
    "banzhaf-exact": ("exact", "banzhaf"),
    "shapley-exact": ("exact", "shapley"),
    "loo-exact": ("exact", "loo"),
}


def cmd_value(args: argparse.Namespace) -> int:
    resolved = _resolve(args, _VALUE_DEFAULTS)
    method = resolved["method"]
    if method in _METHOD_ALIASES:
        method, resolved["spec"] = _METHOD_ALIASES[method]
    if method not in ("exact", "msr", "simple-mc", "permutation"):
        raise InvalidParam(f"unknown method {resolved['method']!r}")
    cache = _open_cache(resolved)
    oracle = _build_oracle(resolved, cache)
    n = oracle.n
    seed = int(resolved["seed"])
    samples = int(resolved["samples"])
    started = time.monotonic()

    routing = None
    ledger = None
    if method == "exact":
        spec = _spec_from(resolved, n)
        result = exact_semivalue(oracle, spec)
    elif method == "msr":
        if resolved["spec"] != "banzhaf":
            routing = "msr supports Banzhaf only; routed to simple-mc"
            method = "simple-mc"
        else:
            ledger = draw_ledger(
                oracle, n, samples, seed, workers=int(resolved["workers"])
            )
            result = msr_estimate(ledger)
    if method == "simple-mc":
        spec = _spec_from(resolved, n)
        m_per_point = max(1, samples // (2 * n))
        result, ledger = simple_mc_estimate(
            oracle, n, m_per_point, seed,
            spec=None if resolved["spec"] == "banzhaf" else spec,
            return_ledger=True,
        )
    elif method == "permutation":
        permutations = max(1, samples // (n + 1))
        result, ledger = permutation_shapley_estimate(
            oracle, n, permutations, seed, return_ledger=True
        )

    ledger_path = None
    if ledger is not None:
        out_path = Path(resolved["out"])
        ledger_path = resolved["ledger"] or str(
            out_path.with_name(out_path.stem + ".ledger.jsonl")
        )
        ledger.save(ledger_path)

    payload = {
        "command": "value",
        "config": _echo_config({**resolved, "method": method}),
        "result": result.to_dict(),
    }
    if routing:
        payload["routing"] = routing
    meta = {
        "duration_s": time.monotonic() - started,
        "trainings": getattr(oracle, "trainings", None),
    }
    if ledger_path:
        meta["ledger_path"] = ledger_path
    _write_artifact(resolved["out"], payload, meta)
    return 0


# ---------------------------------------------------------------------------
# robustness


_MARGIN_DEFAULTS = {
    "spec": "banzhaf",
    "alpha": 1.0,
    "beta": 1.0,
    "n": 10,
    "tau": 0.1,
    "out": "margin.json",
    "seed": 0,
    "cache_dir": None,
    "workers": 1,
}


def cmd_margin(args: argparse.Namespace) -> int:
    resolved = _resolve(args, _MARGIN_DEFAULTS)
    spec = _spec_from(resolved, int(resolved["n"]))
    report = safety_margin(spec, float(resolved["tau"]))
    payload = {
        "command": "robustness margin",
        "config": _echo_config(resolved),
        "result": report.to_dict(),
    }
    _write_artifact(resolved["out"], payload, {})
    return 0


_LIPSCHITZ_DEFAULTS = {
    "spec": "banzhaf",
    "alpha": 1.0,
    "beta": 1.0,
    "n": 10,
    "numeric": None,
    "out": "lipschitz.json",
    "seed": 0,
    "cache_dir": None,
    "workers": 1,
}


def cmd_lipschitz(args: argparse.Namespace) -> int:
    resolved = _resolve(args, _LIPSCHITZ_DEFAULTS)
    n = int(resolved["n"])
    numeric = resolved["numeric"]
    if numeric is None:
        numeric = n <= MAX_NUMERIC_N
    spec = _spec_from(resolved, n)
    report = lipschitz_constant(spec, numeric=bool(numeric))
    payload = {
        "command": "robustness lipschitz",
        "config": _echo_config({**resolved, "numeric": bool(numeric)}),
        "result": report.to_dict(),
    }
    _write_artifact(resolved["out"], payload, {})
    return 0


_FLIPTEST_DEFAULTS = {
    "spec": "banzhaf",
    "alpha": 1.0,
    "beta": 1.0,
    "n": 6,
    "tau": 0.1,
    "pair": "0,1",
    "out": "fliptest.json",
    "seed": 0,
    "cache_dir": None,
    "workers": 1,
}


def cmd_fliptest(args: argparse.Namespace) -> int:
    resolved = _resolve(args, _FLIPTEST_DEFAULTS)
    n = int(resolved["n"])
    raw_pair = resolved["pair"]
    pair = _ints(raw_pair) if isinstance(raw_pair, str) else [int(x) for x in raw_pair]
    if len(pair) != 2:
        raise InvalidParam(f"--pair must name two indices, got {resolved['pair']!r}")
    spec = _spec_from(resolved, n)
    result = run_fliptest(n, pair[0], pair[1], float(resolved["tau"]), spec)
    payload = {
        "command": "robustness fliptest",
        "config": _echo_config(resolved),
        "result": {
            "spec": result.spec_label,
            "n": result.n,
            "tau": result.tau,
            "closed_form_margin": result.closed_form_margin,
            "empirical_threshold": result.empirical_threshold,
            "relative_gap": result.relative_gap,
            "transcript": result.transcript,
        },
    }
    _write_artifact(resolved["out"], payload, {})
    return 0


# ---------------------------------------------------------------------------
# stability / detect / convergence


_STABILITY_DEFAULTS = {
    "synthetic": 10,
    "specs": "loo,shapley,banzhaf",
    "sigmas": "0.05,0.1,0.2,0.5",
    "trials": 20,
    "seed": 7,
    "out": "stability.json",
    "csv": None,
    "cache_dir": None,
    "workers": 1,
    **_TRAINER_DEFAULTS,
}


def cmd_stability(args: argparse.Namespace) -> int:
    resolved = _resolve(args, _STABILITY_DEFAULTS)
    cache = _open_cache(resolved)
    n = int(resolved["synthetic"])
    seed = int(resolved["seed"])
    oracle, _, _ = synthetic_game(
        n, seed, config=_trainer_config(resolved), cache=cache
    )
    table = frozen_table_oracle(oracle)
    specs = [_spec_from({**resolved, "spec": name}, n) for name in _names(resolved["specs"])]
    cells = gaussian_rank_stability(
        table, specs, _floats(resolved["sigmas"]), int(resolved["trials"]), seed
    )
    payload = {
        "command": "stability",
        "config": _echo_config(resolved, "csv"),
        "result": [
            {
                "method": c.spec_label,
                "sigma": c.sigma,
                "mean_spearman": c.mean_spearman,
                "stderr": c.stderr,
            }
            for c in cells
        ],
    }
    meta = {"trainings": oracle.trainings}
    _write_artifact(resolved["out"], payload, meta)
    if resolved["csv"]:
        _write_csv(
            resolved["csv"],
            ["method", "sigma", "mean_spearman", "stderr"],
            [[c.spec_label, c.sigma, c.mean_spearman, c.stderr] for c in cells],
        )
    return 0


_DETECT_DEFAULTS = {
    "synthetic": 200,
    "flip_fraction": 0.1,
    "samples": 20_000,
    "percentile": 10.0,
    "methods": "banzhaf-msr",
    "seed": 11,
    "out": "detect.json",
    "csv": None,
    "cache_dir": None,
    "workers": 1,
    **_TRAINER_DEFAULTS,
}


def cmd_detect(args: argparse.Namespace) -> int:
    resolved = _resolve(args, _DETECT_DEFAULTS)
    cache = _open_cache(resolved)
    seed = int(resolved["seed"])
    runs = detection_pipeline(
        n_points=int(resolved["synthetic"]),
        flip_fraction=float(resolved["flip_fraction"]),
        data_seed=seed,
        sampler_seed=seed + 1,
        samples=int(resolved["samples"]),
        percentile=float(resolved["percentile"]),
        methods=_names(resolved["methods"]),
        config=_trainer_config(resolved),
        cache=cache,
        workers=int(resolved["workers"]),
    )
    payload = {
        "command": "detect",
        "config": _echo_config(resolved, "csv"),
        "result": [
            {
                "method": run.method,
                "report": run.report.to_dict(),
                "flipped": list(run.flipped),
                "values": [float(v) for v in run.values],
            }
            for run in runs
        ],
    }
    meta = {"trainings": runs[-1].trainings if runs else 0}
    _write_artifact(resolved["out"], payload, meta)
    if resolved["csv"]:
        _write_csv(
            resolved["csv"],
            ["method", "f1", "precision", "recall"],
            [
                [run.method, run.report.f1, run.report.precision, run.report.recall]
                for run in runs
            ],
        )
    return 0


_CONVERGENCE_DEFAULTS = {
    "synthetic": 10,
    "estimators": "msr,simple_mc",
    "budgets": "256,512,1024,2048,4096,8192,16384",
    "seed": 7,
    "out": "convergence.json",
    "csv": None,
    "cache_dir": None,
    "workers": 1,
    **_TRAINER_DEFAULTS,
}


def cmd_convergence(args: argparse.Namespace) -> int:
    resolved = _resolve(args, _CONVERGENCE_DEFAULTS)
    cache = _open_cache(resolved)
    n = int(resolved["synthetic"])
    seed = int(resolved["seed"])
    oracle, _, _ = synthetic_game(
        n, seed, config=_trainer_config(resolved), cache=cache
    )
    game = frozen_table_oracle(oracle) if n <= 20 else oracle
    budgets = _ints(resolved["budgets"])
    result = {}
    rows = []
    for name in _names(resolved["estimators"]):
        trace = convergence_trace(name, game, budgets, seed)
        result[name] = [
            {
                "budget": point.budget,
                "m": point.estimate.m,
                "relative_spearman": point.relative_spearman,
                "values": [float(v) for v in point.estimate.values],
            }
            for point in trace
        ]
        rows.extend(
            [name, point.budget,
             "" if point.relative_spearman is None else point.relative_spearman]
            for point in trace
        )
    payload = {
        "command": "convergence",
        "config": _echo_config(resolved, "csv"),
        "result": result,
    }
    meta = {"trainings": oracle.trainings}
    _write_artifact(resolved["out"], payload, meta)
    if resolved["csv"]:
        _write_csv(resolved["csv"], ["estimator", "budget", "relative_spearman"], rows)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustval",
        description="Semivalue data valuation with robustness guarantees",
    )
    subs = parser.add_subparsers(dest="subcommand")

    p_value = subs.add_parser("value", help="compute or estimate per-point values")
    p_value.add_argument("--synthetic", type=int, help="points in the synthetic game")
    p_value.add_argument("--csv", help="training CSV (header row, last column label)")
    p_value.add_argument("--csv-val", dest="csv_val", help="validation CSV")
    p_value.add_argument(
        "--method",
        choices=["exact", "msr", "simple-mc", "permutation"] + sorted(_METHOD_ALIASES),
    )
    p_value.add_argument("--spec", choices=["banzhaf", "shapley", "loo", "beta"])
    p_value.add_argument("--alpha", type=float)
    p_value.add_argument("--beta", type=float)
    p_value.add_argument(
        "--samples", type=int, help="total oracle-evaluation budget for estimators"
    )
    p_value.add_argument("--ledger", help="explicit ledger output path")
    _add_trainer_flags(p_value)
    _add_common_flags(p_value)
    p_value.set_defaults(handler=cmd_value)

    p_rob = subs.add_parser("robustness", help="margins, Lipschitz constants, flip tests")
    rob_subs = p_rob.add_subparsers(dest="robustness_command")

    p_margin = rob_subs.add_parser("margin", help="closed-form safety margin")
    p_margin.add_argument("--spec", choices=["banzhaf", "shapley", "loo", "beta"])
    p_margin.add_argument("--alpha", type=float)
    p_margin.add_argument("--beta", type=float)
    p_margin.add_argument("--n", type=int)
    p_margin.add_argument("--tau", type=float)
    _add_common_flags(p_margin)
    p_margin.set_defaults(handler=cmd_margin)

    p_lip = rob_subs.add_parser("lipschitz", help="value-map Lipschitz constant")
    p_lip.add_argument("--spec", choices=["banzhaf", "shapley", "loo", "beta"])
    p_lip.add_argument("--alpha", type=float)
    p_lip.add_argument("--beta", type=float)
    p_lip.add_argument("--n", type=int)
    p_lip.add_argument(
        "--numeric",
        action="store_const",
        const=True,
        help="also compute the operator norm of the explicit matrix",
    )
    p_lip.add_argument(
        "--no-numeric", dest="numeric", action="store_const", const=False
    )
    _add_common_flags(p_lip)
    p_lip.set_defaults(handler=cmd_lipschitz)

    p_flip = rob_subs.add_parser(
        "fliptest", help="bisection flip threshold vs closed-form margin"
    )
    p_flip.add_argument("--spec", choices=["banzhaf", "shapley", "loo", "beta"])
    p_flip.add_argument("--alpha", type=float)
    p_flip.add_argument("--beta", type=float)
    p_flip.add_argument("--n", type=int)
    p_flip.add_argument("--tau", type=float)
    p_flip.add_argument("--pair", help="the two point indices, e.g. 0,1")
    _add_common_flags(p_flip)
    p_flip.set_defaults(handler=cmd_fliptest)

    p_stab = subs.add_parser("stability", help="rank stability under utility noise")
    p_stab.add_argument("--synthetic", type=int)
    p_stab.add_argument("--specs", help="comma-separated weight families")
    p_stab.add_argument("--sigmas", help="comma-separated noise levels")
    p_stab.add_argument("--trials", type=int)
    p_stab.add_argument("--csv", help="CSV output path")
    _add_trainer_flags(p_stab)
    _add_common_flags(p_stab)
    p_stab.set_defaults(handler=cmd_stability)

    p_det = subs.add_parser("detect", help="mislabel detection pipeline")
    p_det.add_argument("--synthetic", type=int)
    p_det.add_argument("--flip-fraction", dest="flip_fraction", type=float)
    p_det.add_argument("--samples", type=int)
    p_det.add_argument("--percentile", type=float)
    p_det.add_argument("--methods", help="comma-separated: banzhaf-msr, loo")
    p_det.add_argument("--csv", help="CSV output path")
    _add_trainer_flags(p_det)
    _add_common_flags(p_det)
    p_det.set_defaults(handler=cmd_detect)

    p_conv = subs.add_parser("convergence", help="estimator convergence traces")
    p_conv.add_argument("--synthetic", type=int)
    p_conv.add_argument("--estimators", help="comma-separated: msr, simple_mc, permutation")
    p_conv.add_argument("--budgets", help="comma-separated evaluation budgets")
    p_conv.add_argument("--csv", help="CSV output path")
    _add_trainer_flags(p_conv)
    _add_common_flags(p_conv)
    p_conv.set_defaults(handler=cmd_convergence)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = getattr(args, "handler", None)
    if handler is None:
        parser.print_help(sys.stderr)
        return 2
    try:
        return handler(args)
    except _RUNTIME_ERRORS as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
