"""Persistent evaluation cache: JSON-lines file of scored (oracle, subset,
seed) triples.

A cache entry is keyed by the hash of (oracle description, subset text,
evaluation seed); deterministic oracles collapse the seed component so any
draw of the same subset hits the same entry.  The file is append-only and
tolerant: corrupted lines are skipped on load (and the file rewritten
without them); an unwritable path degrades to in-memory operation with a
warning instead of failing the experiment.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from pathlib import Path

from .errors import StorageFailure
from .oracles import UtilityOracle
from .subsets import SubsetKey


def cache_key(description: str, subset_text: str, eval_seed: int) -> str:
    h = hashlib.sha256()
    h.update(description.encode("utf-8"))
    h.update(b"\x1f")
    h.update(subset_text.encode("utf-8"))
    h.update(b"\x1f")
    h.update(str(eval_seed).encode("utf-8"))
    return h.hexdigest()[:32]


class EvalCache:
    """Score store with optional JSONL persistence (last write wins)."""

    def __init__(self, path: str | Path | None = None):
        self._entries: dict[str, float] = {}
        self._file = None
        self.path = Path(path) if path is not None else None
        self.hits = 0
        self.misses = 0
        if self.path is not None:
            self._load_and_repair()

    def _load_and_repair(self) -> None:
        assert self.path is not None
        if not self.path.exists():
            return
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            warnings.warn(
                f"cache file {self.path} unreadable ({exc}); starting in-memory",
                stacklevel=3,
            )
            self.path = None
            return
        good_lines: list[str] = []
        corrupt = 0
        for line in lines:
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                key = str(rec["key"])
                score = float(rec["score"])
                rec["subset"], rec["eval_seed"]  # required fields
            except (KeyError, ValueError, TypeError, json.JSONDecodeError):
                corrupt += 1
                continue
            self._entries[key] = score
            good_lines.append(line)
        if corrupt:
            try:
                self.path.write_text(
                    "".join(line + "\n" for line in good_lines), encoding="utf-8"
                )
            except OSError as exc:
                warnings.warn(
                    f"cache file {self.path} could not be repaired ({exc})",
                    stacklevel=3,
                )

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> float | None:
        score = self._entries.get(key)
        if score is None:
            self.misses += 1
        else:
            self.hits += 1
        return score

    def put(self, key: str, subset_text: str, eval_seed: int, score: float) -> None:
        self._entries[key] = score
        if self.path is None:
            return
        record = {
            "key": key,
            "subset": subset_text,
            "eval_seed": eval_seed,
            "score": score,
        }
        try:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        except OSError as exc:
            warnings.warn(
                f"cache write to {self.path} failed ({exc}); continuing in-memory",
                stacklevel=2,
            )
            self.path = None


def cache_get_or_eval(
    cache: EvalCache | None,
    oracle: UtilityOracle,
    subset: SubsetKey,
    eval_seed: int | None = None,
) -> float:
    """Serve from cache or evaluate-and-persist.

    Deterministic oracles ignore the seed in the key, so distinct draws of
    the same subset share one entry; stochastic oracles key on the seed so
    distinct draws never collide.
    """
    if cache is None:
        return oracle.evaluate(subset, eval_seed)
    key_seed = 0 if oracle.deterministic else (eval_seed if eval_seed is not None else 0)
    key = cache_key(oracle.description, subset.text, key_seed)
    cached = cache.get(key)
    if cached is not None:
        return cached
    score = oracle.evaluate(subset, eval_seed)
    cache.put(key, subset.text, key_seed, score)
    return score


__all__ = ["EvalCache", "cache_get_or_eval", "cache_key", "StorageFailure"]
