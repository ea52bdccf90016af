"""N-way k-shot episode sampling and result aggregation.

Every episode derives its own seed from (master_seed, episode_index) through
splitmix64, so parallel workers need no shared RNG state and a run is
reproducible episode-by-episode on any schedule.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bank import EmbeddingBank, ROLE_ORIGINAL

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class EpisodeError(Exception):
    """The bank cannot supply the requested episode."""


def splitmix64(x: int) -> int:
    """One splitmix64 output step: add the golden-gamma increment, then finalize.

    Fixed 64-bit integer mixing; identical on every platform.
    """
    x = (x + _GAMMA) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def episode_seed(master_seed: int, episode_index: int) -> int:
    """Per-episode seed: splitmix64(master_seed XOR episode_index)."""
    return splitmix64((master_seed ^ episode_index) & _MASK64)


@dataclass(frozen=True)
class Episode:
    """One sampled N-way k-shot task over a bank.

    ``support_ids`` and ``query_ids`` are grouped by class in ``class_ids``
    order: class j owns support slots [j*shot, (j+1)*shot) and query slots
    [j*query, (j+1)*query).
    """

    way: int
    shot: int
    query: int
    class_ids: tuple[int, ...]
    support_ids: tuple[int, ...]
    query_ids: tuple[int, ...]
    episode_seed: int


def sample_episode(
    bank: EmbeddingBank,
    way: int,
    shot: int,
    query: int,
    master_seed: int,
    episode_index: int,
) -> Episode:
    """Sample classes and original items uniformly without replacement.

    Deterministic: rng = default_rng(episode_seed); classes are drawn from the
    id-sorted class list, then per class shot+query originals are drawn from
    the id-sorted original list, the first ``shot`` forming the support.
    """
    if way < 2:
        raise EpisodeError(f"way must be >= 2, got {way}")
    if shot < 1 or query < 1:
        raise EpisodeError(f"shot and query must be >= 1, got {shot}/{query}")
    all_class_ids = sorted(c.id for c in bank.classes)
    if len(all_class_ids) < way:
        raise EpisodeError(
            f"bank has {len(all_class_ids)} classes, need {way} for {way}-way episodes")

    seed = episode_seed(master_seed, episode_index)
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(all_class_ids), size=way, replace=False)
    class_ids = tuple(all_class_ids[int(i)] for i in picked)

    support: list[int] = []
    queries: list[int] = []
    need = shot + query
    for cid in class_ids:
        originals = bank.originals(cid)
        if len(originals) < need:
            name = bank.class_record(cid).name
            raise EpisodeError(
                f"class {cid} ({name!r}) has {len(originals)} originals, "
                f"need {need} (shot {shot} + query {query})")
        idx = rng.choice(len(originals), size=need, replace=False)
        chosen = [originals[int(i)].id for i in idx]
        support.extend(chosen[:shot])
        queries.extend(chosen[shot:])

    return Episode(way=way, shot=shot, query=query, class_ids=class_ids,
                   support_ids=tuple(support), query_ids=tuple(queries),
                   episode_seed=seed)


def aggregate_results(accs) -> tuple[float, float]:
    """Mean accuracy and normal-approximation 95% CI (1.96 * s / sqrt(n)).

    Sample standard deviation uses the n-1 denominator; a single episode gets
    a zero-width interval.
    """
    arr = np.asarray(list(accs), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot aggregate an empty accuracy list")
    mean = float(arr.mean())
    if arr.size == 1:
        return mean, 0.0
    sd = float(arr.std(ddof=1))
    return mean, 1.96 * sd / math.sqrt(arr.size)


@dataclass
class EpisodeRecord:
    """Audit record for one benchmark episode."""

    index: int
    accuracy: float | None
    loss_trace: list[float] = field(default_factory=list)
    selected_augmentations: dict[int, list[int]] = field(default_factory=dict)
    wall_time: float = 0.0
    failed: bool = False
    error: str | None = None


@dataclass
class RunResult:
    """Aggregate outcome of a multi-episode benchmark run."""

    episode_accuracies: list[float]
    mean_accuracy: float
    ci95: float
    records: list[EpisodeRecord]
    failed_count: int = 0

    def to_dict(self) -> dict:
        return {
            "mean_accuracy": self.mean_accuracy,
            "ci95": self.ci95,
            "failed_count": self.failed_count,
            "episode_accuracies": self.episode_accuracies,
            "episodes": [
                {
                    "index": r.index,
                    "accuracy": r.accuracy,
                    "failed": r.failed,
                    "error": r.error,
                    "wall_time": r.wall_time,
                    "loss_trace": r.loss_trace,
                    "selected_augmentations": {
                        str(cid): ids for cid, ids in r.selected_augmentations.items()
                    },
                }
                for r in self.records
            ],
        }


def write_results(result: RunResult, path: str | Path) -> None:
    """Write a benchmark result file (schema in docs/formats.md)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result.to_dict(), indent=2) + "\n", encoding="utf-8")
