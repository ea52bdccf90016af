"""Per-episode prompt training (SGD with momentum on the composite loss),
frozen-prompt inference on query items, and the multi-episode benchmark
runner with optional process parallelism.

Episode i's outcome is a pure function of (bank, config, i): sampling and
parameter initialization are seeded per episode, so worker count and
scheduling cannot change any result.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analyzer import distance_matrix, write_matrix_csv
from .bank import EmbeddingBank
from .episodes import (Episode, EpisodeRecord, RunResult, aggregate_results,
                       sample_episode, splitmix64)
from .model import (PromptState, init_prompt_state, save_prompt_state,
                    transform_text_batch, transform_vision_batch)
from .objective import total_loss_and_grads
from .selaug import select_augmentations

# Decouples parameter initialization from episode sampling: both derive from
# the episode seed but through different streams.
_INIT_SALT = 0x70726F6D7074


class TrainerError(Exception):
    """Training-time failure: diverged episode or unusable configuration."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    learning_rate: float = 0.01
    momentum: float = 0.9
    tau: float = 0.01
    alpha: float = 1.0
    beta: float = 1.0
    rank: int = 2
    select_one_shot: int = 15   # augmentations kept per class when shot == 1
    select_per_shot: int = 3    # augmentations kept per support image otherwise
    reselect_each_epoch: bool = False
    master_seed: int = 0
    episodes: int = 600
    way: int = 5
    shot: int = 1
    query: int = 15

    def validate(self) -> None:
        checks = [
            (self.epochs >= 0, f"epochs must be >= 0, got {self.epochs}"),
            (self.learning_rate > 0, f"learning_rate must be > 0, got {self.learning_rate}"),
            (0 <= self.momentum < 1, f"momentum must be in [0, 1), got {self.momentum}"),
            (self.tau > 0, f"tau must be > 0, got {self.tau}"),
            (self.alpha >= 0, f"alpha must be >= 0, got {self.alpha}"),
            (self.beta >= 0, f"beta must be >= 0, got {self.beta}"),
            (self.rank >= 1, f"rank must be >= 1, got {self.rank}"),
            (self.select_one_shot >= 0, f"select_one_shot must be >= 0, got {self.select_one_shot}"),
            (self.select_per_shot >= 0, f"select_per_shot must be >= 0, got {self.select_per_shot}"),
            (self.master_seed >= 0, f"master_seed must be >= 0, got {self.master_seed}"),
            (self.episodes >= 1, f"episodes must be >= 1, got {self.episodes}"),
            (self.way >= 2, f"way must be >= 2, got {self.way}"),
            (self.shot >= 1, f"shot must be >= 1, got {self.shot}"),
            (self.query >= 1, f"query must be >= 1, got {self.query}"),
        ]
        for ok, message in checks:
            if not ok:
                raise TrainerError(message)

    def selection_count(self) -> int:
        """Augmentations to keep per class for the configured shot setting."""
        if self.shot == 1:
            return self.select_one_shot
        return self.select_per_shot * self.shot


_FIELD_TYPES: dict[str, type] = {
    "epochs": int, "learning_rate": float, "momentum": float, "tau": float,
    "alpha": float, "beta": float, "rank": int, "select_one_shot": int,
    "select_per_shot": int, "reselect_each_epoch": bool, "master_seed": int,
    "episodes": int, "way": int, "shot": int, "query": int,
}

_TRUE_WORDS = {"true", "yes", "on", "1"}
_FALSE_WORDS = {"false", "no", "off", "0"}


def parse_config(text: str) -> TrainConfig:
    """Parse key=value lines (# comments and blank lines ignored)."""
    values: dict[str, object] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise TrainerError(f"config line {lineno}: expected key=value, got {raw_line!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in _FIELD_TYPES:
            raise TrainerError(
                f"config line {lineno}: unknown key {key!r} "
                f"(valid: {', '.join(sorted(_FIELD_TYPES))})")
        if key in values:
            raise TrainerError(f"config line {lineno}: duplicate key {key!r}")
        kind = _FIELD_TYPES[key]
        try:
            if kind is bool:
                word = raw_value.lower()
                if word in _TRUE_WORDS:
                    values[key] = True
                elif word in _FALSE_WORDS:
                    values[key] = False
                else:
                    raise ValueError(f"not a boolean: {raw_value!r}")
            else:
                values[key] = kind(raw_value)
        except ValueError as exc:
            raise TrainerError(f"config line {lineno}: bad value for {key}: {exc}") from exc
    config = TrainConfig(**values)
    config.validate()
    return config


def load_config(path: str | Path) -> TrainConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def sgd_momentum_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    velocity: dict[str, np.ndarray],
    lr: float,
    momentum: float,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Classical momentum: v <- momentum*v + g; p <- p - lr*v. Functional —
    inputs stay untouched."""
    if set(params) != set(grads) or set(params) != set(velocity):
        raise TrainerError("params, grads, velocity must share the same keys")
    new_params: dict[str, np.ndarray] = {}
    new_velocity: dict[str, np.ndarray] = {}
    for key, p in params.items():
        g = grads[key]
        v = velocity[key]
        if g.shape != p.shape or v.shape != p.shape:
            raise TrainerError(
                f"shape mismatch for {key}: param {p.shape}, grad {g.shape}, "
                f"velocity {v.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainerError(f"non-finite gradient for {key}")
        nv = momentum * v + g
        new_params[key] = p - lr * nv
        new_velocity[key] = nv
    return new_params, new_velocity


@dataclass
class TrainLog:
    """Per-episode audit trail: loss trace and the selected augmentation ids."""

    loss_trace: list[float] = field(default_factory=list)
    selected_augmentations: dict[int, list[int]] = field(default_factory=dict)
    init_seed: int = 0


def episode_init_seed(ep_seed: int) -> int:
    return splitmix64(ep_seed ^ _INIT_SALT)


def initial_prompt_state(bank: EmbeddingBank, episode: Episode,
                         config: TrainConfig) -> PromptState:
    return init_prompt_state(bank.dim, config.rank,
                             episode_init_seed(episode.episode_seed),
                             tau=config.tau)


def _episode_texts(bank: EmbeddingBank, episode: Episode) -> np.ndarray:
    return np.stack([bank.text_vector(cid) for cid in episode.class_ids]).astype(np.float64)


def _class_support_ids(episode: Episode, position: int) -> tuple[int, ...]:
    lo = position * episode.shot
    return episode.support_ids[lo:lo + episode.shot]


def _build_training_set(
    bank: EmbeddingBank,
    episode: Episode,
    config: TrainConfig,
    state: PromptState,
    texts: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, dict[int, list[int]]]:
    """Support originals plus per-class selected augmentations, with labels
    as positions into the episode's class list."""
    want = config.selection_count()
    vecs: list[np.ndarray] = []
    labels: list[int] = []
    selected: dict[int, list[int]] = {}
    for j, cid in enumerate(episode.class_ids):
        sup_ids = _class_support_ids(episode, j)
        for sid in sup_ids:
            vecs.append(bank.item_vector(sid).astype(np.float64))
            labels.append(j)
        pool_ids = [a.id for sid in sup_ids for a in bank.augmentations_of(sid)]
        # small banks may not carry a full pool; keep what exists
        r_eff = min(want, len(pool_ids))
        if r_eff > 0:
            pool_vecs = np.stack([bank.item_vector(i) for i in pool_ids])
            chosen = select_augmentations(state, texts[j], pool_ids, pool_vecs, r_eff)
        else:
            chosen = []
        selected[cid] = chosen
        for aid in chosen:
            vecs.append(bank.item_vector(aid).astype(np.float64))
            labels.append(j)
    return np.stack(vecs), np.asarray(labels, dtype=np.int64), selected


def train_episode(
    bank: EmbeddingBank,
    episode: Episode,
    config: TrainConfig,
) -> tuple[PromptState, TrainLog]:
    """Init prompts, select augmentations, run the epoch loop.

    Selection happens once at initialization unless reselect_each_epoch is
    set. Raises TrainerError with the failing epoch on divergence.
    """
    config.validate()
    state = initial_prompt_state(bank, episode, config)
    texts = _episode_texts(bank, episode)
    support, labels, selected = _build_training_set(bank, episode, config, state, texts)
    velocity = {k: np.zeros_like(v) for k, v in state.params().items()}
    trace: list[float] = []
    for epoch in range(config.epochs):
        if config.reselect_each_epoch and epoch > 0:
            support, labels, selected = _build_training_set(
                bank, episode, config, state, texts)
        try:
            breakdown, grads = total_loss_and_grads(
                state, support, labels, texts,
                alpha=config.alpha, beta=config.beta)
            params, velocity = sgd_momentum_step(
                state.params(), grads, velocity,
                config.learning_rate, config.momentum)
        except (FloatingPointError, TrainerError) as exc:
            raise TrainerError(f"episode diverged at epoch {epoch}: {exc}") from exc
        trace.append(breakdown.total)
        state.u_t = params["u_t"]
        state.v_t = params["v_t"]
        state.w_u = params["w_u"]
        state.w_v = params["w_v"]
    log = TrainLog(loss_trace=trace, selected_augmentations=selected,
                   init_seed=episode_init_seed(episode.episode_seed))
    return state, log


def evaluate_episode(state: PromptState, bank: EmbeddingBank,
                     episode: Episode) -> float:
    """Frozen-prompt accuracy on the query set; argmax ties resolve to the
    lowest class position."""
    texts = transform_text_batch(state, _episode_texts(bank, episode))
    correct = 0
    for j in range(episode.way):
        lo = j * episode.query
        for qid in episode.query_ids[lo:lo + episode.query]:
            img = transform_vision_batch(
                state, np.asarray(bank.item_vector(qid), dtype=np.float64)[None, :])[0]
            logits = (texts @ img) / state.tau
            if int(np.argmax(logits)) == j:
                correct += 1
    return correct / (episode.way * episode.query)


def _episode_matrices(state: PromptState, bank: EmbeddingBank,
                      episode: Episode) -> tuple[np.ndarray, np.ndarray]:
    """Distance matrices over transformed class texts and transformed support
    prototypes, for before/after dumps."""
    texts = transform_text_batch(state, _episode_texts(bank, episode))
    protos = []
    for j in range(episode.way):
        sup = np.stack([bank.item_vector(sid)
                        for sid in _class_support_ids(episode, j)]).astype(np.float64)
        transformed = transform_vision_batch(state, sup)
        mean = transformed.mean(axis=0)
        protos.append(mean / np.linalg.norm(mean))
    return distance_matrix(texts), distance_matrix(np.stack(protos))


def _dump_matrices(state: PromptState, bank: EmbeddingBank, episode: Episode,
                   matrix_dir: Path, index: int, phase: str) -> None:
    text_m, image_m = _episode_matrices(state, bank, episode)
    write_matrix_csv(text_m, matrix_dir / f"ep{index:04d}.text_{phase}.csv")
    write_matrix_csv(image_m, matrix_dir / f"ep{index:04d}.image_{phase}.csv")


def _run_one(
    bank: EmbeddingBank,
    index: int,
    config: TrainConfig,
    matrix_dir: Path | None,
    state_dir: Path | None,
) -> EpisodeRecord:
    episode = sample_episode(bank, config.way, config.shot, config.query,
                             config.master_seed, index)
    start = time.perf_counter()
    if matrix_dir is not None:
        _dump_matrices(initial_prompt_state(bank, episode, config),
                       bank, episode, matrix_dir, index, "pre")
    try:
        state, log = train_episode(bank, episode, config)
    except TrainerError as exc:
        return EpisodeRecord(index=index, accuracy=None, failed=True,
                             error=str(exc),
                             wall_time=time.perf_counter() - start)
    accuracy = evaluate_episode(state, bank, episode)
    wall = time.perf_counter() - start
    if matrix_dir is not None:
        _dump_matrices(state, bank, episode, matrix_dir, index, "post")
    if state_dir is not None:
        state_dir.mkdir(parents=True, exist_ok=True)
        save_prompt_state(state, state_dir / f"ep{index:04d}.pmps")
    return EpisodeRecord(index=index, accuracy=accuracy,
                         loss_trace=log.loss_trace,
                         selected_augmentations=log.selected_augmentations,
                         wall_time=wall)


_WORKER_STATE: dict[str, object] = {}


def _worker_init(bank: EmbeddingBank, config: TrainConfig,
                 matrix_dir: Path | None, state_dir: Path | None) -> None:
    _WORKER_STATE["bank"] = bank
    _WORKER_STATE["config"] = config
    _WORKER_STATE["matrix_dir"] = matrix_dir
    _WORKER_STATE["state_dir"] = state_dir


def _worker_run(index: int) -> EpisodeRecord:
    return _run_one(_WORKER_STATE["bank"], index, _WORKER_STATE["config"],
                    _WORKER_STATE["matrix_dir"], _WORKER_STATE["state_dir"])


def run_benchmark(
    bank: EmbeddingBank,
    config: TrainConfig,
    workers: int = 1,
    matrix_dir: str | Path | None = None,
    state_dir: str | Path | None = None,
) -> RunResult:
    """Train and evaluate config.episodes episodes, aggregate accuracies.

    Diverged episodes are recorded as failed and excluded from aggregation;
    an all-failed run raises. Results are identical for any worker count.
    """
    config.validate()
    if workers < 1:
        raise TrainerError(f"workers must be >= 1, got {workers}")
    m_dir = Path(matrix_dir) if matrix_dir is not None else None
    s_dir = Path(state_dir) if state_dir is not None else None
    if m_dir is not None:
        m_dir.mkdir(parents=True, exist_ok=True)

    indices = range(config.episodes)
    if workers == 1:
        records = [_run_one(bank, i, config, m_dir, s_dir) for i in indices]
    else:
        with ProcessPoolExecutor(
                max_workers=workers, initializer=_worker_init,
                initargs=(bank, config, m_dir, s_dir)) as pool:
            records = list(pool.map(_worker_run, indices))

    ok = [r for r in records if not r.failed]
    if not ok:
        first = records[0].error if records else "no episodes"
        raise TrainerError(f"all {len(records)} episodes failed; first error: {first}")
    accuracies = [float(r.accuracy) for r in ok]
    mean, ci95 = aggregate_results(accuracies)
    return RunResult(episode_accuracies=accuracies, mean_accuracy=mean,
                     ci95=ci95, records=records,
                     failed_count=len(records) - len(ok))
