"""Trainable prompt surrogate over frozen embeddings.

Text embeddings pass through a shared low-rank residual map
    t -> normalize(t + U_t (V_t^T t))
and image embeddings through the coupled vision map whose factors are always
derived from the current text factors through two rank-space couplings:
    x -> normalize(x + (U_t W_u) ((V_t W_v)^T x)).
Prompts are shared across classes; only U_t, V_t, W_u, W_v train.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TAU_DEFAULT = 0.01
INIT_SCALE = 0.01

BRANCH_TEXT = "text"
BRANCH_VISION = "vision"


@dataclass
class PromptState:
    """Trainable parameters: text factors and text-to-vision couplings.

    Vision factors are recomputed from the text factors on every use so they
    can never go stale.
    """

    u_t: np.ndarray  # (dim, rank)
    v_t: np.ndarray  # (dim, rank)
    w_u: np.ndarray  # (rank, rank)
    w_v: np.ndarray  # (rank, rank)
    rank: int
    tau: float = TAU_DEFAULT

    @property
    def dim(self) -> int:
        return self.u_t.shape[0]

    def vision_factors(self) -> tuple[np.ndarray, np.ndarray]:
        """Derived vision-branch factors (U_t W_u, V_t W_v)."""
        return self.u_t @ self.w_u, self.v_t @ self.w_v

    def params(self) -> dict[str, np.ndarray]:
        return {"u_t": self.u_t, "v_t": self.v_t, "w_u": self.w_u, "w_v": self.w_v}

    def copy(self) -> "PromptState":
        return PromptState(u_t=self.u_t.copy(), v_t=self.v_t.copy(),
                           w_u=self.w_u.copy(), w_v=self.w_v.copy(),
                           rank=self.rank, tau=self.tau)

    def param_bytes(self) -> bytes:
        """Concatenated parameter bytes; used to assert freeze contracts."""
        return b"".join(np.ascontiguousarray(p, dtype=np.float64).tobytes()
                        for p in self.params().values())


def init_prompt_state(
    dim: int,
    rank: int,
    seed: int,
    tau: float = TAU_DEFAULT,
    scale: float = INIT_SCALE,
) -> PromptState:
    """Near-identity initialization.

    Factors are gaussian with standard deviation scale/sqrt(dim), couplings
    start at identity, so initial transforms perturb a unit vector by well
    under 1e-2 before renormalization.
    """
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if dim < rank:
        raise ValueError(f"dim ({dim}) must be >= rank ({rank})")
    rng = np.random.default_rng(seed)
    std = scale / np.sqrt(dim)
    u_t = rng.standard_normal((dim, rank)) * std
    v_t = rng.standard_normal((dim, rank)) * std
    return PromptState(u_t=u_t, v_t=v_t,
                       w_u=np.eye(rank), w_v=np.eye(rank),
                       rank=rank, tau=tau)


def _transform(u: np.ndarray, v: np.ndarray, x: np.ndarray) -> np.ndarray:
    """normalize(x + U (V^T x)) applied row-wise to a (n, dim) stack."""
    raw = x + (x @ v) @ u.T
    norms = np.linalg.norm(raw, axis=-1, keepdims=True)
    if np.any(norms < 1e-12):
        raise FloatingPointError("prompt transform collapsed a vector to zero")
    return raw / norms


def transform_text_batch(state: PromptState, vectors: np.ndarray) -> np.ndarray:
    """Text-branch transform of a (n, dim) stack; rows come back unit-norm."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.shape[-1] != state.dim:
        raise ValueError(f"vector dim {arr.shape[-1]} != state dim {state.dim}")
    return _transform(state.u_t, state.v_t, arr)


def transform_vision_batch(state: PromptState, vectors: np.ndarray) -> np.ndarray:
    """Vision-branch transform of a (n, dim) stack via the coupled factors."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.shape[-1] != state.dim:
        raise ValueError(f"vector dim {arr.shape[-1]} != state dim {state.dim}")
    u_v, v_v = state.vision_factors()
    return _transform(u_v, v_v, arr)


def embed_with_prompts(state: PromptState, vector: np.ndarray, branch: str) -> np.ndarray:
    """Transform one unit vector through the chosen branch; output unit-norm."""
    arr = np.asarray(vector, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a single vector, got shape {arr.shape}")
    if branch == BRANCH_TEXT:
        return transform_text_batch(state, arr[None, :])[0]
    if branch == BRANCH_VISION:
        return transform_vision_batch(state, arr[None, :])[0]
    raise ValueError(f"unknown branch {branch!r}")


def class_logits(state: PromptState, image_vec: np.ndarray,
                 text_vecs: np.ndarray) -> np.ndarray:
    """Cosine similarity of the prompted image against each prompted class
    text, divided by the temperature."""
    texts = np.asarray(text_vecs, dtype=np.float64)
    if texts.ndim != 2 or texts.shape[0] < 2:
        raise ValueError(f"need >= 2 class text vectors, got shape {texts.shape}")
    img = embed_with_prompts(state, image_vec, BRANCH_VISION)
    t = transform_text_batch(state, texts)
    return (t @ img) / state.tau


_CHECKPOINT_MAGIC = b"PMPS"


def save_prompt_state(state: PromptState, path: str | Path) -> None:
    """Binary checkpoint: magic, u32 dim, u32 rank, f64 tau, then the four
    factor blocks as row-major f32 little-endian."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _CHECKPOINT_MAGIC + struct.pack("<IId", state.dim, state.rank, state.tau)
    blocks = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes()
                      for p in (state.u_t, state.v_t, state.w_u, state.w_v))
    path.write_bytes(header + blocks)


def load_prompt_state(path: str | Path) -> PromptState:
    raw = Path(path).read_bytes()
    if raw[:4] != _CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a prompt-state checkpoint")
    dim, rank, tau = struct.unpack("<IId", raw[4:20])
    sizes = [dim * rank, dim * rank, rank * rank, rank * rank]
    expected = 20 + 4 * sum(sizes)
    if len(raw) != expected:
        raise ValueError(f"checkpoint size {len(raw)} != expected {expected}")
    offset = 20
    blocks = []
    for n, shape in zip(sizes, [(dim, rank), (dim, rank), (rank, rank), (rank, rank)]):
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=offset)
        blocks.append(arr.reshape(shape).astype(np.float64))
        offset += 4 * n
    return PromptState(u_t=blocks[0], v_t=blocks[1], w_u=blocks[2], w_v=blocks[3],
                       rank=rank, tau=tau)
