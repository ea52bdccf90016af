"""Selective augmentation: keep the r augmentations most similar to the
class text embedding, both sides seen through the current prompt maps."""
from __future__ import annotations

import numpy as np

from .model import PromptState, transform_text_batch, transform_vision_batch


def select_augmentations(
    state: PromptState,
    class_text_vec: np.ndarray,
    pool_ids: list[int],
    pool_vectors: np.ndarray,
    r: int,
) -> list[int]:
    """Ids of the r pool items with the largest cosine similarity to the
    class text, after transforming both through the prompt maps. Ties break
    toward the smaller id; the result is sorted ascending by id."""
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    if r > len(pool_ids):
        raise ValueError(f"r ({r}) exceeds pool size ({len(pool_ids)})")
    if r == 0:
        return []
    vectors = np.asarray(pool_vectors, dtype=np.float64)
    if vectors.shape[0] != len(pool_ids):
        raise ValueError(f"{len(pool_ids)} ids for {vectors.shape[0]} vectors")
    text = transform_text_batch(state, np.asarray(class_text_vec)[None, :])[0]
    transformed = transform_vision_batch(state, vectors)
    sims = transformed @ text  # both sides unit-norm, so this is cosine
    order = sorted(range(len(pool_ids)), key=lambda i: (-sims[i], pool_ids[i]))
    return sorted(pool_ids[i] for i in order[:r])
