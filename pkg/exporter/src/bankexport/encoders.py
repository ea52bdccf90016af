"""Encoder resolution for the exporter.

An encoder turns PIL images and class strings into embedding rows. The
built-in toy encoder is fully deterministic and needs no model weights, so
the export pipeline stays testable on any machine. Real models plug in
through register_encoder without touching this module.
"""
from __future__ import annotations

import hashlib
from typing import Callable, Protocol

import numpy as np
from PIL import Image

TOY_DEFAULT_DIM = 64
_TOY_PATCH = 16  # images are resampled to _TOY_PATCH x _TOY_PATCH before projection


class Encoder(Protocol):
    dim: int

    def encode_images(self, images: list[Image.Image]) -> np.ndarray: ...

    def encode_texts(self, texts: list[str]) -> np.ndarray: ...


class ToyEncoder:
    """Deterministic stand-in encoder: a fixed random projection of
    downsampled pixels for images, a content-hash-seeded direction for
    texts. Same inputs always produce the same rows, on any host."""

    def __init__(self, dim: int = TOY_DEFAULT_DIM, seed: int = 0):
        if dim < 2:
            raise ValueError(f"dim must be >= 2, got {dim}")
        self.dim = dim
        rng = np.random.default_rng(seed)
        self._projection = rng.standard_normal((_TOY_PATCH * _TOY_PATCH * 3, dim))
        self._bias = rng.standard_normal(dim) * 0.1

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        rows = np.zeros((len(images), self.dim))
        for i, image in enumerate(images):
            small = image.convert("RGB").resize(
                (_TOY_PATCH, _TOY_PATCH), resample=Image.Resampling.BILINEAR)
            pixels = np.asarray(small, dtype=np.float64).reshape(-1) / 255.0
            rows[i] = np.tanh(pixels @ self._projection + self._bias)
        return rows

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        rows = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            rows[i] = rng.standard_normal(self.dim)
        return rows


_REGISTRY: dict[str, Callable[[str], Encoder]] = {}


def register_encoder(prefix: str, factory: Callable[[str], Encoder]) -> None:
    """Register a factory for model ids of the form '<prefix>' or
    '<prefix>:<rest>'; the factory receives the full model id."""
    _REGISTRY[prefix] = factory


def _toy_factory(model_id: str) -> Encoder:
    _, _, rest = model_id.partition(":")
    dim = int(rest) if rest else TOY_DEFAULT_DIM
    return ToyEncoder(dim=dim)


register_encoder("toy", _toy_factory)


def resolve_encoder(model_id: str) -> Encoder:
    """Build the encoder for a model id ('toy', 'toy:<dim>', or anything
    added via register_encoder)."""
    prefix = model_id.partition(":")[0]
    factory = _REGISTRY.get(prefix)
    if factory is None:
        known = ", ".join(sorted(_REGISTRY))
        raise ValueError(
            f"model {model_id!r} is not available in this runtime "
            f"(registered: {known}); register an encoder for it or use "
            f"'toy[:dim]'")
    try:
        return factory(model_id)
    except ValueError:
        raise
    except Exception as exc:
        raise ValueError(f"model {model_id!r} failed to load: {exc}") from exc
