"""Bank export pipeline: scan a folder of class-named image subfolders,
augment, embed, normalize, and write a PMEB v1 bank directory.

The output is written to a temp directory and renamed into place, so a
failed export never leaves a partial bank. Every augmentation parameter
draw is recorded in the manifest under the "export" key; readers of the
format ignore unknown keys, and a fixed seed reproduces the manifest
byte for byte.
"""
from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .augment import (CROP_SCALE_RANGE, ERASE_AREA_RANGE, ERASE_ASPECT_RANGE,
                      ERASE_PROB, JITTER_RANGE, MODE_STRONG, MODE_WEAK, MODES,
                      POLICY_OPS, ROTATION_DEGREES, apply_augmentation,
                      draw_augmentation_params)
from .encoders import Encoder, resolve_encoder

FORMAT_VERSION = 1
DEFAULT_TEMPLATE = "a photo of a [CLASS]"
CLASS_PLACEHOLDER = "[CLASS]"

log = logging.getLogger("bankexport")


class ExportError(Exception):
    """Data-level export failure: unusable input folder or degenerate output."""


@dataclass(frozen=True)
class ExportSummary:
    out: Path
    dim: int
    classes: int
    originals: int
    augmentations: int
    skipped: int

    @property
    def rows(self) -> int:
        return self.classes + self.originals + self.augmentations


def _load_images(class_dir: Path) -> tuple[list[Image.Image], int]:
    """Readable images of one class folder, in name order, plus skip count."""
    images: list[Image.Image] = []
    skipped = 0
    for file in sorted(p for p in class_dir.iterdir() if p.is_file()):
        try:
            with Image.open(file) as handle:
                images.append(handle.convert("RGB"))
        except (UnidentifiedImageError, OSError) as exc:
            log.warning("skipping unreadable image %s: %s", file, exc)
            skipped += 1
    return images, skipped


def _scan_root(images_root: Path) -> tuple[list[str], list[list[Image.Image]], int]:
    if not images_root.is_dir():
        raise ExportError(f"images root {images_root} is not a directory")
    class_dirs = sorted(p for p in images_root.iterdir() if p.is_dir())
    if not class_dirs:
        raise ExportError(f"images root {images_root} has no class subfolders")
    names: list[str] = []
    per_class: list[list[Image.Image]] = []
    skipped = 0
    for class_dir in class_dirs:
        images, bad = _load_images(class_dir)
        skipped += bad
        if not images:
            raise ExportError(
                f"class folder {class_dir.name!r} has no readable images")
        names.append(class_dir.name)
        per_class.append(images)
    return names, per_class, skipped


def _normalized_rows(raw: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(raw, axis=1)
    tiny = np.nonzero(norms < 1e-12)[0]
    if tiny.size:
        raise ExportError(f"encoder produced a near-zero embedding "
                          f"(row {int(tiny[0])})")
    return raw / norms[:, None]


def _write_atomic(out: Path, manifest_text: str, vector_bytes: bytes) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.exists():
        if not out.is_dir() or any(out.iterdir()):
            raise ExportError(f"output path {out} already exists and is not "
                              f"an empty directory")
        out.rmdir()
    tmp = Path(tempfile.mkdtemp(dir=out.parent, prefix=".bankexport-"))
    try:
        (tmp / "manifest.json").write_text(manifest_text, encoding="utf-8")
        (tmp / "vectors.bin").write_bytes(vector_bytes)
        os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def export_bank(
    images_root: str | Path,
    out: str | Path,
    model_id: str = "toy",
    augs_per_image: int = 3,
    aug_mode: str = MODE_WEAK,
    template: str = DEFAULT_TEMPLATE,
    pseudo_names: bool = False,
    seed: int = 0,
    encoder: Encoder | None = None,
) -> ExportSummary:
    """Export one PMEB v1 bank from a folder of class-named subfolders.

    Each class contributes one text row (template with the class name, or a
    C<k> placeholder when pseudo_names), one row per readable image, and
    augs_per_image augmentation rows per image with parent links. Pass an
    encoder to bypass model_id resolution.
    """
    if augs_per_image < 0:
        raise ValueError(f"augs_per_image must be >= 0, got {augs_per_image}")
    if aug_mode not in MODES:
        raise ValueError(f"aug_mode must be one of {MODES}, got {aug_mode!r}")
    if CLASS_PLACEHOLDER not in template:
        raise ValueError(f"template must contain {CLASS_PLACEHOLDER!r}, "
                         f"got {template!r}")
    if encoder is None:
        encoder = resolve_encoder(model_id)

    names, per_class, skipped = _scan_root(Path(images_root))
    display = [f"C{k + 1}" for k in range(len(names))] if pseudo_names else names
    texts = [template.replace(CLASS_PLACEHOLDER, name) for name in display]

    rng = np.random.default_rng(seed)
    classes = []
    items = []
    images: list[Image.Image] = []
    aug_params: dict[str, dict] = {}
    next_item = 0
    next_row = len(names)  # text rows occupy [0, len(names))
    for c, originals in enumerate(per_class):
        classes.append({"id": c, "name": display[c], "pseudo": bool(pseudo_names),
                        "text_vector_index": c})
        for original in originals:
            parent_id = next_item
            items.append({"id": parent_id, "class_id": c, "role": "original",
                          "parent_id": None, "vector_index": next_row})
            images.append(original)
            next_item += 1
            next_row += 1
            for _ in range(augs_per_image):
                params = draw_augmentation_params(rng, aug_mode)
                items.append({"id": next_item, "class_id": c,
                              "role": "augmentation", "parent_id": parent_id,
                              "vector_index": next_row})
                images.append(apply_augmentation(original, params))
                aug_params[str(next_item)] = params
                next_item += 1
                next_row += 1

    text_rows = encoder.encode_texts(texts)
    image_rows = encoder.encode_images(images)
    if text_rows.shape != (len(texts), encoder.dim):
        raise ExportError(f"encoder returned text shape {text_rows.shape}, "
                          f"expected {(len(texts), encoder.dim)}")
    if image_rows.shape != (len(images), encoder.dim):
        raise ExportError(f"encoder returned image shape {image_rows.shape}, "
                          f"expected {(len(images), encoder.dim)}")
    rows = _normalized_rows(np.vstack([text_rows, image_rows]))
    vectors = np.ascontiguousarray(rows, dtype="<f4")

    menu = {
        "rotation_degrees": ROTATION_DEGREES,
        "jitter_range": list(JITTER_RANGE),
        "crop_scale_range": list(CROP_SCALE_RANGE),
    }
    if aug_mode == MODE_STRONG:
        menu.update({
            "erase_prob": ERASE_PROB,
            "erase_area_range": list(ERASE_AREA_RANGE),
            "erase_aspect_range": list(ERASE_ASPECT_RANGE),
            "policy_ops": list(POLICY_OPS),
        })
    manifest = {
        "version": FORMAT_VERSION,
        "dim": encoder.dim,
        "vector_count": int(vectors.shape[0]),
        "classes": classes,
        "items": items,
        "export": {
            "model_id": model_id,
            "template": template,
            "aug_mode": aug_mode,
            "augs_per_image": augs_per_image,
            "pseudo_names": bool(pseudo_names),
            "seed": seed,
            "skipped_files": skipped,
            "menu": menu,
            "augmentation_params": aug_params,
        },
    }
    manifest_text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    out = Path(out)
    _write_atomic(out, manifest_text, vectors.tobytes())

    originals_count = sum(len(group) for group in per_class)
    return ExportSummary(out=out, dim=encoder.dim, classes=len(names),
                         originals=originals_count,
                         augmentations=originals_count * augs_per_image,
                         skipped=skipped)
