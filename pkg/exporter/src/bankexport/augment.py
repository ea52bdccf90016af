"""Deterministic image augmentations on top of Pillow.

Parameters are drawn separately from application: draw_augmentation_params
produces a JSON-serializable dict from an RNG, apply_augmentation replays it
on an image. The split lets the exporter record every draw in the bank
manifest, so a fixed seed reproduces identical metadata on any host.
"""
from __future__ import annotations

import numpy as np
from PIL import Image, ImageEnhance, ImageOps

MODE_WEAK = "weak"
MODE_STRONG = "strong"
MODES = (MODE_WEAK, MODE_STRONG)

ROTATION_DEGREES = 15.0
JITTER_RANGE = (0.65, 1.35)
CROP_SCALE_RANGE = (0.6, 1.0)
ERASE_PROB = 0.5
ERASE_AREA_RANGE = (0.02, 0.2)
ERASE_ASPECT_RANGE = (0.3, 3.3)

POLICY_OPS = ("autocontrast", "equalize", "posterize", "solarize",
              "sharpness", "invert")


def _round(value: float) -> float:
    return round(float(value), 6)


def draw_augmentation_params(rng: np.random.Generator, mode: str) -> dict:
    """One augmentation's full parameter set.

    Weak mode draws a horizontal flip, a rotation, a color jitter, and a
    resized crop; strong mode additionally draws a random erasing rectangle
    (applied with probability 0.5) and one auto-augment style policy op.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    scale = rng.uniform(*CROP_SCALE_RANGE)
    side = float(np.sqrt(scale))
    params = {
        "flip": bool(rng.random() < 0.5),
        "rotation": _round(rng.uniform(-ROTATION_DEGREES, ROTATION_DEGREES)),
        "brightness": _round(rng.uniform(*JITTER_RANGE)),
        "contrast": _round(rng.uniform(*JITTER_RANGE)),
        "saturation": _round(rng.uniform(*JITTER_RANGE)),
        "crop": {
            "side": _round(side),
            "x": _round(rng.uniform(0.0, 1.0 - side)),
            "y": _round(rng.uniform(0.0, 1.0 - side)),
        },
    }
    if mode == MODE_STRONG:
        if rng.random() < ERASE_PROB:
            area = rng.uniform(*ERASE_AREA_RANGE)
            aspect = rng.uniform(*ERASE_ASPECT_RANGE)
            w = min(1.0, float(np.sqrt(area * aspect)))
            h = min(1.0, float(np.sqrt(area / aspect)))
            params["erase"] = {
                "w": _round(w),
                "h": _round(h),
                "x": _round(rng.uniform(0.0, 1.0 - w)),
                "y": _round(rng.uniform(0.0, 1.0 - h)),
                "value": int(rng.integers(0, 256)),
            }
        else:
            params["erase"] = None
        params["policy"] = POLICY_OPS[int(rng.integers(0, len(POLICY_OPS)))]
    return params


def _apply_policy(image: Image.Image, op: str) -> Image.Image:
    if op == "autocontrast":
        return ImageOps.autocontrast(image)
    if op == "equalize":
        return ImageOps.equalize(image)
    if op == "posterize":
        return ImageOps.posterize(image, 4)
    if op == "solarize":
        return ImageOps.solarize(image, 128)
    if op == "sharpness":
        return ImageEnhance.Sharpness(image).enhance(2.0)
    if op == "invert":
        return ImageOps.invert(image)
    raise ValueError(f"unknown policy op {op!r}")


def apply_augmentation(image: Image.Image, params: dict) -> Image.Image:
    """Replay a parameter dict on an image; output keeps the input size."""
    out = image.convert("RGB")
    width, height = out.size
    if params["flip"]:
        out = ImageOps.mirror(out)
    out = out.rotate(params["rotation"], resample=Image.Resampling.BILINEAR)
    out = ImageEnhance.Brightness(out).enhance(params["brightness"])
    out = ImageEnhance.Contrast(out).enhance(params["contrast"])
    out = ImageEnhance.Color(out).enhance(params["saturation"])

    crop = params["crop"]
    w = max(1, round(crop["side"] * width))
    h = max(1, round(crop["side"] * height))
    x0 = min(round(crop["x"] * width), width - w)
    y0 = min(round(crop["y"] * height), height - h)
    out = out.crop((x0, y0, x0 + w, y0 + h))
    out = out.resize((width, height), resample=Image.Resampling.BILINEAR)

    erase = params.get("erase")
    if erase is not None:
        ew = max(1, round(erase["w"] * width))
        eh = max(1, round(erase["h"] * height))
        ex = min(round(erase["x"] * width), width - ew)
        ey = min(round(erase["y"] * height), height - eh)
        value = (erase["value"],) * 3
        out.paste(Image.new("RGB", (ew, eh), value), (ex, ey))

    policy = params.get("policy")
    if policy is not None:
        out = _apply_policy(out, policy)
    return out
