"""bankexport: produce PMEB v1 embedding banks from image folders."""
from .augment import (MODE_STRONG, MODE_WEAK, MODES, apply_augmentation,
                      draw_augmentation_params)
from .encoders import (Encoder, ToyEncoder, register_encoder, resolve_encoder)
from .export import (DEFAULT_TEMPLATE, ExportError, ExportSummary, export_bank)

__version__ = "0.1.0"

__all__ = [
    "MODE_STRONG",
    "MODE_WEAK",
    "MODES",
    "apply_augmentation",
    "draw_augmentation_params",
    "Encoder",
    "ToyEncoder",
    "register_encoder",
    "resolve_encoder",
    "DEFAULT_TEMPLATE",
    "ExportError",
    "ExportSummary",
    "export_bank",
    "__version__",
]
