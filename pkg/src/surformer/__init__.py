"""Tactile-vision surface material classification with cross-modal attention."""

from .data import CLASS_NAMES, SurfaceClass
from .errors import SurformerError
from .models import Surformer, SurformerConfig, TactileTransformer, TactileTransformerConfig

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES",
    "Surformer",
    "SurformerConfig",
    "SurformerError",
    "SurfaceClass",
    "TactileTransformer",
    "TactileTransformerConfig",
]
