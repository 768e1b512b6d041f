"""Budget-constrained attack-path search over an augmented cyber-physical simulation model."""

from __future__ import annotations

__version__ = "0.1.0"

from .ci import CI, CIError, load_ci, validate_ci
from .engine import CyberEngine, CyberState
from .asm import AugmentedModel, build_model
from .sdmo import AttackPath, MCTS, SearchConfig, search

__all__ = [
    "CI",
    "CIError",
    "load_ci",
    "validate_ci",
    "CyberEngine",
    "CyberState",
    "AugmentedModel",
    "build_model",
    "AttackPath",
    "MCTS",
    "SearchConfig",
    "search",
    "__version__",
]
