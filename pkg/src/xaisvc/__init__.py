"""xaisvc: open-API XAI orchestration.

Computes feature-contribution explanations for black-box model services via
the saliency → mask → re-predict workflow, evaluates them with
prediction-change and stability metrics, and records every operation in a
graph-format provenance store supporting diff and reproducible rerun.
"""

from .__about__ import __version__
from .center import CoordinationCenter
from .config import AppConfig, load_config

__all__ = ["__version__", "CoordinationCenter", "AppConfig", "load_config"]
