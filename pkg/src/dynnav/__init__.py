"""Seeded 2D navigation among moving obstacles.

Modules: ``world`` (simulator), ``scenario`` (JSON loading), ``perception``
(clustering and tracking), ``prediction`` (GMM virtual points), ``planner``
(receding-horizon optimizer), ``harness``/``report``/``cli`` (experiments).
"""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
