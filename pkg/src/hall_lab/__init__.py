"""Numerical laboratory for the integer quantum Hall effect on a magnetic torus."""

__version__ = "0.1.0"

from .errors import ConfigError, HallLabError  # noqa: E402
from .model import ModelConfig  # noqa: E402

__all__ = ["ConfigError", "HallLabError", "ModelConfig", "__version__"]
