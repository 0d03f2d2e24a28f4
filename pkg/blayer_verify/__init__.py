"""blayer_verify — numerical verification toolkit for viscous boundary layers."""

from blayer_verify.configs.constants import TOOL_VERSION

__version__ = TOOL_VERSION

__all__ = ["__version__"]
