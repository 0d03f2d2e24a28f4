"""configs — Run configuration, constants and the system catalog.

``systems_registry`` is imported on demand (it depends on ``core.model_core``).
"""

from blayer_verify.configs.settings import (
    RunConfig,
    Settings,
    config_hash,
    get_settings,
    load_config,
    parse_config,
    section_hash,
)
from blayer_verify.configs import constants

__all__ = [
    "RunConfig",
    "Settings",
    "config_hash",
    "get_settings",
    "load_config",
    "parse_config",
    "section_hash",
    "constants",
]
