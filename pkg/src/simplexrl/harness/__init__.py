"""Config-driven command line front end."""

from .cli import main
from .config import ConfigError, ExperimentConfig, load_config

__all__ = ["main", "ConfigError", "ExperimentConfig", "load_config"]
