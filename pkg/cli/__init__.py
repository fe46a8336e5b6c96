from .app import ExperimentApp
from .parser import build_parser, config_overrides

__all__ = ["ExperimentApp", "build_parser", "config_overrides"]
