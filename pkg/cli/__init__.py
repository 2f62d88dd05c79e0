"""Command-line front end."""
from .commands import COMMANDS, build_parser, main
from .config import RunConfig, load_run_config

__all__ = ['COMMANDS', 'RunConfig', 'build_parser', 'load_run_config', 'main']
