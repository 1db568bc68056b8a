"""控制器模块"""

from .cli_controller import CLIController, EXIT_CHECK_FAILED, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE

__all__ = [
    'CLIController',
    'EXIT_OK',
    'EXIT_CHECK_FAILED',
    'EXIT_USAGE',
    'EXIT_NUMERIC',
]
