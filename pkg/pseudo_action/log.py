import logging

from rich.console import Console
from rich.logging import RichHandler

PACKAGE_LOGGER = "pseudo_action"

console = Console(stderr=True)


def get_logger(name: str) -> logging.Logger:
    """
    Return a logger below the package logger.

    Examples:
        >>> get_logger("pseudo_action.replay").name
        'pseudo_action.replay'
        >>> get_logger("harness").name
        'pseudo_action.harness'
    """
    if name == PACKAGE_LOGGER or name.startswith(PACKAGE_LOGGER + "."):
        return logging.getLogger(name)
    return logging.getLogger(f"{PACKAGE_LOGGER}.{name}")


def setup_logging(level: int | str = logging.INFO) -> logging.Logger:
    """
    Attach a rich handler to the package logger. Calling it again only
    changes the level.
    """
    logger = logging.getLogger(PACKAGE_LOGGER)
    logger.setLevel(level)
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(console=console, show_path=False, rich_tracebacks=True)
        handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
        logger.addHandler(handler)
        logger.propagate = False
    return logger
