"""Logger setup shared by every component."""

import logging

from components.config import config

_configured = False


def configure_logging(level=None):
    """Configure the root handler once; later calls only adjust the level."""
    global _configured
    level = level or config.LOG_LEVEL
    if not _configured:
        logging.basicConfig(format="%(asctime)s %(levelname)s %(name)s: %(message)s")
        _configured = True
    logging.getLogger().setLevel(level)


def get_logger(name):
    return logging.getLogger(name)
