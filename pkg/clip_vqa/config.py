import logging
import os
from typing import Optional

from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler

# load environment variables from .env file
load_dotenv()

LOG_LEVEL = os.getenv("CLIPVQA_LOG_LEVEL", "INFO")

# Checkpoint served by the HTTP API
CHECKPOINT_PATH = os.getenv("CLIPVQA_CHECKPOINT", "")

# Default directory for generated data and training runs
DATA_DIR = os.getenv("CLIPVQA_DATA_DIR", "./runs")

_TRUTHY = {"1", "true", "yes", "on"}


def debug_from_env() -> bool:
    """Whether the NaN/Inf guard should start enabled."""
    return os.getenv("CLIPVQA_DEBUG", "").strip().lower() in _TRUTHY


def configure_logging(level: Optional[str] = None) -> None:
    """Route every logger through a rich handler on stderr; stdout carries reports."""
    logging.basicConfig(
        level=(level or LOG_LEVEL).upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[
            RichHandler(
                console=Console(stderr=True), rich_tracebacks=True, show_path=False
            )
        ],
        force=True,
    )
