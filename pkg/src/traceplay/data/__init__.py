"""Bundled models, traces, golden scenarios, and environment configs."""

from importlib.resources import files
from pathlib import Path


def data_path(relative: str) -> Path:
    """Filesystem path of a bundled data file, e.g. ``models/nspk.model``."""
    path = Path(str(files("traceplay").joinpath("data", relative)))
    if not path.exists():
        raise FileNotFoundError(f"no bundled data file {relative!r}")
    return path


def read_data(relative: str) -> str:
    return data_path(relative).read_text()
