"""Trojan-horse audit toolkit for QKD apparatuses."""

from importlib import resources
from pathlib import Path

from .errors import (
    FormatError,
    InvalidParameter,
    NotNormalized,
    NyquistViolation,
    PathExplosion,
    QTAError,
    TailTooHeavy,
)

__version__ = "0.1.0"

DEMOS = {
    "alice": "alice.json",
    "bob": "bob.json",
    "scenario": "trojan_scenario.json",
}


def demo_path(name: str) -> Path:
    """Path of a bundled demo file: 'alice', 'bob' or 'scenario'."""
    return Path(str(resources.files(__package__) / "data" / DEMOS[name]))


__all__ = [
    "DEMOS",
    "FormatError",
    "InvalidParameter",
    "NotNormalized",
    "NyquistViolation",
    "PathExplosion",
    "QTAError",
    "TailTooHeavy",
    "demo_path",
]
