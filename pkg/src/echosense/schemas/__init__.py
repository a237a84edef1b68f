"""Published JSON schemas for the echosense interfaces."""

from __future__ import annotations

import json
from importlib import resources

__all__ = ["load_schema"]


def load_schema() -> dict:
    """The combined JSON schema; individual shapes live under ``$defs``."""
    text = resources.files(__package__).joinpath("echosense.schema.json").read_text()
    return json.loads(text)
