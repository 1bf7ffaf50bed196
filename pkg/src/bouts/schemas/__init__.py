"""Loader for the JSON schemas shipped with the package."""

from __future__ import annotations

import json
from importlib import resources

SCHEMA_NAMES = (
    "manifest",
    "truth",
    "model",
    "selected_features",
    "importances",
    "split",
    "selected_lambda",
    "path",
    "stability_report",
)


def load_schema(name: str) -> dict:
    """Schema document for one emitted artifact, e.g. ``load_schema("model")``."""
    if name not in SCHEMA_NAMES:
        raise ValueError(f"unknown schema {name!r}; available: {SCHEMA_NAMES}")
    path = resources.files(__name__).joinpath(f"{name}.schema.json")
    return json.loads(path.read_text())
