"""Python interface to the ehrtext core."""

import json
import os

from ._core import (
    ConfigError,
    Error,
    FormatError,
    ManifestError,
    MetricUndefined,
    Tokenizer,
    auprc,
    digit_place_tokens,
    normalize_identifier,
    normalize_text,
)
from . import _core

__all__ = [
    "ConfigError",
    "Error",
    "FormatError",
    "ManifestError",
    "MetricUndefined",
    "Tokenizer",
    "auprc",
    "digit_place_tokens",
    "generate_hospital",
    "ingest",
    "normalize_identifier",
    "normalize_text",
    "run_experiment",
]


def generate_hospital(out_dir, **config):
    """Writes a synthetic hospital export; keyword arguments are generator settings."""
    return json.loads(_core._generate_hospital(json.dumps(config), os.fspath(out_dir)))


def ingest(manifest, out, dx_class_map=None):
    """Ingests a raw export into a dataset JSON file; returns the ingestion report."""
    dx = None if dx_class_map is None else os.fspath(dx_class_map)
    return json.loads(_core._ingest(os.fspath(manifest), dx, os.fspath(out)))


def run_experiment(config, base_dir="."):
    """Runs an experiment from a config dict; relative paths resolve against base_dir."""
    return json.loads(_core._run_experiment(json.dumps(config), os.fspath(base_dir)))
