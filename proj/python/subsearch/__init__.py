# SPDX-License-Identifier: Apache-2.0
"""Subspace CMA-ES search over embedding spaces."""

import json

from ._core import (
    CmaEs,
    ConfigError,
    DomainError,
    EvaluationError,
    IoError,
    StageError,
    cosine_similarity,
    derive_seed,
    minimize,
    random_projection,
    sigma_p,
    softmax,
)
from . import _core

__all__ = [
    "CmaEs",
    "ConfigError",
    "DomainError",
    "EvaluationError",
    "IoError",
    "StageError",
    "canonical_config",
    "config_hash",
    "cosine_similarity",
    "derive_seed",
    "minimize",
    "random_projection",
    "run",
    "sigma_p",
    "softmax",
    "sweep",
]


def _text(config):
    if config is None:
        return ""
    if isinstance(config, str):
        return config
    return json.dumps(config)


def canonical_config(config=None):
    """All keys of a config with defaults filled in."""
    return json.loads(_core._canonical_config(_text(config)))


def config_hash(config=None):
    return _core._config_hash(_text(config))


def run(config=None):
    """Runs one experiment and returns its report as a dict."""
    return json.loads(_core._run(_text(config)))


def sweep(config=None, axis="d"):
    return json.loads(_core._sweep(_text(config), axis))
