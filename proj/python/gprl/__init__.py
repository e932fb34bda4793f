"""Python access to the GPRL core: expressions, benchmarks and returns."""

import json

from ._gprl import (
    DataError,
    Environment,
    InputShapeError,
    ParseError,
    UsageError,
    complexity,
    default_config_json,
    discount_for,
    evaluate,
    penalty,
    random_expression,
    simplify,
)


def default_config(env, profile="desk"):
    """Experiment defaults as a plain dict (same layout the CLI's --config accepts)."""
    return json.loads(default_config_json(env, profile))


__all__ = [
    "DataError",
    "Environment",
    "InputShapeError",
    "ParseError",
    "UsageError",
    "complexity",
    "default_config",
    "discount_for",
    "evaluate",
    "penalty",
    "random_expression",
    "simplify",
]
