"""Python access to the fsdnet C++ core."""

import json

from . import _core
from ._core import (
    ConfigError,
    IngestionError,
    LookupError,
    MetricError,
    NumericalError,
    ShapeError,
    auc,
    discretize_numeric,
    logloss,
    synth,
)

__all__ = [
    "ConfigError", "IngestionError", "LookupError", "MetricError", "NumericalError",
    "ShapeError", "auc", "default_spec", "discretize_numeric", "evaluate", "gradcheck",
    "logloss", "prepare", "spec_digest", "synth", "t_test", "train",
]


def t_test(a, b):
    """Welch two-sample t-test; returns t, df and the two-tailed p_value."""
    return json.loads(_core.t_test_json(list(a), list(b)))


def default_spec():
    return json.loads(_core.default_spec_json())


def spec_digest(spec):
    return _core.spec_digest(json.dumps(spec))


def prepare(input, schema, out_dir, *, min_count=2, split="8:1:1", seed=2024, vocab_from_all=False):
    return json.loads(_core.prepare_json(str(input), str(schema), str(out_dir), min_count, split,
                                         seed, vocab_from_all))


def train(spec):
    """Runs one model per seed in spec["seeds"]; returns the aggregate record."""
    return json.loads(_core.train_json(json.dumps(spec)))


def evaluate(checkpoint, data_dir, split="test"):
    return json.loads(_core.evaluate_json(str(checkpoint), str(data_dir), split))


def gradcheck(seed=7, mu=0.5, tau=1.5, gamma=0.01, combination="SC"):
    return json.loads(_core.gradcheck_json(seed, mu, tau, gamma, combination))
