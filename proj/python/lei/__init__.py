"""Longitudinal stacking of per-modality base predictors."""

import json

from . import _core
from ._core import (
    Cohort,
    IoError,
    NumericError,
    ValidationError,
    class_weights,
    macro_f_measure,
    set_threads,
    threads,
)

__all__ = [
    "Cohort",
    "IoError",
    "NumericError",
    "ValidationError",
    "class_weights",
    "compare",
    "export_cohort",
    "generate",
    "generator_preset",
    "interpret",
    "load_cohort",
    "loss",
    "macro_f_measure",
    "resolve_config",
    "run",
    "set_threads",
    "threads",
]


def _dump(config):
    return config if isinstance(config, str) else json.dumps(config)


def generator_preset(name="default"):
    return json.loads(_core.generator_preset(name))


def generate(generator=None, **overrides):
    """Synthetic cohort from a generator dict (or a preset name) plus overrides."""
    if generator is None:
        generator = {}
    elif isinstance(generator, str):
        generator = {"preset": generator}
    return _core.generate(_dump({**generator, **overrides}))


def load_cohort(file, schema):
    return _core.load_cohort(str(file), str(schema))


def export_cohort(cohort, file, schema):
    _core.export_cohort(cohort, str(file), str(schema))


def resolve_config(config):
    return json.loads(_core.resolve_config(_dump(config)))


def run(config, configuration=None):
    """Nested cross-validation of one configuration (default: the config's first)."""
    names = [str(configuration)] if configuration is not None else []
    if not names:
        names = [resolve_config(config)["experiment"]["configurations"][0]]
    return _core.run_methods(_dump(config), names)


def compare(config, configurations=None):
    """Paired comparison over shared folds."""
    return _core.run_methods(_dump(config), [str(c) for c in configurations or []])


def interpret(config):
    return _core.interpret(_dump(config))


def loss(kind, probabilities, labels, class_weights=None):
    return _core.loss(kind, list(probabilities), labels, class_weights)
