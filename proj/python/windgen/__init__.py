"""Conditional vertical wind profile generators (GMM, DDPM, flow matching)."""

import json as _json

from ._core import (
    ConfigError,
    Dataset,
    EmptyFileError,
    Error,
    Generator,
    InputError,
    NoMassError,
    NumericalError,
    RowError,
    SchemaError,
    em_fit,
    gmm_parameter_count,
    kl_by_altitude,
    kl_divergence,
    load_dataset,
    load_generator,
    run_cli,
    select_k,
    symmetrized_kl,
    version,
    write_dataset,
)
from ._core import synth as _synth
from ._core import train as _train

__version__ = version()


def synth(config, seed=0):
    """Synthetic dataset from a ``data.synth`` config mapping."""
    return _synth(_json.dumps(config), seed)


def train(dataset, model, seed=0, threads=1):
    """Trains a generator from a ``model`` config mapping."""
    return _train(dataset, _json.dumps(model), seed, threads)


__all__ = [
    "ConfigError", "Dataset", "EmptyFileError", "Error", "Generator", "InputError",
    "NoMassError", "NumericalError", "RowError", "SchemaError", "em_fit",
    "gmm_parameter_count", "kl_by_altitude", "kl_divergence", "load_dataset",
    "load_generator", "run_cli", "select_k", "symmetrized_kl", "synth", "train",
    "version", "write_dataset",
]
