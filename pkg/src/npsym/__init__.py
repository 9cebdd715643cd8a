"""Symmetry lab for noisy 3D point-cloud classification.

Tools for studying which group invariances of a classifier preserve
likelihood-ratio-optimal performance: exact density oracles for synthetic
shape distributions, invariant/equivariant message-passing classifiers on a
small internal autodiff engine, and brute-force fibre/orbit checks on finite
group actions.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataFormatError, InputError, NpsymError, NumericError

__all__ = [
    "ConfigError",
    "DataFormatError",
    "InputError",
    "NpsymError",
    "NumericError",
    "__version__",
]
