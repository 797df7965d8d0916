"""Finite-dimensional experiments on products of random operator semigroups.

Submodules
----------
linalg      matrix exponential, l^p vector and operator norms
ensemble    random generators ``L0 + B`` and seeded i.i.d. streams
semigroup   random products, Chernoff approximants, convergence runs
martingale  martingale decomposition of the centred product and bound audits
geometry    smoothness probes for l^p spaces
depolarize  random compositions of depolarizing channels
cli         JSON-configured experiment runner
"""
from .ensemble import (
    Discrete,
    GeneratorEnsemble,
    GeneratorStream,
    RademacherDirections,
    UniformScaled,
    check_membership,
    exact_expected_semigroup,
    gamma,
    mc_expected_semigroup,
    one_point_ensemble,
    two_point_ensemble,
)
from .linalg import expm, operator_norm, vector_norm
from .semigroup import (
    TimeGrid,
    chernoff_bias_experiment,
    chernoff_conditions,
    chernoff_power,
    random_product,
    slln_experiment,
)

__all__ = [
    "Discrete",
    "GeneratorEnsemble",
    "GeneratorStream",
    "RademacherDirections",
    "UniformScaled",
    "check_membership",
    "exact_expected_semigroup",
    "gamma",
    "mc_expected_semigroup",
    "one_point_ensemble",
    "two_point_ensemble",
    "expm",
    "operator_norm",
    "vector_norm",
    "TimeGrid",
    "chernoff_bias_experiment",
    "chernoff_conditions",
    "chernoff_power",
    "random_product",
    "slln_experiment",
]

__version__ = "0.1.0"
