"""Exact checking of approximate probabilistic bisimulations on labeled Markov chains."""

from .lmc_core import (
    Centroid,
    EXACT,
    Lmc,
    LmcError,
    Perturbation,
    apply_perturbation,
    direct_sum,
    parse_lmc,
    quotient,
    serialize_lmc,
)
from .relations import Partition, Relation, SearchCapExceeded

__all__ = [
    "Centroid",
    "EXACT",
    "Lmc",
    "LmcError",
    "Partition",
    "Perturbation",
    "Relation",
    "SearchCapExceeded",
    "apply_perturbation",
    "direct_sum",
    "parse_lmc",
    "quotient",
    "serialize_lmc",
]
