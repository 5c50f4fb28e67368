"""Bucket-based query-set sparsifiers for stochastic knapsack and GAP."""

from .instance import (
    Assignment,
    GapInstance,
    IndexRangeError,
    InstanceError,
    assignment_value,
    knapsack_load,
    load_instance,
    restrict,
    save_instance,
    validate_assignment,
)

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "GapInstance",
    "IndexRangeError",
    "InstanceError",
    "assignment_value",
    "knapsack_load",
    "load_instance",
    "restrict",
    "save_instance",
    "validate_assignment",
]
