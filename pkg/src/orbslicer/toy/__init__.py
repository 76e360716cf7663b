"""A miniature imperative language with configurable stack memory models."""

from .interp import (
    DEFAULT_STEP_BUDGET,
    RESIDUE,
    ZERO,
    MemoryModel,
    ToyRuntimeError,
    ToyTimeout,
    eval_toy,
)
from .parser import ToyProgram, ToySyntaxError, check_returns, parse_toy

__all__ = [
    "DEFAULT_STEP_BUDGET",
    "RESIDUE",
    "ZERO",
    "MemoryModel",
    "ToyProgram",
    "ToyRuntimeError",
    "ToySyntaxError",
    "ToyTimeout",
    "check_returns",
    "eval_toy",
    "parse_toy",
]
