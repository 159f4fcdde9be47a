"""Stitching: guided symbolic simulation of dispatcher paths between functional blocks."""

from .engine import (
    Solution,
    StitchStats,
    Stitcher,
    concretize_address,
    concretize_before_functional,
    concretize_on_overwrite,
    simulate,
)
from .state import BlockRecord, MemStore, SimContext, SimState, Witness

__all__ = [
    "BlockRecord",
    "MemStore",
    "SimContext",
    "SimState",
    "Solution",
    "StitchStats",
    "Stitcher",
    "Witness",
    "concretize_address",
    "concretize_before_functional",
    "concretize_on_overwrite",
    "simulate",
]
