"""Exact computations in the L1 full group of a suspension flow over an irrational rotation."""
from .exactnum import ALPHA, ONE, ZERO, Interval, IntervalSet, Q, QuadScalar
from .flow import FlowParams, FlowPoint, RectSet, Tessellation, build_cross_section, mu
from .fullgroup import PartialMap, StepElement, cocycle_distance
from .commensurator import TailedTranslation, comm_compose, index_value

__all__ = [
    "ALPHA", "ONE", "ZERO", "Interval", "IntervalSet", "Q", "QuadScalar",
    "FlowParams", "FlowPoint", "RectSet", "Tessellation", "build_cross_section", "mu",
    "PartialMap", "StepElement", "cocycle_distance",
    "TailedTranslation", "comm_compose", "index_value",
]
