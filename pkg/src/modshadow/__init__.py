"""Shadowing, closing and periodic-orbit search for the geodesic flow on the modular surface."""

from .bracket import bowen_bracket, local_product_constants
from .frames import FrameElement, chart_dist
from .lattice import DeckElement, quotient_dist, reduce_frame
from .oracle import canonical_word, enumerate_classes
from .shadowing import (
    SearchBudget,
    find_periodic_orbit,
    select_parameters,
    shadow_iteration,
    shadow_limit,
)

__all__ = [
    "DeckElement",
    "FrameElement",
    "SearchBudget",
    "bowen_bracket",
    "canonical_word",
    "chart_dist",
    "enumerate_classes",
    "find_periodic_orbit",
    "local_product_constants",
    "quotient_dist",
    "reduce_frame",
    "select_parameters",
    "shadow_iteration",
    "shadow_limit",
]
