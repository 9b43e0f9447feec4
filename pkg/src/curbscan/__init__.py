"""curbscan: decode street-environment indicators from imagery with
vision LLMs — sample road locations, prompt, parse, vote, score."""

__version__ = "0.1.0"

from .indicators import CANONICAL_ORDER, QUESTION_ORDER, Indicator, IndicatorVector

__all__ = [
    "__version__",
    "CANONICAL_ORDER",
    "QUESTION_ORDER",
    "Indicator",
    "IndicatorVector",
]
