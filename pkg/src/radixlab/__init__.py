"""Radix Selection on Markov-source strings."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .source import (  # noqa: F401
    MarkovSource,
    MarkovSpec,
    StringBatch,
    TailedString,
    coincidence,
    compare_strings,
    linear_family,
    memoryless,
    pi,
    sample_strings,
    two_state,
    uniform,
    validate_spec,
)
