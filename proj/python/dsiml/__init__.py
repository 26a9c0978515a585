"""Discrete scale-invariant metric learning for hashing-based recommendation."""

from ._dsiml import *  # noqa: F401,F403
from ._dsiml import __doc__  # noqa: F401

__version__ = "0.1.0"
