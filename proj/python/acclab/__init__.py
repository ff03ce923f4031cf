"""Atomistic-to-continuum coupling on the triangular lattice."""

from ._acclab import *  # noqa: F401,F403
from ._acclab import __doc__  # noqa: F401
