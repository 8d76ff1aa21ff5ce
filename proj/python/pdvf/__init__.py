"""Policy-dynamics value functions: python bindings for the C++ core."""

from _pdvf import *  # noqa: F401,F403
from _pdvf import __doc__  # noqa: F401
