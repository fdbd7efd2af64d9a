"""Agent-state policies for finite POMDPs: exact evaluation, planning, AIS bounds and learning."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401
