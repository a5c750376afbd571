"""
Exceptions raised by the solver stack.
"""


class LDGError(Exception):
    """Base class for solver failures."""


class NonFiniteEnergyError(LDGError):
    """The energy, a norm or the residual evaluated to inf or nan."""


class LinearSolveError(LDGError):
    """The preconditioner system could not be solved to tolerance."""


class SolverError(LDGError):
    """The descent loop was aborted."""
