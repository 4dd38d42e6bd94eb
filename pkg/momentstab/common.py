# momentstab/common.py

"""
Errors and small shared helpers for momentstab.

Every error raised on purpose by the package is a `MomentStabError`.
Each class carries a human readable `description` that prefixes the
message, and each also derives from the builtin it refines:

    >>> str(ModelError("probabilities sum to 1.1"))
    'Model error: probabilities sum to 1.1'
    >>> isinstance(ModelError("x"), ValueError)
    True
"""

import enum


class MomentStabError(Exception):

    """
    A generic momentstab error.  Subclasses only override the
    description; an instance may override it with `description=`.
    """

    description = 'Stability analysis error'

    def __init__(self, *args, **kw):
        Exception.__init__(self, *args)
        self.msg = ' '.join(str(arg) for arg in args)
        if 'description' in kw:
            self.description = kw['description']

    def __str__(self):
        return self.description + ': ' + self.msg


class ModelError(MomentStabError, ValueError):
    description = 'Model error'

class DimensionError(MomentStabError, ValueError):
    description = 'Dimension error'

class ConvergenceError(MomentStabError, ArithmeticError):
    description = 'Convergence error'

class SolverError(MomentStabError, ValueError):
    description = 'Solver error'

class SimulationError(MomentStabError, ValueError):
    description = 'Simulation error'


class Verdict(str, enum.Enum):
    STABLE = 'stable'
    UNSTABLE = 'unstable'
    BOUNDARY = 'boundary'
    UNKNOWN = 'unknown'


# exit status is a pure function of the verdict
EXIT_CODES = {
    Verdict.STABLE: 0,
    Verdict.UNSTABLE: 1,
    Verdict.BOUNDARY: 2,
    Verdict.UNKNOWN: 2,
}
EXIT_INPUT_ERROR = 3


def check_rate(value, name='lambda'):
    """
    Rates live in the open interval (0, 1).

        >>> check_rate(0.5)
        0.5
        >>> check_rate(1.0)
        Traceback (most recent call last):
        ...
        momentstab.common.SolverError: Solver error: lambda must lie in (0, 1), got 1.0
    """
    value = float(value)
    if not 0.0 < value < 1.0:
        raise SolverError('%s must lie in (0, 1), got %r' % (name, value))
    return value
