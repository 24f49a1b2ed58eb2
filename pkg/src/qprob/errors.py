"""Exception taxonomy for qprob.

Every error raised on purpose by the library derives from :class:`QprobError`,
so callers (and the CLI) can distinguish malformed input from genuine bugs.
"""

from __future__ import annotations


class QprobError(Exception):
    """Base class for all qprob errors."""


class ParseError(QprobError):
    """Input files or command configuration could not be parsed."""


class InvalidMatrix(QprobError):
    """Input is not a well-formed matrix of the expected kind."""


class DimMismatch(QprobError):
    """Operands live on spaces of different dimension."""


class NotPositive(QprobError):
    """A matrix required to be positive semidefinite is not."""


class NotAnEffect(QprobError):
    """A matrix required to be a quantum effect (0 <= m <= 1) is not."""


class ZeroMeasure(QprobError):
    """A candidate measure assigns zero to the whole space."""


class SpaceMismatch(QprobError):
    """Operands are defined over different sample spaces."""


class NotProbabilityMeasure(QprobError):
    """An operation requiring total mass one received an unnormalized measure."""


class NotAbsolutelyContinuous(QprobError):
    """The second measure charges an atom the first one does not."""


class MeanDidNotConverge(QprobError):
    """The regularized geometric-mean schedule failed to settle.

    Carries the last two iterates so callers can inspect how far apart the
    tail of the schedule still is.
    """

    def __init__(self, message: str, last_iterates=None):
        super().__init__(message)
        self.last_iterates = last_iterates


class NotConverged(QprobError):
    """A sequence failed the ultraweak Cauchy test.

    Carries the worst per-probe residual and where it occurred.
    """

    def __init__(self, message: str, residual: float = float("nan"),
                 probe_index: int = -1, point: str = ""):
        super().__init__(message)
        self.residual = residual
        self.probe_index = probe_index
        self.point = point


class PartialSumsDiverge(QprobError):
    """Partial sums of a series have no ultraweak limit within tolerance."""


class NotStrictlyPositiveEffect(QprobError):
    """The effect series identity needs eigenvalues bounded away from zero."""


class ZeroExpectation(QprobError):
    """Conditioning in strict mode requires a nonzero expectation."""


class NotNested(QprobError):
    """The tower check needs one partition to refine the other."""
