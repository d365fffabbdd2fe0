"""Exception hierarchy. Every error carries a short one-line message."""


class ConsensusFlowError(Exception):
    """Base class for all errors raised by this package."""


class NotSymmetric(ConsensusFlowError):
    pass


class NoConvergence(ConsensusFlowError):
    pass


class Singular(ConsensusFlowError):
    pass


class NonFiniteInput(ConsensusFlowError):
    pass


class ShapeError(ConsensusFlowError):
    pass


class Disconnected(ConsensusFlowError):
    pass


class BadParam(ConsensusFlowError):
    pass


class GraphFormatError(ConsensusFlowError):
    pass


class ZeroRow(ConsensusFlowError):
    pass


class RankDeficientBlock(ConsensusFlowError):
    pass


class RankDeficient(ConsensusFlowError):
    pass


class MismatchedTopology(ConsensusFlowError):
    pass


class BadGain(ConsensusFlowError):
    pass


class NonFinite(ConsensusFlowError):
    """State left the finite range during integration (step size too large)."""


class InsufficientData(ConsensusFlowError):
    pass


class NotConverged(ConsensusFlowError):
    """Raised only on request; :func:`harness.run` returns a trace instead."""
