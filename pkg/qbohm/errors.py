"""
Exception hierarchy for the numerical core.
Every error carries a human-readable detail plus structured context, and the
process exit code the command line maps it to.
"""
from typing import Any


class QBohmError(Exception):
    """Base error raised by qbohm operations."""
    exit_code = 3

    def __init__(self, detail: str, **context: Any):
        self.detail = detail
        self.context = context
        super().__init__(detail)


class InvalidInputError(QBohmError):
    """A precondition of an operation is violated by its inputs."""
    exit_code = 2


class NumericalError(QBohmError):
    """The computation itself failed or produced an unusable result."""
    exit_code = 3


class NodeCrossingError(NumericalError):
    def __init__(self, node: tuple, **context: Any):
        self.node = node
        super().__init__("loop through node", node=node, **context)


class NodeCaptureError(NumericalError):
    def __init__(self, vertex: int, time_index: int, **context: Any):
        self.vertex = vertex
        self.time_index = time_index
        super().__init__(
            f"vertex {vertex} captured by node at time index {time_index}",
            vertex=vertex,
            time_index=time_index,
            **context,
        )


class ProposalTooLooseError(NumericalError):
    def __init__(self, acceptance: float):
        self.acceptance = acceptance
        super().__init__(f"proposal too loose (acceptance rate {acceptance:.3g})", acceptance=acceptance)


class RankDeficientFitError(NumericalError):
    pass
