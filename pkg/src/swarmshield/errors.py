"""Exception hierarchy shared across the package."""


class SwarmShieldError(Exception):
    """Base class for all package errors."""


class ConfigError(SwarmShieldError):
    """Invalid or unparsable scenario configuration."""


class SimulationFault(SwarmShieldError):
    """Non-finite state detected during a run."""

    def __init__(self, slot: int, message: str):
        super().__init__(f"slot {slot}: {message}")
        self.slot = slot


class ContractViolation(SwarmShieldError):
    """An operation was called outside its precondition."""


class IsolatedNode(SwarmShieldError):
    """A UAV has no line-of-sight neighbor to range against."""


class InsufficientAnchors(SwarmShieldError):
    """Fewer than four qualifying anchors for reconstruction."""


class DegenerateGeometry(SwarmShieldError):
    """Anchor geometry is (near) coplanar and cannot fix a 3-D position."""


class SingularSystem(SwarmShieldError):
    """Zero pivot met during tridiagonal elimination."""


class NumericalFault(SwarmShieldError):
    """A solver left its stated numerical tolerance."""


class CompilationRejected(SwarmShieldError):
    """Too many malformed lines in a raw network snapshot."""

    def __init__(self, report):
        super().__init__(f"{len(report)} malformed line(s)")
        self.report = report


class RuleError(SwarmShieldError):
    """A Horn rule failed to parse or is not range-restricted."""


class PlotError(SwarmShieldError):
    """Input CSVs cannot be drawn on a common axis."""
