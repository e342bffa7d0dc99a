"""
Exception hierarchy for the FPGA Debug Overlay Toolkit.

Every error the toolkit raises on purpose derives from OverlayToolError so the
command-line front end can map it onto an exit status. Algorithmic outcomes
that callers are expected to inspect (a routing that did not converge, a
trigger mapping that is infeasible, signals left out of the trace overlay)
are returned as values and never raised.
"""

from typing import Iterable, List, Optional


class OverlayToolError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(OverlayToolError):
    """Raised when user-supplied data (architecture, flags, artifacts) is invalid."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class UnknownSignalError(ValidationError):
    """Raised when a request names signals that the user circuit does not have."""

    def __init__(self, signals: Iterable[str]):
        self.signals: List[str] = sorted(signals)
        super().__init__(f"unknown signal(s): {', '.join(self.signals)}")


class NetlistSyntaxError(ValidationError):
    """A BLIF syntax error with its position in the source text."""

    def __init__(self, message: str, line: int, column: int = 1):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class NetlistSemanticError(ValidationError):
    """A well-formed netlist that breaks a structural rule (drivers, loops)."""

    def __init__(self, message: str, net: Optional[str] = None):
        self.net = net
        super().__init__(f"{message} (net '{net}')" if net else message)


class CapacityError(ValidationError):
    """Raised when a circuit does not fit the resources offered to it."""


class StaleArtifactError(ValidationError):
    """Raised when an artifact was derived from inputs that have since changed."""

    def __init__(self, artifact: str, reason: str):
        self.artifact = artifact
        super().__init__(f"{artifact} is stale: {reason}")


class ConfigurationError(OverlayToolError):
    """Raised when the requested flow cannot run with the configured resources."""


class UnroutableError(OverlayToolError):
    """Raised when a routing failure has to abort a flow step.

    Attributes:
        congested_nodes: RRG node ids still overused when the router gave up
    """

    def __init__(self, message: str, congested_nodes: Optional[List[int]] = None):
        self.congested_nodes = list(congested_nodes or [])
        super().__init__(message)


class ForestCorruptionError(OverlayToolError):
    """Raised when a trace-overlay forest cannot be walked from leaf to root."""
