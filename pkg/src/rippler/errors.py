"""Exception types raised by the samplers, model and data ingestion."""


class RipplerError(Exception):
    """Base class for all package errors."""


class InvalidState(RipplerError):
    """A colonisation lattice has zero density under the current parameters."""


class NoPerturbableCell(RipplerError):
    """Every cell of the bounds lattice has zero complement mass."""


class DegenerateProposal(RipplerError):
    """A forward or reverse Rippler proposal has zero total mass."""


class InfeasibleProposal(RipplerError):
    """The set required by a reversible-jump move is empty."""


class TooLarge(RipplerError):
    """Exact enumeration requested for a lattice above the size guard."""


class UndefinedRatio(RipplerError):
    """A household risk ratio was requested where the global pressure is zero."""


class ParseError(RipplerError):
    """A data file could not be parsed."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class ConsistencyError(RipplerError):
    """Input tables disagree with each other."""
