"""Typed failure modes shared by all projfilter modules."""


class CapacityError(Exception):
    """Requested object exceeds the configured size/memory budget."""


class StructureError(Exception):
    """Operator structure violates a required block/symmetry property."""


class ConvergenceError(Exception):
    """Iterative scheme failed to converge; best estimates attached."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ExtinctionError(Exception):
    """Post-selection probability vanished; the branch cannot be kept."""


class DependencyError(Exception):
    """A required precomputed input (e.g. an eigenbasis) is missing."""


class ParseError(ValueError):
    """An input file could not be parsed; message carries context."""
