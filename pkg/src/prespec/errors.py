"""Exception hierarchy shared by every module.

Each class carries a short machine-readable ``code`` and the process exit
status the command line uses when it escapes to the top level.
"""


class PrespecError(Exception):
    code = "ERROR"
    exit_code = 1


class InvalidParameterError(PrespecError, ValueError):
    code = "INVALID_PARAMETER"
    exit_code = 2


class DimensionMismatchError(PrespecError, ValueError):
    code = "DIMENSION_MISMATCH"
    exit_code = 3


class IngestError(PrespecError, ValueError):
    """Malformed input. ``location`` is a byte offset or a line number."""

    code = "INPUT_FORMAT"
    exit_code = 3

    def __init__(self, message, source=None, location=None):
        self.source = source
        self.location = location
        prefix = ""
        if source is not None:
            prefix = f"{source}:"
            if location is not None:
                prefix += f"{location}:"
            prefix += " "
        elif location is not None:
            prefix = f"at {location}: "
        super().__init__(prefix + message)


class FormatError(IngestError):
    """A serialized artifact has the wrong ``format`` tag or shape."""


class AlphabetMismatchError(PrespecError, ValueError):
    code = "ALPHABET_MISMATCH"
    exit_code = 3


class SequenceTooShortError(PrespecError, ValueError):
    code = "SEQUENCE_TOO_SHORT"
    exit_code = 3


class UnknownStateError(PrespecError, KeyError):
    code = "UNKNOWN_STATE"
    exit_code = 3

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DanglingStateError(PrespecError, RuntimeError):
    code = "DANGLING_STATE"
    exit_code = 3

    def __init__(self, state, message=None):
        self.state = state
        super().__init__(message or f"state {state!r} has no outgoing transitions")


class NonConvergenceError(PrespecError, RuntimeError):
    code = "NON_CONVERGENCE"
    exit_code = 4
