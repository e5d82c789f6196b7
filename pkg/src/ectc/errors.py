"""Exception hierarchy shared by every ectc module."""


class ECTCError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(ECTCError, ValueError):
    pass


class InfeasibleError(ECTCError):
    """The ordering cannot be emitted in the available frames."""


class InfeasibleSupervisionError(InfeasibleError):
    """Frame anchors (or hard similarity constraints) rule out every path."""

    def __init__(self, message, record_id=None):
        if record_id is not None:
            message = f"record {record_id!r}: {message}"
        super().__init__(message)
        self.record_id = record_id


class NoConsistentPathError(ECTCError):
    pass


class SizeLimitError(ECTCError):
    pass


class NumericError(ECTCError, FloatingPointError):
    pass


class FormatError(ECTCError, ValueError):
    """Malformed corpus, vocabulary or checkpoint file."""


class ShapeError(FormatError):
    pass


class VocabMismatchError(ECTCError):
    pass
