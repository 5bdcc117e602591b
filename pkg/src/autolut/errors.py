"""Exception types shared across the engine."""


class AutoLutError(Exception):
    """Base class for all engine errors."""


class InvalidInputError(AutoLutError, ValueError):
    """An argument violates an operation's preconditions."""


class InvalidConfigError(AutoLutError, ValueError):
    """A pipeline or group configuration violates its invariants."""


class ContractViolationError(AutoLutError, ValueError):
    """A value that callers promised to normalize/clamp was not."""


class FormatError(AutoLutError, ValueError):
    """A container file is malformed.

    ``offset`` is the byte position at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class InvalidCheckpointError(AutoLutError, ValueError):
    """A checkpoint manifest or blob is inconsistent."""


class InvalidDatasetError(AutoLutError, ValueError):
    """An evaluation dataset is malformed (e.g. LR/HR names mismatch)."""
