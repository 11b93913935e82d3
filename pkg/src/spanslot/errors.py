"""Exception types shared across the package."""


class SpanSlotError(Exception):
    """Base class for all package-specific errors."""


class ParseError(SpanSlotError):
    """Malformed input file or stream."""


class EmptyCorpusError(ParseError):
    """A corpus stream contained no utterances."""


class BioValidationError(SpanSlotError):
    """A label sequence violates the BIO scheme."""


class CheckpointError(SpanSlotError):
    """A checkpoint is missing, corrupt, or inconsistent with its manifest."""


class ConfigError(SpanSlotError):
    """Components are wired together with incompatible settings."""


class TrainingError(SpanSlotError):
    """Training could not proceed (non-finite loss, untrainable model, ...)."""
