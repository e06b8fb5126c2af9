"""Error types for the tflite importer."""


class ImporterError(Exception):
    """Base class for conversion failures."""


class UnsupportedOpError(ImporterError):
    """The source graph uses an operator the target format cannot express."""


class SourceFormatError(ImporterError):
    """The .tflite file is malformed or uses unexpected conventions."""


class VerifyError(ImporterError):
    """Cross-checking infrastructure failed (engine missing, bad output)."""
