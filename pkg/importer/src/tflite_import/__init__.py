"""tflite_import: convert full-integer .tflite models to .sacnn manifests."""

from .convert import SUPPORTED_OPS, convert
from .errors import ImporterError, SourceFormatError, UnsupportedOpError, VerifyError
from .verify import verify_model

__version__ = "0.1.0"

__all__ = [
    "SUPPORTED_OPS",
    "convert",
    "verify_model",
    "ImporterError",
    "SourceFormatError",
    "UnsupportedOpError",
    "VerifyError",
    "__version__",
]
