"""Masked-LM embedding extraction into the .cseb interchange format."""

from .cseb import escape_token, write_embedding_rows, write_texts
from .extract import (
    ExtractorConfig,
    InstanceStats,
    MaskTruncated,
    ModelLoadFailure,
    UntiedHeadUnsupported,
    extract_instances,
    extract_vocab,
    load_bundle,
    run,
)

__all__ = [
    "ExtractorConfig",
    "InstanceStats",
    "MaskTruncated",
    "ModelLoadFailure",
    "UntiedHeadUnsupported",
    "escape_token",
    "extract_instances",
    "extract_vocab",
    "load_bundle",
    "run",
    "write_embedding_rows",
    "write_texts",
]
