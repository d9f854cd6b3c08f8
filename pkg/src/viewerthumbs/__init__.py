"""Recover image-viewer thumbnails from evidence trees.

The package locates known viewer artifact files, pulls thumbnails out of
them (SQLite blob parsing, block-size-aware JPEG carving, extension-less
loose files) and writes a deterministic provenance report.
"""

__version__ = "0.1.0"

from .carver import CarveHit, CarveParams, carve_entry, carve_jpegs, count_headers
from .evidence import EvidenceSource, FileEntry, open_evidence
from .pipeline import ExtractionRecord, RunReport, run
from .registry import (
    ArtifactSignature,
    Registry,
    StorageMethod,
    built_in_registry,
    load_registry,
    match_entry,
)
from .sniffer import ImageKind, ValidationReport, sniff, validate_jpeg
from .sqlite_reader import (
    BlobCell,
    Database,
    DbHeader,
    extract_blobs,
    parse_header,
    scan_all_blobs,
    walk_table,
)

__all__ = [
    "ArtifactSignature",
    "BlobCell",
    "CarveHit",
    "CarveParams",
    "Database",
    "DbHeader",
    "EvidenceSource",
    "ExtractionRecord",
    "FileEntry",
    "ImageKind",
    "Registry",
    "RunReport",
    "StorageMethod",
    "ValidationReport",
    "built_in_registry",
    "carve_entry",
    "carve_jpegs",
    "count_headers",
    "extract_blobs",
    "load_registry",
    "match_entry",
    "open_evidence",
    "parse_header",
    "run",
    "scan_all_blobs",
    "sniff",
    "validate_jpeg",
    "walk_table",
]
