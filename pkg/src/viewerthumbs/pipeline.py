"""End-to-end extraction run over an evidence source.

Phases: open the evidence, match files against the registry, parse
SQLite-format databases for image blobs, carve raw databases. Every
payload is written once under ``images/`` (named by content hash) and
described by an ``ExtractionRecord`` in ``report.json``.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import os
import shutil
import tempfile
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .carver import CarveParams, carve_entry
from .diagnostics import Diagnostic
from .evidence import EvidenceSource, FileEntry
from .registry import ArtifactSignature, Registry, StorageMethod, match_entry
from .sniffer import ImageKind, sniff
from .sqlite_reader import (
    ColumnNotFound,
    Database,
    SqliteError,
    TableNotFound,
)

log = logging.getLogger(__name__)

OBFUSCATED = "obfuscated/unknown"
IMAGES_DIR = "images"
REPORT_NAME = "report.json"
STAGING_DIR = ".staging"


class OutputError(OSError):
    """The output directory cannot be prepared or written."""


@dataclass
class ExtractionRecord:
    viewer: str
    evidence_path: str
    method: str  # sqlite_blob | carve | loose_file | presence_note
    locator: tuple | int | None
    image_kind: str
    sha256: str | None
    byte_length: int
    output_name: str | None
    status: str  # extracted | flagged | note
    note: str | None = None

    def sort_key(self) -> tuple:
        loc = self.locator
        if loc is None:
            lkey = (0,)
        elif isinstance(loc, int):
            lkey = (1, loc)
        else:
            lkey = (2, *loc)
        return (os.fsencode(self.evidence_path), lkey, self.viewer, self.method, self.sha256 or "")

    def to_dict(self) -> dict:
        loc = self.locator
        if isinstance(loc, tuple):
            loc = {"table": loc[0], "rowid": loc[1], "column_index": loc[2]}
        elif isinstance(loc, int):
            loc = {"offset": loc}
        return {
            "viewer": self.viewer,
            "evidence_path": self.evidence_path,
            "method": self.method,
            "locator": loc,
            "image_kind": self.image_kind,
            "sha256": self.sha256,
            "byte_length": self.byte_length,
            "output_name": self.output_name,
            "status": self.status,
            "note": self.note,
        }


@dataclass
class RunReport:
    tool_version: str
    started: str
    finished: str
    params: dict
    counts: dict
    diagnostics: list[Diagnostic] = field(default_factory=list)
    records: list[ExtractionRecord] = field(default_factory=list)

    def to_dict(self, timestamps: bool = True) -> dict:
        doc = {
            "tool_version": self.tool_version,
            "started": self.started,
            "finished": self.finished,
            "params": self.params,
            "counts": self.counts,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
            "records": [r.to_dict() for r in self.records],
        }
        if not timestamps:
            del doc["started"], doc["finished"]
        return doc

    def to_json(self, timestamps: bool = True) -> str:
        return json.dumps(self.to_dict(timestamps), indent=2, sort_keys=False) + "\n"


class _Work:
    """Outputs of one evidence file; payloads go to the staging area by hash."""

    def __init__(self, staging: Path):
        self.staging = staging
        self.records: list[ExtractionRecord] = []
        self.diagnostics: list[Diagnostic] = []

    def add(self, sig: ArtifactSignature, entry: FileEntry, method: str, locator, payload: bytes,
            kind: ImageKind | None = None, note: str | None = None) -> None:
        if not payload:
            self.diagnostics.append(Diagnostic("empty_payload", f"{method} at {locator!r} skipped",
                                               entry.relative_path))
            return
        kind = kind or sniff(payload)
        digest = hashlib.sha256(payload).hexdigest()
        stage_payload(self.staging, digest, payload)
        image_kind = kind.value if kind is not ImageKind.UNKNOWN else OBFUSCATED
        status = "extracted" if kind is not ImageKind.UNKNOWN else "flagged"
        self.records.append(ExtractionRecord(
            sig.viewer_name, entry.relative_path, method, locator, image_kind, digest,
            len(payload), None, status, note,
        ))

    def note(self, sig: ArtifactSignature, entry: FileEntry, text: str) -> None:
        self.records.append(ExtractionRecord(
            sig.viewer_name, entry.relative_path, "presence_note", None, ImageKind.UNKNOWN.value,
            None, 0, None, "note", text,
        ))

    def diag(self, kind: str, message: str, entry: FileEntry) -> None:
        self.diagnostics.append(Diagnostic(kind, message, entry.relative_path))


def stage_payload(staging: Path, digest: str, payload: bytes) -> None:
    target = staging / digest
    if target.exists():
        return
    fd, tmp = tempfile.mkstemp(dir=staging, prefix=".part-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dispatch(signature: ArtifactSignature, entry: FileEntry, source: EvidenceSource,
             params: CarveParams, work: _Work) -> None:
    """Extract whatever *signature* says *entry* holds into *work*."""
    method = signature.method
    if method is StorageMethod.MEMORY_ONLY:
        work.note(signature, entry, "viewer keeps thumbnails in memory only; presence recorded")
    elif method is StorageMethod.RAW_CARVEABLE_DB:
        _carve_into(signature, entry, source, params, work, note=None)
    elif method is StorageMethod.LOOSE_THUMBNAIL_FILES:
        data = source.read_bytes(entry)
        kind = sniff(data)
        if kind is ImageKind.UNKNOWN:
            work.diag("not_an_image", "loose file is not a recognised image", entry)
        else:
            work.add(signature, entry, "loose_file", None, data, kind)
    elif method is StorageMethod.SQLITE_BLOB:
        _sqlite_into(signature, entry, source, params, work)


def _carve_into(signature, entry, source, params, work, note):
    # Thumbnails inside a database are packed without sector alignment.
    in_db = replace(params, block_size=1)
    rejected: list[Diagnostic] = []
    for hit in carve_entry(source, entry, in_db, diagnostics=rejected):
        work.add(signature, entry, "carve", hit.offset, hit.bytes, ImageKind.JPEG,
                 note if not hit.nested else _join(note, "nested thumbnail"))
    if rejected:
        work.diag("carve_rejected", f"{len(rejected)} header candidate(s) failed validation", entry)


def _sqlite_into(signature, entry, source, params, work):
    target = signature.sqlite_target
    data = source.read_bytes(entry)
    try:
        db = Database(data)
    except SqliteError as exc:
        if target.table is None:
            work.diag("not_sqlite", str(exc), entry)
            return
        work.diag("not_sqlite", f"{exc}; falling back to raw carve", entry)
        _carve_into(signature, entry, source, params, work, note="fallback: raw carve")
        return
    if target.table is None:
        work.note(signature, entry, "metadata database; holds no thumbnails")
        _flush_db(db, entry, work)
        return

    cells, note = None, None
    try:
        cells = db.extract_blobs(target.table, target.column)
    except ColumnNotFound as exc:
        work.diag("column_not_found", f"{exc}; using every blob column", entry)
        cells, note = db.extract_blobs(target.table), "fallback: column=auto"
    except TableNotFound:
        work.diag("table_not_found", f"table {target.table!r} missing; scanning all tables", entry)
        cells, note = db.scan_all_blobs(), "fallback: all tables"
    _flush_db(db, entry, work)

    if not cells and note == "fallback: all tables":
        _carve_into(signature, entry, source, params, work, note="fallback: raw carve")
        return
    for cell in cells:
        work.add(signature, entry, "sqlite_blob", (cell.table, cell.rowid, cell.column_index),
                 cell.bytes, note=note)


def _flush_db(db: Database, entry: FileEntry, work: _Work) -> None:
    for d in db.diagnostics:
        work.diagnostics.append(Diagnostic(d.kind, d.message, entry.relative_path))
    db.diagnostics.clear()


def _join(a, b):
    return f"{a}; {b}" if a else b


def prepare_output(output_dir: str | os.PathLike, force: bool = False) -> Path:
    out = Path(output_dir)
    try:
        if out.exists() and any(out.iterdir()):
            if not force:
                raise OutputError(f"output directory {out} is not empty (use force)")
            shutil.rmtree(out / IMAGES_DIR, ignore_errors=True)
            (out / REPORT_NAME).unlink(missing_ok=True)
        (out / IMAGES_DIR / STAGING_DIR).mkdir(parents=True, exist_ok=True)
    except OutputError:
        raise
    except OSError as exc:
        raise OutputError(f"cannot prepare output directory {out}: {exc}") from exc
    return out


def output_name(digest: str, sequence: int, kind: str) -> str:
    ext = ImageKind(kind).extension if kind in ImageKind._value2member_map_ else ".bin"
    return f"{digest[:16]}-{sequence:06d}{ext}"


def write_output(payload: bytes, output_dir: str | os.PathLike, sequence: int,
                 kind: ImageKind | None = None) -> str:
    """Write *payload* as ``<sha256[:16]>-<sequence><ext>`` and return the name."""
    if not payload:
        raise ValueError("refusing to write an empty payload")
    kind = kind or sniff(payload)
    name = output_name(hashlib.sha256(payload).hexdigest(), sequence, kind.value)
    with open(Path(output_dir) / name, "wb") as fh:
        fh.write(payload)
    return name


def finalize_outputs(records: list[ExtractionRecord], images: Path, staging: Path) -> list[Diagnostic]:
    """Name staged payloads in record order; duplicates share the first name."""
    names: dict[str, str] = {}
    diagnostics = []
    for rec in records:
        if rec.status == "note":
            continue
        if rec.sha256 in names:
            rec.output_name = names[rec.sha256]
            diagnostics.append(Diagnostic(
                "duplicate_payload", f"same content as {rec.output_name}", rec.evidence_path))
            continue
        name = output_name(rec.sha256, len(names) + 1, rec.image_kind)
        os.replace(staging / rec.sha256, images / name)
        names[rec.sha256] = name
        rec.output_name = name
    return diagnostics


def run(source: EvidenceSource, registry: Registry, params: CarveParams | None,
        output_dir: str | os.PathLike, *, workers: int = 1, force: bool = False,
        report_path: str | os.PathLike | None = None) -> RunReport:
    """Extract thumbnails from *source* into *output_dir* and write the report.

    Only output-directory failures are fatal (``OutputError``); problems with
    individual evidence files become diagnostics.
    """
    params = params or CarveParams()
    if workers < 1:
        raise ValueError("workers must be >= 1")
    started = _now()
    out = prepare_output(output_dir, force)
    images = out / IMAGES_DIR
    staging = images / STAGING_DIR

    diagnostics: list[Diagnostic] = []
    entries = source.enumerate(diagnostics)
    jobs = [(entry, sigs) for entry in entries if (sigs := match_entry(registry, entry))]
    log.info("%d of %d evidence files matched the registry", len(jobs), len(entries))

    def process(job) -> _Work:
        entry, sigs = job
        work = _Work(staging)
        for sig in sigs:
            try:
                dispatch(sig, entry, source, params, work)
            except OutputError:
                raise
            except OSError as exc:
                if _is_output_failure(exc, staging):
                    raise OutputError(str(exc)) from exc
                work.diag("io_error", str(exc), entry)
            except Exception as exc:  # noqa: BLE001 - a bad evidence file must not stop the run
                work.diag("error", f"{type(exc).__name__}: {exc}", entry)
        return work

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(process, jobs))

    records = [r for w in results for r in w.records]
    for w in results:
        diagnostics.extend(w.diagnostics)
    records.sort(key=ExtractionRecord.sort_key)
    try:
        diagnostics.extend(finalize_outputs(records, images, staging))
        shutil.rmtree(staging, ignore_errors=True)
    except OSError as exc:
        raise OutputError(f"cannot write outputs: {exc}") from exc
    diagnostics.sort(key=Diagnostic.sort_key)

    counts: dict[str, Counter] = defaultdict(Counter)
    for rec in records:
        counts[rec.viewer][rec.status] += 1
    report = RunReport(
        tool_version=__version__,
        started=started,
        finished=_now(),
        params=params.to_dict(),
        counts={v: dict(sorted(c.items())) for v, c in sorted(counts.items())},
        diagnostics=diagnostics,
        records=records,
    )
    write_report(report, report_path or out / REPORT_NAME)
    return report


def write_report(report: RunReport, path: str | os.PathLike) -> None:
    try:
        Path(path).write_text(report.to_json(), encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write report: {exc}") from exc


def _is_output_failure(exc: OSError, staging: Path) -> bool:
    name = getattr(exc, "filename", None)
    return bool(name) and str(name).startswith(str(staging))


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds").replace("+00:00", "Z")
