"""Read-only access to an evidence corpus.

Evidence is either a directory tree (a mounted or extracted image) or a
single file. Enumeration is deterministic: regular files only, symlinks
never followed, ordered by the bytewise value of the '/'-separated
relative path.
"""

from __future__ import annotations

import enum
import os
import stat
from dataclasses import dataclass
from pathlib import Path

from .diagnostics import Diagnostic


class SourceKind(str, enum.Enum):
    TREE = "tree"
    SINGLE_FILE = "single_file"


@dataclass(frozen=True, slots=True)
class FileEntry:
    relative_path: str
    size: int


@dataclass(frozen=True)
class EvidenceSource:
    root: Path
    kind: SourceKind

    def enumerate(self, diagnostics: list[Diagnostic] | None = None) -> list[FileEntry]:
        """Return every regular file under the source, sorted bytewise.

        Subdirectories that cannot be listed are skipped; each one adds an
        ``unreadable_directory`` entry to *diagnostics* when a list is given.
        """
        if self.kind is SourceKind.SINGLE_FILE:
            st = os.stat(self.root)
            return [FileEntry(self.root.name, st.st_size)]

        entries: list[FileEntry] = []
        pending = [""]
        while pending:
            rel_dir = pending.pop()
            abs_dir = os.path.join(self.root, rel_dir) if rel_dir else str(self.root)
            try:
                with os.scandir(abs_dir) as it:
                    children = list(it)
            except OSError as exc:
                if diagnostics is not None:
                    diagnostics.append(
                        Diagnostic("unreadable_directory", exc.strerror or str(exc), rel_dir)
                    )
                continue
            for child in children:
                rel = f"{rel_dir}/{child.name}" if rel_dir else child.name
                try:
                    st = child.stat(follow_symlinks=False)
                except OSError as exc:
                    if diagnostics is not None:
                        diagnostics.append(
                            Diagnostic("unreadable_entry", exc.strerror or str(exc), rel)
                        )
                    continue
                if stat.S_ISDIR(st.st_mode):
                    pending.append(rel)
                elif stat.S_ISREG(st.st_mode):
                    entries.append(FileEntry(rel, st.st_size))
        entries.sort(key=lambda e: os.fsencode(e.relative_path))
        return entries

    def path_of(self, entry: FileEntry) -> Path:
        if self.kind is SourceKind.SINGLE_FILE:
            return self.root
        parts = entry.relative_path.split("/")
        if any(p in ("", ".", "..") for p in parts):
            raise ValueError(f"entry escapes evidence root: {entry.relative_path!r}")
        return self.root.joinpath(*parts)

    def read_bytes(self, entry: FileEntry, offset: int = 0, length: int | None = None) -> bytes:
        """Read up to *length* bytes of *entry* starting at *offset*.

        Returns ``min(length, size - offset)`` bytes; an offset at or past
        the end yields ``b""``. ``length=None`` reads to the end.
        """
        if offset < 0 or (length is not None and length < 0):
            raise ValueError("offset and length must be non-negative")
        with open(self.path_of(entry), "rb") as fh:
            fh.seek(offset)
            return fh.read() if length is None else fh.read(length)


def open_evidence(path: str | os.PathLike) -> EvidenceSource:
    """Open *path* as evidence: a directory becomes a tree source,
    anything else a single-file source.

    Raises FileNotFoundError for a missing path and PermissionError when the
    path cannot be read.
    """
    root = Path(path)
    if not root.exists():
        raise FileNotFoundError(f"evidence path not found: {root}")
    root = root.resolve()
    if root.is_dir():
        if not os.access(root, os.R_OK | os.X_OK):
            raise PermissionError(f"evidence directory not readable: {root}")
        return EvidenceSource(root, SourceKind.TREE)
    if not os.access(root, os.R_OK):
        raise PermissionError(f"evidence file not readable: {root}")
    return EvidenceSource(root, SourceKind.SINGLE_FILE)
