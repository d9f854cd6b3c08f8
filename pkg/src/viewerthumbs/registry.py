"""Known image-viewer artifacts and how to pull thumbnails out of them.

A registry maps each viewer to the paths where it keeps thumbnail data
and the storage method in use. Lookups are by path glob over an
evidence entry's relative path, case-insensitively.

The config format is YAML::

    viewers:
      - viewer: XnView
        globs: ["**/XnView/XnView.db"]
        method: sqlite_blob
        table: Datas
        column: auto
        notes: free text

``table`` and ``column`` are only meaningful for ``sqlite_blob``, where
``table`` is required. ``table: null`` marks a metadata-only database:
the viewer is recorded as present but nothing is extracted from it.
User entries replace every built-in signature with the same ``viewer``.
"""

from __future__ import annotations

import enum
import functools
import re
from dataclasses import dataclass

import yaml

from .evidence import FileEntry

FIELDS = ("viewer", "globs", "method", "table", "column", "notes")


class StorageMethod(str, enum.Enum):
    SQLITE_BLOB = "sqlite_blob"
    RAW_CARVEABLE_DB = "raw_carveable_db"
    LOOSE_THUMBNAIL_FILES = "loose_thumbnail_files"
    MEMORY_ONLY = "memory_only"


class RegistryError(ValueError):
    pass


class ParseError(RegistryError):
    pass


class SchemaError(RegistryError):
    pass


@dataclass(frozen=True)
class SqliteTarget:
    table: str | None
    column: str = "auto"


@dataclass(frozen=True)
class ArtifactSignature:
    viewer_name: str
    path_globs: tuple[str, ...]
    method: StorageMethod
    sqlite_target: SqliteTarget | None = None
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "path_globs", tuple(self.path_globs))
        object.__setattr__(self, "method", StorageMethod(self.method))
        if self.method is StorageMethod.SQLITE_BLOB and self.sqlite_target is None:
            raise SchemaError(f"{self.viewer_name}: sqlite_blob requires a table")

    def matches(self, relative_path: str) -> bool:
        return any(glob_regex(g).fullmatch(relative_path) for g in self.path_globs)

    def to_dict(self) -> dict:
        doc = {"viewer": self.viewer_name, "globs": list(self.path_globs), "method": self.method.value}
        if self.sqlite_target is not None:
            doc["table"] = self.sqlite_target.table
            doc["column"] = self.sqlite_target.column
        if self.notes:
            doc["notes"] = self.notes
        return doc


@dataclass(frozen=True)
class Registry:
    signatures: tuple[ArtifactSignature, ...]

    def viewers(self) -> list[str]:
        return sorted({s.viewer_name for s in self.signatures})

    def by_viewer(self, name: str) -> list[ArtifactSignature]:
        return [s for s in self.signatures if s.viewer_name == name]

    def merged(self, overrides: list[ArtifactSignature]) -> Registry:
        replaced = {s.viewer_name for s in overrides}
        kept = [s for s in self.signatures if s.viewer_name not in replaced]
        return Registry(tuple(kept + list(overrides)))


@functools.lru_cache(maxsize=None)
def glob_regex(pattern: str) -> re.Pattern:
    """Translate a path glob to a case-insensitive regex.

    ``**`` spans directories (``**/`` may match nothing), ``*`` and ``?``
    stay within one path component, ``[...]`` is a character class.
    """
    out = []
    i, n = 0, len(pattern)
    while i < n:
        c = pattern[i]
        if pattern.startswith("**", i):
            at_start = i == 0 or pattern[i - 1] == "/"
            if at_start and pattern.startswith("**/", i):
                out.append("(?:.*/)?")
                i += 3
                continue
            out.append(".*")
            i += 2
        elif c == "*":
            out.append("[^/]*")
            i += 1
        elif c == "?":
            out.append("[^/]")
            i += 1
        elif c == "[":
            close = pattern.find("]", i + 2)
            if close == -1:
                out.append(re.escape(c))
                i += 1
            else:
                body = pattern[i + 1:close]
                if body.startswith("!"):
                    body = "^" + body[1:]
                out.append("[" + body.replace("\\", "\\\\") + "]")
                i = close + 1
        else:
            out.append(re.escape(c))
            i += 1
    return re.compile("".join(out), re.IGNORECASE | re.DOTALL)


def match_entry(registry: Registry, entry: FileEntry | str) -> list[ArtifactSignature]:
    """Signatures with at least one glob matching *entry*, ordered by viewer name."""
    path = entry if isinstance(entry, str) else entry.relative_path
    hits = [s for s in registry.signatures if s.matches(path)]
    return sorted(hits, key=lambda s: (s.viewer_name, s.method.value))


_BUILT_IN = (
    ArtifactSignature(
        "XnView",
        ("**/XnView/XnView.db",),
        StorageMethod.SQLITE_BLOB,
        SqliteTarget("Datas", "auto"),
        "Thumbnails in the Datas table; payloads appear obfuscated and are flagged, not decoded.",
    ),
    ArtifactSignature(
        "FastStone",
        ("**/FastStone/FSIV/FSViewer.db",),
        StorageMethod.RAW_CARVEABLE_DB,
        None,
        "Custom (TinyDB) database holding raw JPEG thumbnails; carved at block size 1.",
    ),
    ArtifactSignature(
        "Adobe Lightroom",
        ("**/Lightroom/**/*Previews.lrdata/**/root?pixel*.db",),
        StorageMethod.SQLITE_BLOB,
        SqliteTarget("RootPixels", "jpegData"),
        "Filename reported as 'root pixel.db'; the glob accepts a space, underscore or hyphen "
        "and an optional trailing 's'.",
    ),
    ArtifactSignature(
        "Zoner",
        ("**/Zoner/ZPS*/**/data.zoner-index-cache",),
        StorageMethod.SQLITE_BLOB,
        SqliteTarget(None),
        "Metadata-only SQLite database; thumbnails live as loose files next to it.",
    ),
    ArtifactSignature(
        "Zoner",
        ("**/Zoner/ZPS*/ZPSCache.dat/**",),
        StorageMethod.LOOSE_THUMBNAIL_FILES,
        None,
        "Thumbnail files stored without a filename extension.",
    ),
    ArtifactSignature(
        "ACDSee",
        ("**/ACDSystems/Catalogs/**/thumb?.fpt",),
        StorageMethod.RAW_CARVEABLE_DB,
        None,
        "thumb1.fpt to thumb3.fpt hold the same thumbnails at different sizes; carved at block size 1.",
    ),
    ArtifactSignature(
        "IrfanView",
        (),
        StorageMethod.MEMORY_ONLY,
        None,
        "Thumbnails are held in memory only. No marker paths shipped; supply globs to record presence.",
    ),
    ArtifactSignature(
        "Google Photos",
        (),
        StorageMethod.MEMORY_ONLY,
        None,
        "Browser-only service with no local thumbnail store. No marker paths shipped; supply globs.",
    ),
)


def built_in_registry() -> Registry:
    return Registry(_BUILT_IN)


def dump_registry(registry: Registry) -> str:
    doc = {"viewers": [s.to_dict() for s in registry.signatures]}
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


def load_registry(config_bytes: bytes | str, base: Registry | None = None) -> Registry:
    """Parse a registry document and merge it over *base* (built-ins by default).

    Raises ParseError for malformed YAML and SchemaError for documents that
    violate the schema; messages carry the line of the offending entry.
    """
    base = built_in_registry() if base is None else base
    return base.merged(parse_signatures(config_bytes))


def parse_signatures(config_bytes: bytes | str) -> list[ArtifactSignature]:
    text = config_bytes.decode("utf-8") if isinstance(config_bytes, bytes) else config_bytes
    try:
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            doc = loader.construct_document(node) if node is not None else None
        finally:
            loader.dispose()
    except (yaml.YAMLError, UnicodeDecodeError) as exc:
        raise ParseError(str(exc)) from exc

    if doc is None:
        return []
    if not isinstance(doc, dict) or set(doc) - {"viewers"}:
        raise SchemaError("line 1: top level must be a mapping with a single 'viewers' key")
    items = doc.get("viewers") or []
    if not isinstance(items, list):
        raise SchemaError(f"line {_line(node, 'viewers')}: 'viewers' must be a list")
    item_nodes = _value_node(node, "viewers").value if items else []

    signatures = []
    seen: set[tuple[str, str]] = set()
    for item, item_node in zip(items, item_nodes):
        line = item_node.start_mark.line + 1
        sig = _signature_from(item, line)
        key = (sig.viewer_name, sig.method.value)
        if key in seen:
            raise SchemaError(f"line {line}: duplicate viewer {sig.viewer_name!r} with method {key[1]}")
        seen.add(key)
        signatures.append(sig)
    return signatures


def _signature_from(item, line: int) -> ArtifactSignature:
    if not isinstance(item, dict):
        raise SchemaError(f"line {line}: each viewer entry must be a mapping")
    unknown = set(item) - set(FIELDS)
    if unknown:
        raise SchemaError(f"line {line}: unknown field(s) {sorted(unknown)}")
    name = item.get("viewer")
    if not isinstance(name, str) or not name:
        raise SchemaError(f"line {line}: field 'viewer' must be a non-empty string")
    globs = item.get("globs", [])
    if not isinstance(globs, list) or not all(isinstance(g, str) for g in globs):
        raise SchemaError(f"line {line}: field 'globs' must be a list of strings")
    try:
        method = StorageMethod(item.get("method"))
    except ValueError:
        choices = ", ".join(m.value for m in StorageMethod)
        raise SchemaError(f"line {line}: field 'method' must be one of {choices}") from None

    target = None
    if method is StorageMethod.SQLITE_BLOB:
        if "table" not in item:
            raise SchemaError(f"line {line}: method sqlite_blob requires field 'table'")
        table = item["table"]
        column = item.get("column", "auto")
        if table is not None and not isinstance(table, str):
            raise SchemaError(f"line {line}: field 'table' must be a string or null")
        if not isinstance(column, str):
            raise SchemaError(f"line {line}: field 'column' must be a string")
        target = SqliteTarget(table, column)
    notes = item.get("notes", "") or ""
    return ArtifactSignature(name, tuple(globs), method, target, str(notes))


def _value_node(mapping_node, key):
    for k, v in mapping_node.value:
        if k.value == key:
            return v
    return None


def _line(mapping_node, key) -> int:
    v = _value_node(mapping_node, key)
    return v.start_mark.line + 1 if v is not None else 1
