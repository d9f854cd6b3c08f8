"""Direct reader for the SQLite 3 database file format.

Only what thumbnail recovery needs: the 100-byte header, table b-trees
(interior and leaf pages), overflow chains, and record decoding. No SQL
engine is involved, which lets the reader keep going on damaged or
truncated files.

In salvage mode (the default) a damaged cell or page is skipped and
reported in ``Database.diagnostics``; in strict mode the same condition
raises ``CorruptCell``.
"""

from __future__ import annotations

import enum
import re
import struct
from collections.abc import Iterator
from dataclasses import dataclass

from .diagnostics import Diagnostic

MAGIC = b"SQLite format 3\x00"
HEADER_SIZE = 100

LEAF_TABLE = 0x0D
INTERIOR_TABLE = 0x05
LEAF_INDEX = 0x0A
INTERIOR_INDEX = 0x02

AUTO = "auto"
MAX_DEPTH = 64


class SqliteError(Exception):
    pass


class BadMagic(SqliteError):
    pass


class UnsupportedPageSize(SqliteError):
    pass


class Truncated(SqliteError):
    pass


class TableNotFound(SqliteError):
    pass


class ColumnNotFound(SqliteError):
    pass


class CorruptCell(SqliteError):
    pass


class TextEncoding(str, enum.Enum):
    UTF8 = "utf8"
    UTF16LE = "utf16le"
    UTF16BE = "utf16be"

    @property
    def codec(self) -> str:
        return {"utf8": "utf-8", "utf16le": "utf-16-le", "utf16be": "utf-16-be"}[self.value]


class _Reserved:
    """Value of a column stored with reserved serial type 10 or 11."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "RESERVED"


RESERVED = _Reserved()


@dataclass(frozen=True, slots=True)
class DbHeader:
    page_size: int
    page_count: int
    text_encoding: TextEncoding
    freelist_head: int
    reserved_per_page: int
    write_version: int = 1
    read_version: int = 1
    page_count_valid: bool = True

    @property
    def usable_size(self) -> int:
        return self.page_size - self.reserved_per_page

    @property
    def wal(self) -> bool:
        return self.write_version == 2 or self.read_version == 2


@dataclass(frozen=True, slots=True)
class BlobCell:
    table: str
    rowid: int
    column_index: int
    bytes: bytes


def parse_header(data: bytes) -> DbHeader:
    """Decode the fixed 100-byte database header."""
    if len(data) < HEADER_SIZE:
        raise Truncated(f"header needs {HEADER_SIZE} bytes, got {len(data)}")
    if bytes(data[:16]) != MAGIC:
        raise BadMagic("not a SQLite 3 database")
    raw_size = struct.unpack_from(">H", data, 16)[0]
    page_size = 65536 if raw_size == 1 else raw_size
    if page_size < 512 or page_size > 65536 or page_size & (page_size - 1):
        raise UnsupportedPageSize(f"page size {raw_size} is not a power of two in [512, 65536]")
    write_version, read_version, reserved = data[18], data[19], data[20]
    change_counter, page_count, freelist_head = struct.unpack_from(">III", data, 24)
    version_valid_for = struct.unpack_from(">I", data, 92)[0]
    enc = struct.unpack_from(">I", data, 56)[0]
    encoding = {2: TextEncoding.UTF16LE, 3: TextEncoding.UTF16BE}.get(enc, TextEncoding.UTF8)
    if page_size - reserved < 480:
        # The format requires a usable size of at least 480 bytes.
        raise UnsupportedPageSize(f"{reserved} reserved bytes leave too little usable space")
    return DbHeader(
        page_size=page_size,
        page_count=page_count,
        text_encoding=encoding,
        freelist_head=freelist_head,
        reserved_per_page=reserved,
        write_version=write_version,
        read_version=read_version,
        page_count_valid=page_count != 0 and change_counter == version_valid_for,
    )


def read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    """Decode a varint at *pos*; return ``(value, width)``.

    Up to eight bytes contribute seven bits each (high bit = continue);
    a ninth byte contributes all eight bits. Values are signed 64-bit.
    """
    value = 0
    for i in range(8):
        if pos + i >= len(buf):
            raise Truncated(f"varint runs past end of buffer at {pos + i}")
        b = buf[pos + i]
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, i + 1
    if pos + 8 >= len(buf):
        raise Truncated(f"varint runs past end of buffer at {pos + 8}")
    value = (value << 8) | buf[pos + 8]
    if value >= 1 << 63:
        value -= 1 << 64
    return value, 9


_INT_WIDTHS = {1: 1, 2: 2, 3: 3, 4: 4, 5: 6, 6: 8}


def serial_type_size(code: int) -> int:
    if code in _INT_WIDTHS:
        return _INT_WIDTHS[code]
    if code == 7:
        return 8
    if code >= 12:
        return (code - 12) // 2
    # 0 (NULL), 8, 9 (constants) and reserved 10/11 occupy no body bytes.
    return 0


def decode_record(payload: bytes, encoding: TextEncoding = TextEncoding.UTF8) -> list:
    """Decode a fully assembled record into Python values.

    NULL -> None, integers -> int, 7 -> float, blobs -> bytes, text -> str,
    serial types 10/11 -> ``RESERVED``.
    """
    header_len, pos = read_varint(payload, 0)
    if header_len < pos or header_len > len(payload):
        raise Truncated(f"record header length {header_len} out of range")
    types = []
    while pos < header_len:
        code, width = read_varint(payload, pos)
        pos += width
        if code < 0:
            raise Truncated(f"negative serial type {code}")
        types.append(code)
    if pos != header_len:
        raise Truncated("record header overruns its declared length")

    values = []
    body = header_len
    codec = TextEncoding(encoding).codec
    for code in types:
        size = serial_type_size(code)
        if body + size > len(payload):
            raise Truncated(f"value of serial type {code} runs past end of record")
        chunk = payload[body:body + size]
        body += size
        if code == 0:
            values.append(None)
        elif code in _INT_WIDTHS:
            values.append(int.from_bytes(chunk, "big", signed=True))
        elif code == 7:
            values.append(struct.unpack(">d", chunk)[0])
        elif code == 8:
            values.append(0)
        elif code == 9:
            values.append(1)
        elif code in (10, 11):
            values.append(RESERVED)
        elif code % 2 == 0:
            values.append(bytes(chunk))
        else:
            values.append(bytes(chunk).decode(codec, errors="replace"))
    return values


# --- CREATE TABLE column list -------------------------------------------------

_TOKEN = re.compile(
    r"""\s+
    | --[^\n]*
    | /\*.*?(?:\*/|$)
    | (?P<q>"(?:[^"]|"")*" | `(?:[^`]|``)*` | \[[^\]]*\] | '(?:[^']|'')*')
    | (?P<w>[A-Za-z_\x80-\U0010ffff][\w$\x80-\U0010ffff]*)
    | (?P<p>.)
    """,
    re.VERBOSE | re.DOTALL,
)

_CONSTRAINT_WORDS = {"constraint", "primary", "unique", "check", "foreign"}


def _tokens(sql: str) -> list[tuple[str, str]]:
    out = []
    for m in _TOKEN.finditer(sql):
        if m.group("q"):
            text = m.group("q")
            if text[0] == "[":
                out.append(("id", text[1:-1]))
            else:
                q = text[0]
                out.append(("id", text[1:-1].replace(q * 2, q)))
        elif m.group("w"):
            out.append(("id", m.group("w")))
        elif m.group("p"):
            out.append(("p", m.group("p")))
    return out


def column_names(create_sql: str) -> list[str] | None:
    """Column names of a ``CREATE TABLE`` statement, or None if unparseable."""
    toks = _tokens(create_sql)
    try:
        open_at = toks.index(("p", "("))
    except ValueError:
        return None
    columns: list[str] = []
    depth = 0
    current: list[tuple[str, str]] = []
    for tok in toks[open_at + 1:]:
        if tok == ("p", "("):
            depth += 1
        elif tok == ("p", ")"):
            if depth == 0:
                _add_column(current, columns)
                return columns or None
            depth -= 1
        elif tok == ("p", ",") and depth == 0:
            _add_column(current, columns)
            current = []
            continue
        current.append(tok)
    return None


def _add_column(tokens, columns) -> None:
    if not tokens:
        return
    kind, text = tokens[0]
    if kind == "id" and text.lower() in _CONSTRAINT_WORDS:
        return
    columns.append(text)


# --- b-tree walking -------------------------------------------------------------


@dataclass(frozen=True)
class TableInfo:
    name: str
    root_page: int
    sql: str


class Database:
    """A SQLite database image held in memory."""

    def __init__(self, data: bytes, *, salvage: bool = True):
        self.data = data
        self._mv = memoryview(data)
        self.salvage = salvage
        self.diagnostics: list[Diagnostic] = []
        self.header = parse_header(data[:HEADER_SIZE])
        self.page_size = self.header.page_size
        self.usable = self.header.usable_size
        self.pages_available = len(data) // self.page_size
        if self.header.page_count_valid and self.header.page_count > self.pages_available:
            if not salvage:
                raise Truncated(
                    f"header declares {self.header.page_count} pages, file holds {self.pages_available}"
                )
            self._diag("truncated", f"file holds {self.pages_available} of {self.header.page_count} pages")
        if self.header.wal:
            self._diag("wal_mode", "database is in WAL mode; frames in a -wal file are not read")
        self._tables: dict[str, TableInfo] | None = None

    def _diag(self, kind: str, message: str) -> None:
        self.diagnostics.append(Diagnostic(kind, message))

    def _corrupt(self, kind: str, message: str) -> None:
        if not self.salvage:
            raise CorruptCell(message)
        self._diag(kind, message)

    def _page(self, number: int) -> int:
        """Byte offset of page *number*; raises CorruptCell when out of range."""
        if not 1 <= number <= self.pages_available:
            raise CorruptCell(f"page {number} out of range 1..{self.pages_available}")
        return (number - 1) * self.page_size

    # schema

    def tables(self) -> dict[str, TableInfo]:
        """Tables listed in the schema, keyed by lower-cased name."""
        if self._tables is None:
            tables = {}
            for _, row in self._walk(1, "sqlite_schema"):
                if len(row) < 5 or row[0] != "table" or not isinstance(row[1], str):
                    continue
                root = row[3] if isinstance(row[3], int) else 0
                sql = row[4] if isinstance(row[4], str) else ""
                tables[row[1].lower()] = TableInfo(row[1], root, sql)
            self._tables = tables
        return self._tables

    def table(self, name: str) -> TableInfo:
        info = self.tables().get(name.lower())
        if info is None:
            raise TableNotFound(name)
        return info

    # rows

    def walk_table(self, table_name: str) -> Iterator[tuple[int, list]]:
        info = self.table(table_name)
        if info.root_page < 1:
            self._diag("no_root_page", f"table {info.name} has no b-tree (virtual table?)")
            return iter(())
        return self._walk(info.root_page, info.name)

    def _walk(self, root: int, table: str) -> Iterator[tuple[int, list]]:
        visited: set[int] = set()
        stack = [(root, 0)]
        while stack:
            page, depth = stack.pop()
            if page in visited or depth > MAX_DEPTH:
                self._corrupt("CorruptPage", f"{table}: b-tree cycle or runaway depth at page {page}")
                continue
            visited.add(page)
            try:
                base = self._page(page)
            except CorruptCell as exc:
                self._corrupt("CorruptPage", f"{table}: {exc}")
                continue
            hdr = base + HEADER_SIZE if page == 1 else base
            kind = self.data[hdr]
            if kind == LEAF_TABLE:
                yield from self._leaf_cells(page, base, hdr, table)
            elif kind == INTERIOR_TABLE:
                children = self._interior_children(page, base, hdr, table)
                stack.extend((c, depth + 1) for c in reversed(children))
            elif kind in (LEAF_INDEX, INTERIOR_INDEX):
                self._diag("unsupported", f"{table}: index b-tree at page {page} (WITHOUT ROWID?) skipped")
            else:
                self._corrupt("CorruptPage", f"{table}: page {page} has invalid type 0x{kind:02x}")

    def _cell_pointers(self, page, base, hdr, header_len, table) -> list[int]:
        ncells = struct.unpack_from(">H", self.data, hdr + 3)[0]
        ptr_start = hdr + header_len
        max_cells = (self.usable - (ptr_start - base)) // 2
        if ncells > max_cells:
            self._corrupt("CorruptPage", f"{table}: page {page} claims {ncells} cells")
            ncells = max(0, max_cells)
        return list(struct.unpack_from(f">{ncells}H", self.data, ptr_start))

    def _interior_children(self, page, base, hdr, table) -> list[int]:
        children = []
        for i, ptr in enumerate(self._cell_pointers(page, base, hdr, 12, table)):
            if not hdr - base + 12 <= ptr <= self.usable - 4:
                self._corrupt("CorruptCell", f"{table}: page {page} cell {i} pointer {ptr} out of range")
                continue
            children.append(struct.unpack_from(">I", self.data, base + ptr)[0])
        children.append(struct.unpack_from(">I", self.data, hdr + 8)[0])
        return children

    def _leaf_cells(self, page, base, hdr, table) -> Iterator[tuple[int, list]]:
        enc = self.header.text_encoding
        for i, ptr in enumerate(self._cell_pointers(page, base, hdr, 8, table)):
            try:
                rowid, payload = self._leaf_payload(base, hdr, ptr)
                values = decode_record(payload, enc)
            except (CorruptCell, Truncated) as exc:
                self._corrupt("CorruptCell", f"{table}: page {page} cell {i}: {exc}")
                continue
            yield rowid, values

    def _leaf_payload(self, base: int, hdr: int, ptr: int) -> tuple[int, bytes]:
        u = self.usable
        if not hdr - base + 8 <= ptr < u:
            raise CorruptCell(f"cell pointer {ptr} out of range")
        page_end = base + u
        cell = base + ptr
        view = self._mv[cell:page_end]
        size, w1 = read_varint(view, 0)
        rowid, w2 = read_varint(view, w1)
        start = w1 + w2
        if size < 0 or size > len(self.data):
            raise CorruptCell(f"payload size {size} impossible")
        max_local = u - 35
        if size <= max_local:
            local = size
        else:
            min_local = (u - 12) * 32 // 255 - 23
            local = min_local + (size - min_local) % (u - 4)
            if local > max_local:
                local = min_local
        if start + local > len(view) or (size > local and start + local + 4 > len(view)):
            raise CorruptCell("local payload runs past end of page")
        if size == local:
            return rowid, bytes(view[start:start + local])
        parts = [view[start:start + local]]
        remaining = size - local
        next_page = struct.unpack_from(">I", view, start + local)[0]
        seen = set()
        while remaining > 0:
            if next_page in seen:
                raise CorruptCell(f"overflow chain loops at page {next_page}")
            seen.add(next_page)
            off = self._page(next_page)
            chunk = min(remaining, u - 4)
            parts.append(self._mv[off + 4:off + 4 + chunk])
            remaining -= chunk
            next_page = struct.unpack_from(">I", self.data, off)[0]
        return rowid, b"".join(parts)

    # blobs

    def extract_blobs(self, table: str, column: str | None = None) -> list[BlobCell]:
        info = self.table(table)
        ordinal = None
        if column is not None and column.lower() != AUTO:
            names = column_names(info.sql)
            if names is None:
                self._diag("schema_unparsed", f"{info.name}: CREATE statement unparsed; using column=auto")
            else:
                lowered = [n.lower() for n in names]
                if column.lower() not in lowered:
                    raise ColumnNotFound(f"{info.name}.{column}")
                ordinal = lowered.index(column.lower())
        cells = []
        for rowid, values in self.walk_table(info.name):
            if ordinal is not None:
                picks = [(ordinal, values[ordinal])] if ordinal < len(values) else []
            else:
                picks = enumerate(values)
            for idx, value in picks:
                if type(value) is bytes:
                    cells.append(BlobCell(info.name, rowid, idx, value))
        return cells

    def scan_all_blobs(self) -> list[BlobCell]:
        cells = []
        try:
            tables = self.tables()
        except SqliteError as exc:
            self._diag("schema_unreadable", str(exc))
            return cells
        for info in tables.values():
            try:
                cells.extend(self.extract_blobs(info.name))
            except SqliteError as exc:
                self._diag("table_failed", f"{info.name}: {exc}")
        return cells


def walk_table(data: bytes, table_name: str, *, salvage: bool = True,
               diagnostics: list[Diagnostic] | None = None) -> list[tuple[int, list]]:
    db = Database(data, salvage=salvage)
    rows = list(db.walk_table(table_name))
    if diagnostics is not None:
        diagnostics.extend(db.diagnostics)
    return rows


def extract_blobs(data: bytes, table: str, column: str | None = None, *, salvage: bool = True,
                  diagnostics: list[Diagnostic] | None = None) -> list[BlobCell]:
    """Blob values of *table*; every blob-typed column when *column* is None or "auto"."""
    db = Database(data, salvage=salvage)
    try:
        return db.extract_blobs(table, column)
    finally:
        if diagnostics is not None:
            diagnostics.extend(db.diagnostics)


def scan_all_blobs(data: bytes, *, salvage: bool = True,
                   diagnostics: list[Diagnostic] | None = None) -> list[BlobCell]:
    db = Database(data, salvage=salvage)
    cells = db.scan_all_blobs()
    if diagnostics is not None:
        diagnostics.extend(db.diagnostics)
    return cells
