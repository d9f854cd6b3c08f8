"""Signature-based JPEG carving with configurable block alignment.

Header candidates are only considered at offsets that are multiples of
``block_size``. A block size of 512 mimics sector-oriented carvers, which
skip the rest of a block after each hit; inside a database file many
thumbnails are packed back to back, so block size 1 is needed there.

The end of each stream comes from a structural marker walk, not from the
first FF D9 after the header.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .diagnostics import Diagnostic
from .evidence import EvidenceSource, FileEntry
from .sniffer import ValidationReport, walk_jpeg

DEFAULT_WINDOW = 2 * 1024**3


class HeaderMode(str, enum.Enum):
    STRICT = "strict"
    LOOSE = "loose"

    @property
    def pattern(self) -> bytes:
        return b"\xff\xd8\xff" if self is HeaderMode.STRICT else b"\xff\xd8"


class NestedPolicy(str, enum.Enum):
    OUTERMOST_ONLY = "outermost_only"
    ALSO_NESTED = "also_nested"


@dataclass(frozen=True)
class CarveParams:
    block_size: int = 512
    header_mode: HeaderMode = HeaderMode.STRICT
    min_size: int = 128
    max_size: int = 64 * 1024**2
    nested_policy: NestedPolicy = NestedPolicy.OUTERMOST_ONLY

    def __post_init__(self):
        object.__setattr__(self, "header_mode", HeaderMode(self.header_mode))
        object.__setattr__(self, "nested_policy", NestedPolicy(self.nested_policy))
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if not 0 <= self.min_size < self.max_size:
            raise ValueError("need 0 <= min_size < max_size")

    def to_dict(self) -> dict:
        return {
            "block_size": self.block_size,
            "header_mode": self.header_mode.value,
            "min_size": self.min_size,
            "max_size": self.max_size,
            "nested_policy": self.nested_policy.value,
        }


@dataclass
class CarveHit:
    offset: int
    length: int
    bytes: bytes = field(repr=False)
    validation: ValidationReport = field(repr=False)
    nested: bool = False


def count_headers(buf: bytes, header_mode: HeaderMode | str = HeaderMode.STRICT) -> int:
    """Count every offset (overlaps included) where the header pattern occurs."""
    pattern = HeaderMode(header_mode).pattern
    return sum(1 for _ in re.finditer(b"(?=" + re.escape(pattern) + b")", buf))


def carve_jpegs(
    buf: bytes, params: CarveParams | None = None, diagnostics: list[Diagnostic] | None = None
) -> list[CarveHit]:
    params = params or CarveParams()
    hits, _ = _carve_region(buf, params, base=0, scan_from=0, scan_to=len(buf), diagnostics=diagnostics)
    return hits


def carve_entry(
    source: EvidenceSource,
    entry: FileEntry,
    params: CarveParams | None = None,
    *,
    window_size: int = DEFAULT_WINDOW,
    diagnostics: list[Diagnostic] | None = None,
) -> list[CarveHit]:
    """Carve a whole evidence file.

    Files up to *window_size* bytes are carved in one buffer. Larger files
    are read in windows overlapping by ``max_size`` so that any stream
    starting in one window's own region ends inside that window; the
    result matches carving the whole file at once.
    """
    params = params or CarveParams()
    if entry.size <= window_size:
        return carve_jpegs(source.read_bytes(entry), params, diagnostics)
    if window_size <= params.max_size:
        raise ValueError("window_size must exceed max_size for windowed carving")

    step = window_size - params.max_size
    hits: list[CarveHit] = []
    seen: set[int] = set()
    resume = 0
    for w0 in range(0, entry.size, step):
        chunk = source.read_bytes(entry, w0, window_size)
        owned_end = min(w0 + step, entry.size)
        if resume >= owned_end:
            continue
        found, resume = _carve_region(
            chunk, params, base=w0, scan_from=max(resume, w0) - w0,
            scan_to=owned_end - w0, diagnostics=diagnostics,
        )
        for hit in found:
            key = (hit.offset, hit.nested)
            if key not in seen:
                seen.add(key)
                hits.append(hit)
    return hits


def _carve_region(buf, params: CarveParams, *, base, scan_from, scan_to, diagnostics):
    """Carve candidates whose header lies in ``buf[scan_from:scan_to]``.

    ``base`` is the absolute offset of ``buf[0]``; alignment and reported
    offsets are absolute. Returns the hits and the absolute offset where
    scanning should resume.
    """
    pattern = params.header_mode.pattern
    bs = params.block_size
    hits: list[CarveHit] = []
    pos = scan_from
    while True:
        idx = _next_aligned_header(buf, pattern, pos, scan_to, base, bs)
        if idx == -1:
            break
        limit = min(len(buf), idx + params.max_size)
        report = walk_jpeg(buf, idx, limit)
        length = report.byte_length_consumed
        if report.valid and params.min_size <= length <= params.max_size:
            data = bytes(buf[idx:idx + length])
            hits.append(CarveHit(base + idx, length, data, report))
            if params.nested_policy is NestedPolicy.ALSO_NESTED:
                hits.extend(_nested_hits(buf, idx, report, params, base))
            pos = _align_up(idx + length, base, bs)
        else:
            if diagnostics is not None:
                reason = report.failure_reason or f"size {length} outside bounds"
                diagnostics.append(Diagnostic("carve_rejected", f"offset {base + idx}: {reason}"))
            pos = _align_up(idx + 1, base, bs)
    return hits, base + max(pos, scan_to)


def _nested_hits(buf, idx, report, params, base):
    out = []
    for rel in report.embedded_jpeg_offsets:
        at = idx + rel
        nested = walk_jpeg(buf, at, idx + report.byte_length_consumed)
        n = nested.byte_length_consumed
        if nested.valid and params.min_size <= n <= params.max_size:
            out.append(CarveHit(base + at, n, bytes(buf[at:at + n]), nested, nested=True))
    return out


def _next_aligned_header(buf, pattern, pos, stop, base, bs) -> int:
    while pos < stop:
        idx = buf.find(pattern, pos, stop + len(pattern) - 1)
        if idx == -1 or idx >= stop:
            return -1
        if (base + idx) % bs == 0:
            return idx
        pos = _align_up(idx, base, bs)
    return -1


def _align_up(pos: int, base: int, bs: int) -> int:
    """Smallest buffer index >= pos whose absolute offset is a multiple of bs."""
    rem = (base + pos) % bs
    return pos if rem == 0 else pos + bs - rem
