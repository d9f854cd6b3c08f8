"""Magic-byte identification and structural JPEG validation.

Validation walks the marker segments of a JPEG stream without decoding
any entropy-coded data. That is enough to find the EOI that really closes
a stream (rather than the first FF D9 that happens to appear in scan data
or inside an embedded EXIF thumbnail) and to reject most garbage.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

JPEG_MAGIC = b"\xff\xd8\xff"
PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
BMP_MAGIC = b"BM"
GIF_MAGICS = (b"GIF87a", b"GIF89a")

SOI = 0xD8
EOI = 0xD9
SOS = 0xDA
TEM = 0x01
RST = range(0xD0, 0xD8)
APP = range(0xE0, 0xF0)
# Start-of-frame markers; C4 (DHT), C8 (JPG) and CC (DAC) share the range.
SOF = frozenset(range(0xC0, 0xD0)) - {0xC4, 0xC8, 0xCC}

# First FF in entropy-coded data that is neither stuffing (FF 00), a
# restart marker (FF D0-D7) nor a fill byte preceding another FF.
_SCAN_END = re.compile(rb"\xff(?![\x00\xd0-\xd7\xff])")


class ImageKind(str, enum.Enum):
    JPEG = "jpeg"
    PNG = "png"
    BMP = "bmp"
    GIF = "gif"
    UNKNOWN = "unknown"

    @property
    def extension(self) -> str:
        return _EXTENSIONS[self]


_EXTENSIONS = {
    ImageKind.JPEG: ".jpg",
    ImageKind.PNG: ".png",
    ImageKind.BMP: ".bmp",
    ImageKind.GIF: ".gif",
    ImageKind.UNKNOWN: ".bin",
}


def sniff(data: bytes) -> ImageKind:
    head = bytes(data[:8])
    if head.startswith(JPEG_MAGIC):
        return ImageKind.JPEG
    if head == PNG_MAGIC:
        return ImageKind.PNG
    if head[:6] in GIF_MAGICS:
        return ImageKind.GIF
    if head.startswith(BMP_MAGIC):
        return ImageKind.BMP
    return ImageKind.UNKNOWN


@dataclass(slots=True)
class ValidationReport:
    valid: bool = False
    byte_length_consumed: int = 0
    has_frame: bool = False
    has_scan: bool = False
    embedded_jpeg_offsets: list[int] = field(default_factory=list)
    failure_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "byte_length_consumed": self.byte_length_consumed,
            "has_frame": self.has_frame,
            "has_scan": self.has_scan,
            "embedded_jpeg_offsets": list(self.embedded_jpeg_offsets),
            "failure_reason": self.failure_reason,
        }


def validate_jpeg(data: bytes) -> ValidationReport:
    """Structurally validate the JPEG stream at the start of *data*.

    Trailing bytes after the closing EOI are ignored; the report's
    ``byte_length_consumed`` says where the stream ended. Never raises.
    """
    if not isinstance(data, (bytes, bytearray)):
        data = bytes(data)
    return walk_jpeg(data, 0, len(data))


def walk_jpeg(buf: bytes, start: int, end: int, _depth: int = 0) -> ValidationReport:
    """Validate the stream beginning at ``buf[start]`` without reading at or
    past ``buf[end]``. Offsets in the returned report are relative to *start*.
    """
    report = ValidationReport()
    end = min(end, len(buf))
    if end - start < 3 or buf[start:start + 3] != JPEG_MAGIC:
        report.failure_reason = "not jpeg"
        return report

    pos = start + 2
    while True:
        if pos >= end:
            return _fail(report, "truncated before EOI", pos - start)
        if buf[pos] != 0xFF:
            return _fail(report, f"expected marker at offset {pos - start}", pos - start)
        # Any number of FF fill bytes may precede a marker code.
        while pos < end and buf[pos] == 0xFF:
            pos += 1
        if pos >= end:
            return _fail(report, "truncated in marker", pos - start)
        marker = buf[pos]
        pos += 1

        if marker == EOI:
            report.byte_length_consumed = pos - start
            if not report.has_scan:
                report.failure_reason = "no SOS"
            elif not report.has_frame:
                report.failure_reason = "no SOF"
            else:
                report.valid = True
            return report
        if marker in RST or marker == TEM:
            continue
        if marker == 0x00 or marker == SOI:
            return _fail(report, f"unexpected marker FF{marker:02X}", pos - start)

        if pos + 2 > end:
            return _fail(report, "truncated segment length", pos - start)
        seg_len = (buf[pos] << 8) | buf[pos + 1]
        if seg_len < 2:
            return _fail(report, f"bad segment length {seg_len}", pos - start)
        seg_end = pos + seg_len
        if seg_end > end:
            return _fail(report, "segment runs past end of data", pos - start)

        if marker in SOF:
            report.has_frame = True
        elif marker in APP and _depth == 0:
            _find_embedded(buf, pos + 2, seg_end, start, report, _depth)
        pos = seg_end

        if marker == SOS:
            report.has_scan = True
            m = _SCAN_END.search(buf, pos, end)
            # No marker found: the stream is cut off inside scan data.
            if m is None:
                return _fail(report, "truncated in scan data", end - start)
            pos = m.start()


def _find_embedded(buf, lo: int, hi: int, base: int, report: ValidationReport, depth: int) -> None:
    pos = buf.find(JPEG_MAGIC, lo, hi)
    while pos != -1:
        nested = walk_jpeg(buf, pos, hi, depth + 1)
        if nested.valid:
            report.embedded_jpeg_offsets.append(pos - base)
            pos = buf.find(JPEG_MAGIC, pos + nested.byte_length_consumed, hi)
        else:
            pos = buf.find(JPEG_MAGIC, pos + 1, hi)


def _fail(report: ValidationReport, reason: str, consumed: int) -> ValidationReport:
    report.valid = False
    report.failure_reason = reason
    report.byte_length_consumed = max(0, consumed)
    return report
