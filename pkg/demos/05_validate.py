"""Structural JPEG validation.

Finding the end of a JPEG is harder than searching for FF D9: that pair
also closes any EXIF thumbnail inside the image. The validator walks the
marker segments instead, and reports embedded thumbnails separately.
"""

from _fixtures import noise_jpeg

from viewerthumbs import sniff, validate_jpeg

thumb = noise_jpeg(1, (16, 12))
# Splice the thumbnail into an APP1 segment, as cameras do with EXIF.
body = noise_jpeg(2, (80, 60))
app = b"Demo\x00" + thumb
photo_with_thumb = body[:2] + b"\xff\xe1" + (len(app) + 2).to_bytes(2, "big") + app + body[2:]

report = validate_jpeg(photo_with_thumb)
print(f"kind {sniff(photo_with_thumb).value}, valid {report.valid}, "
      f"{report.byte_length_consumed} of {len(photo_with_thumb)} bytes")
first_eoi = photo_with_thumb.find(b"\xff\xd9") + 2
print(f"naive end (first FF D9) at {first_eoi}, embedded thumbnails at {report.embedded_jpeg_offsets}")

for label, blob in [("truncated", photo_with_thumb[:300]), ("header and EOI only", b"\xff\xd8\xff\xd9")]:
    r = validate_jpeg(blob)
    print(f"{label}: valid {r.valid}, reason {r.failure_reason!r}")
