"""Why carving inside a database needs a block size of 1.

Disk carvers look for JPEG headers only at sector boundaries. A viewer's
thumbnail store packs images back to back, so most headers sit at
arbitrary offsets and a 512-byte carver walks straight past them.
"""

from _fixtures import noise_jpeg

from viewerthumbs import CarveParams, carve_jpegs, count_headers

thumbs = [noise_jpeg(i, (40 + 8 * i, 40)) for i in range(6)]
store = b"".join(thumbs)
print(f"thumbnail store: {len(store)} bytes, {len(thumbs)} JPEGs packed back to back")
print(f"header candidates (FF D8): {count_headers(store, 'loose')}")

for block in (512, 1):
    hits = carve_jpegs(store, CarveParams(block_size=block))
    print(f"block size {block:>3}: restored {len(hits)} at offsets {[h.offset for h in hits]}")

# Pad each thumbnail to a sector and the two block sizes agree again.
padded = b"".join(t + bytes(-len(t) % 512) for t in thumbs)
print(f"sector-aligned copy, block size 512: restored {len(carve_jpegs(padded))}")
