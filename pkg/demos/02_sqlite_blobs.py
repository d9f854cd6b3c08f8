"""Reading thumbnail blobs straight out of a SQLite file.

The reader parses the file format itself, so it works on copies taken
from evidence without a database engine and tolerates damaged pages.
Carving the same file finds nothing: each blob is split across overflow
pages, and no contiguous JPEG exists on disk.
"""

import sqlite3

from _fixtures import noise_jpeg, scratch

from viewerthumbs import CarveParams, Database, carve_jpegs

path = scratch() / "root pixel.db"
con = sqlite3.connect(path)
con.execute("PRAGMA page_size=512")
con.execute("CREATE TABLE RootPixels (id INTEGER PRIMARY KEY, uuid TEXT, jpegData BLOB)")
previews = [noise_jpeg(i, (64, 64)) for i in range(4)]
con.executemany("INSERT INTO RootPixels VALUES (?, ?, ?)", [(i, f"u{i}", b) for i, b in enumerate(previews)])
con.commit()
con.close()

data = path.read_bytes()
db = Database(data)
print(f"page size {db.header.page_size}, {db.header.page_count} pages, tables {sorted(db.tables())}")

cells = db.extract_blobs("RootPixels", "jpegData")
for cell in cells:
    print(f"  rowid {cell.rowid}: {len(cell.bytes)} bytes, intact={cell.bytes == previews[cell.rowid]}")

print(f"raw carve of the same file restores {len(carve_jpegs(data, CarveParams(block_size=1)))} images")

# Damage one page and read again in salvage mode.
broken = bytearray(data)
broken[3 * 512] = 0x42
salvaged = Database(bytes(broken)).scan_all_blobs()
print(f"after corrupting page 4: {len(salvaged)} blobs recovered")
