"""A full scan over a small evidence tree.

The tree mimics a user profile with three viewers installed. The scan
writes deduplicated images named by content hash plus a JSON report that
says where every image came from.
"""

import json
import sqlite3

from _fixtures import noise_jpeg, scratch

from viewerthumbs import CarveParams, built_in_registry, open_evidence, run

work = scratch()
ev = work / "evidence"
appdata = ev / "Users/Administrator/AppData"

fs = appdata / "Roaming/FastStone/FSIV/FSViewer.db"
fs.parent.mkdir(parents=True)
fs.write_bytes(b"TDB1" + bytes(60) + b"".join(b"rec" + noise_jpeg(i) for i in range(3)))

zoner = appdata / "Local/Zoner/ZPS18/ZPSCache.dat/000"
zoner.mkdir(parents=True)
for i in range(2):
    (zoner / f"{i:08X}").write_bytes(noise_jpeg(10 + i))

xn = appdata / "Roaming/XnView/XnView.db"
xn.parent.mkdir(parents=True)
con = sqlite3.connect(xn)
con.execute("CREATE TABLE Datas (id INTEGER PRIMARY KEY, data BLOB)")
con.executemany("INSERT INTO Datas VALUES (?, ?)", [(i, bytes([0x5A, i]) + bytes(range(200))) for i in range(2)])
con.commit()
con.close()

report = run(open_evidence(ev), built_in_registry(), CarveParams(), work / "out", workers=2)
print(json.dumps(report.counts, indent=2))
for rec in report.records:
    print(f"{rec.viewer:10} {rec.method:10} {rec.status:9} {rec.output_name}")
print(f"report written to {work / 'out/report.json'}")
