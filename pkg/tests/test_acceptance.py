"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``. The fuzz duration
defaults to the full ten minutes; set VIEWERTHUMBS_FUZZ_SECONDS to shorten
it for a quick local check (the printed line reports the duration used).
"""

import json
import os
import random
import shutil
import signal
import struct
import time
from collections import Counter
from pathlib import Path

import pytest

from viewerthumbs.carver import CarveParams, HeaderMode, carve_jpegs, count_headers
from viewerthumbs.cli import main
from viewerthumbs.sniffer import validate_jpeg
from viewerthumbs.sqlite_reader import SqliteError, extract_blobs, parse_header

from .factories import (VIEWER_ROOT, build_viewer_tree, concat, jpeg, jpeg_with_exif_thumbnail, lightroom_db,
                        make_db, raw_store, sha, write, xnview_db)

pytestmark = pytest.mark.acceptance

FUZZ_SECONDS = float(os.environ.get("VIEWERTHUMBS_FUZZ_SECONDS", 600))


@pytest.fixture
def verdict(capsys):
    def say(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return say


def unique_jpeg(base: bytes, n: int) -> bytes:
    """*base* with a comment segment carrying *n*, so every copy hashes differently."""
    return base[:2] + b"\xff\xfe\x00\x0a" + n.to_bytes(8, "big") + base[2:]


def carve_cli(path, out, block, capsys):
    capsys.readouterr()
    code = main(["carve", str(path), "--block-size", str(block), "--out", str(out), "--json"])
    return code, json.loads(capsys.readouterr().out)


# 1 ---------------------------------------------------------------------------

def test_criterion_1_carving_exactness(tmp_path, capsys, verdict):
    details, ok = [], True
    for k in (1, 10, 250):
        big = k == 250
        imgs = [jpeg(10_000 + i, 580, 580, 95) if big else jpeg(10_000 + i) for i in range(k)]
        path = tmp_path / f"concat{k}.bin"
        path.write_bytes(concat(imgs))
        out = tmp_path / f"out{k}"
        t0 = time.perf_counter()
        code, doc = carve_cli(path, out, 1, capsys)
        elapsed = time.perf_counter() - t0
        got = sorted(sha(p.read_bytes()) for p in out.iterdir())
        exact = code == 0 and doc["restored"] == k and got == sorted(map(sha, imgs))
        ok &= exact
        details.append(f"K={k}: {doc['restored']} restored, sha-identical={exact}")
        if big:
            mb = path.stat().st_size / 1e6
            fast = mb >= 100 and elapsed < 5.0
            ok &= fast
            details.append(f"{mb:.0f} MB in {elapsed:.2f} s (limit 5 s)")
    verdict(1, ok, "; ".join(details))


# 2 ---------------------------------------------------------------------------

def test_criterion_2_hits_dominance(verdict):
    rng = random.Random(2)
    pool = [jpeg(200 + i, rng.randint(8, 90), rng.randint(8, 90), rng.choice([50, 75, 95])) for i in range(30)]
    pool += [jpeg_with_exif_thumbnail(i) for i in range(3)]
    violations, total_hits, total_headers = 0, 0, 0
    for _ in range(100):
        parts = []
        for _ in range(rng.randint(0, 40)):
            garbage = bytearray(rng.randbytes(rng.randint(0, 2000)))
            # Sprinkle false headers into the garbage.
            for _ in range(rng.randint(0, 3)):
                if garbage:
                    at = rng.randrange(len(garbage))
                    garbage[at:at] = rng.choice([b"\xff\xd8", b"\xff\xd8\xff", b"\xff\xd8\xff\xe0\x00\x10"])
            parts += [bytes(garbage), rng.choice(pool)]
            if rng.random() < 0.2:
                img = rng.choice(pool)
                parts.append(img[: rng.randrange(1, len(img))])
        buf = b"".join(parts)
        loose = count_headers(buf, HeaderMode.LOOSE)
        for mode in HeaderMode:
            for block in (1, 512):
                hits = carve_jpegs(buf, CarveParams(block_size=block, header_mode=mode, min_size=0))
                violations += loose < len(hits)
                total_hits += len(hits)
        total_headers += loose
    verdict(2, violations == 0,
            f"100 fixtures x 4 configurations, {violations} violations "
            f"({total_headers} loose headers, {total_hits} hits summed)")


# 3 ---------------------------------------------------------------------------

def test_criterion_3_block_size(tmp_path, capsys, verdict):
    imgs = [jpeg(300 + i, 40 + 3 * i, 40) for i in range(12)]
    unaligned = tmp_path / "unaligned.bin"
    unaligned.write_bytes(concat(imgs))
    aligned = tmp_path / "aligned.bin"
    aligned.write_bytes(concat(imgs, align=512))
    n = {}
    for name, path in (("unaligned", unaligned), ("aligned", aligned)):
        for block in (1, 512):
            n[name, block] = carve_cli(path, tmp_path / f"{name}{block}", block, capsys)[1]["restored"]
    ok = n["unaligned", 512] < n["unaligned", 1] == 12 and n["aligned", 512] == n["aligned", 1] == 12
    verdict(3, ok, f"unaligned: b512={n['unaligned', 512]} < b1={n['unaligned', 1]}; "
                   f"aligned: b512={n['aligned', 512]} == b1={n['aligned', 1]}")


# 4 ---------------------------------------------------------------------------

def test_criterion_4_sqlite_round_trip(tmp_path, verdict):
    rng = random.Random(4)
    cases, failures = 0, []
    for page_size in (512, 1024, 4096, 65536):
        for rows in (0, 1, 2, 37, 1000):
            if page_size == 65536 and rows == 1000:
                sizes = [rng.randint(0, 3 * page_size) if i % 10 == 0 else rng.randint(0, page_size)
                         for i in range(rows)]
            else:
                sizes = [rng.randint(0, 3 * page_size) for _ in range(rows)]
            if rows >= 2:
                sizes[0], sizes[1] = 0, 3 * page_size
            blobs = [rng.randbytes(s) for s in sizes]
            rowids = sorted(rng.sample(range(1, 10 * rows + 2), rows))
            data = make_db(tmp_path / "rt.db", page_size, {
                "t": ("id INTEGER PRIMARY KEY, label TEXT, payload BLOB",
                      [(r, f"row{r}", b) for r, b in zip(rowids, blobs)]),
            })
            cells = extract_blobs(data, "t", "payload")
            cases += 1
            if [c.bytes for c in cells] != blobs or [c.rowid for c in cells] != rowids:
                failures.append(f"page={page_size} rows={rows}")
    verdict(4, not failures, f"{cases} fixtures over page sizes 512-65536, rows 0-1000, blobs 0-3x page; "
                             f"failures: {failures or 'none'}")


# 5 ---------------------------------------------------------------------------

def test_criterion_5_viewer_shapes(tmp_path, capsys, verdict):
    planted = build_viewer_tree(tmp_path / "ev")
    reports = {}
    for threads in (1, 8):
        out = tmp_path / f"out{threads}"
        code = main(["scan", str(tmp_path / "ev"), "--out", str(out), "--threads", str(threads)])
        assert code == 0
        doc = json.loads((out / "report.json").read_text())
        del doc["started"], doc["finished"]
        reports[threads] = doc
    records = reports[1]["records"]
    expected_method = {"Adobe Lightroom": "sqlite_blob", "FastStone": "carve", "Zoner": "loose_file",
                       "ACDSee": "carve"}
    extracted = Counter((r["viewer"], r["method"], r["sha256"]) for r in records if r["status"] == "extracted")
    missing = [(v, i) for v, m in expected_method.items() for i, img in enumerate(planted[v])
               if extracted[(v, m, sha(img))] != 1]
    xn = [r for r in records if r["viewer"] == "XnView"]
    xn_ok = (sorted(r["sha256"] for r in xn) == sorted(map(sha, planted["XnView"]))
             and all(r["status"] == "flagged" and r["image_kind"] == "obfuscated/unknown" for r in xn))
    same = json.dumps(reports[1]) == json.dumps(reports[8])
    files_same = sorted(os.listdir(tmp_path / "out1/images")) == sorted(os.listdir(tmp_path / "out8/images"))
    n_planted = sum(len(planted[v]) for v in expected_method)
    verdict(5, not missing and xn_ok and same and files_same,
            f"{n_planted - len(missing)}/{n_planted} planted images extracted with expected methods; "
            f"XnView {len(xn)} flagged={xn_ok}; report identical for 1 vs 8 threads={same and files_same}")


# 6 ---------------------------------------------------------------------------

def test_criterion_6_raw_carve_of_sqlite(tmp_path, capsys, verdict):
    imgs = [jpeg(600 + i, 64, 56) for i in range(8)]
    db = tmp_path / "lr.db"
    lightroom_db(db, imgs, page_size=512)
    smallest = min(map(len, imgs))
    code_carve, doc = carve_cli(db, tmp_path / "carved", 1, capsys)
    main(["sqlite-dump", str(db), "--out", str(tmp_path / "dumped"), "--json"])
    dumped = json.loads(capsys.readouterr().out)
    got = sorted(sha(p.read_bytes()) for p in (tmp_path / "dumped").iterdir())
    ok = (smallest > 512 and code_carve == 2 and doc["restored"] == 0
          and dumped["blobs"] == len(imgs) and got == sorted(map(sha, imgs)))
    verdict(6, ok, f"raw carve at block 1 restored {doc['restored']}; sqlite-dump recovered "
                   f"{dumped['blobs']}/{len(imgs)} (blobs {smallest}+ bytes, page 512)")


# 7 ---------------------------------------------------------------------------

GIB = 1 << 30


def build_gib_tree(root: Path) -> dict:
    """About 1 GiB of evidence; most bytes sit in files the registry matches."""
    rng = random.Random(7)
    base = [jpeg(700 + i, rng.randint(120, 200), rng.randint(90, 160), 90) for i in range(40)]
    serial = iter(range(10**9))

    def thumbs(total: int) -> list[bytes]:
        out, size = [], 0
        while size < total:
            img = unique_jpeg(rng.choice(base), next(serial))
            out.append(img)
            size += len(img)
        return out

    planted = Counter()
    for cat in range(6):
        for k in (1, 2, 3):
            imgs = thumbs(20 << 20)
            planted["ACDSee"] += len(imgs)
            write(root / f"{VIEWER_ROOT}/Local/ACDSystems/Catalogs/{cat}/Default/thumb{k}.fpt",
                  raw_store(imgs, k))
    imgs = thumbs(150 << 20)
    planted["FastStone"] += len(imgs)
    write(root / f"{VIEWER_ROOT}/Roaming/FastStone/FSIV/FSViewer.db", raw_store(imgs))

    tmp = root.parent / "dbtmp"
    tmp.mkdir()
    imgs = thumbs(200 << 20)
    planted["Adobe Lightroom"] += len(imgs)
    write(root / "Users/u/Pictures/Lightroom/Cat/Cat Previews.lrdata/root pixel.db",
          lightroom_db(tmp / "lr.db", imgs))
    data, blobs = xnview_db(tmp / "xn.db", 25_000)
    write(root / f"{VIEWER_ROOT}/Roaming/XnView/XnView.db", data)
    planted["XnView"] += len(blobs)
    shutil.rmtree(tmp)

    for i, img in enumerate(thumbs(50 << 20)):
        write(root / f"{VIEWER_ROOT}/Local/Zoner/ZPS18/ZPSCache.dat/{i % 97:03d}/{i:08X}", img)
        planted["Zoner"] += 1

    # Unmatched user data tops the tree up to 1 GiB.
    size = sum(p.stat().st_size for p in root.rglob("*") if p.is_file())
    i = 0
    while size < GIB:
        chunk = min(8 << 20, GIB - size)
        write(root / f"Users/u/Documents/d{i // 50}/file{i}.dat", rng.randbytes(chunk))
        size += chunk
        i += 1
    return {"bytes": size, "planted": planted}


def test_criterion_7_throughput(tmp_path, capsys, verdict):
    root = tmp_path / "ev"
    info = build_gib_tree(root)
    try:
        t0 = time.perf_counter()
        code = main(["scan", str(root), "--out", str(tmp_path / "out"), "--threads", "4"])
        elapsed = time.perf_counter() - t0
        doc = json.loads((tmp_path / "out/report.json").read_text())
        counts = Counter(r["viewer"] for r in doc["records"] if r["status"] in ("extracted", "flagged"))
        complete = all(counts[v] == n for v, n in info["planted"].items())
        ok = code == 0 and info["bytes"] >= GIB and elapsed < 60 and complete
        verdict(7, ok, f"{info['bytes'] / GIB:.2f} GiB tree scanned in {elapsed:.1f} s (limit 60 s); "
                       f"{sum(counts.values())} records, all planted recovered={complete}")
    finally:
        shutil.rmtree(root, ignore_errors=True)
        shutil.rmtree(tmp_path / "out", ignore_errors=True)


# 8 ---------------------------------------------------------------------------

class Hang(Exception):
    pass


def _alarm(signum, frame):
    raise Hang()


def mutate(rng: random.Random, data: bytes) -> bytes:
    buf = bytearray(data)
    for _ in range(rng.randint(1, 8)):
        op = rng.randrange(7)
        if not buf:
            buf += rng.randbytes(rng.randint(1, 64))
        pos = rng.randrange(len(buf))
        if op == 0:
            buf[pos] ^= 1 << rng.randrange(8)
        elif op == 1:
            buf[pos] = rng.choice([0x00, 0xFF, 0xD8, 0xD9, 0xDA, 0xC0, 0xE1, rng.randrange(256)])
        elif op == 2:
            del buf[pos:]
        elif op == 3:
            buf[pos:pos] = rng.randbytes(rng.randint(1, 32))
        elif op == 4:
            del buf[pos:pos + rng.randint(1, 64)]
        elif op == 5:
            a = rng.randrange(len(buf))
            buf[pos:pos] = buf[a:a + rng.randint(1, 256)]
        else:
            buf[pos:pos + 2] = struct.pack(">H", rng.choice([0, 1, 2, 3, 0xFFFF, rng.randrange(65536)]))
    return bytes(buf)


def test_criterion_8_fuzz(tmp_path, verdict):
    rng = random.Random(8)
    jpegs = [jpeg(800), jpeg(801, 7, 5, 30), jpeg(802, progressive=True), jpeg(803, restart_marker_rows=1),
             jpeg(804, optimize=True), jpeg_with_exif_thumbnail(5), jpeg(805, 1, 1)]
    headers = [make_db(tmp_path / f"h{ps}.db", ps, {"t": ("x", [(1,)])})[:100]
               for ps in (512, 1024, 4096, 65536)]
    crashes, hangs = [], 0
    calls = Counter()
    slowest = 0.0
    old = signal.signal(signal.SIGALRM, _alarm)
    deadline = time.monotonic() + FUZZ_SECONDS
    try:
        while time.monotonic() < deadline:
            for _ in range(200):
                r = rng.random()
                if r < 0.15:
                    data = rng.randbytes(rng.randint(0, 4096))
                elif r < 0.25:
                    data = b"\xff\xd8\xff" + rng.randbytes(rng.randint(0, 512))
                elif r < 0.3:
                    data = b"SQLite format 3\x00" + rng.randbytes(rng.randint(0, 120))
                elif r < 0.75:
                    data = mutate(rng, rng.choice(jpegs))
                else:
                    data = mutate(rng, rng.choice(headers))
                for name in ("validate_jpeg", "parse_header"):
                    t0 = time.perf_counter()
                    signal.setitimer(signal.ITIMER_REAL, 5.0)
                    try:
                        if name == "validate_jpeg":
                            rep = validate_jpeg(data)
                            assert 0 <= rep.byte_length_consumed <= len(data)
                            assert all(0 < o < rep.byte_length_consumed for o in rep.embedded_jpeg_offsets)
                            assert not rep.valid or rep.failure_reason is None
                        else:
                            try:
                                hdr = parse_header(data)
                                assert 480 <= hdr.usable_size <= hdr.page_size <= 65536
                            except SqliteError:
                                pass
                    except Hang:
                        hangs += 1
                        crashes.append((name, "hang", data[:64].hex()))
                    except Exception as exc:  # noqa: BLE001 - any escape is a finding
                        crashes.append((name, repr(exc), data[:64].hex()))
                    finally:
                        signal.setitimer(signal.ITIMER_REAL, 0)
                    slowest = max(slowest, time.perf_counter() - t0)
                    calls[name] += 1
    finally:
        signal.signal(signal.SIGALRM, old)
    verdict(8, not crashes,
            f"{FUZZ_SECONDS:.0f} s fuzz: {calls['validate_jpeg']} validate_jpeg + {calls['parse_header']} "
            f"parse_header calls, {len(crashes) - hangs} crashes, {hangs} hangs, slowest call "
            f"{slowest * 1000:.1f} ms" + (f"; first: {crashes[0]}" if crashes else ""))
