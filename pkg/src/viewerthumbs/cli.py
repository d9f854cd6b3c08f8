"""Command-line front end.

Exit codes: 0 success, 2 ran cleanly but found nothing, 1 fatal error,
64 usage error. Human-readable output goes to stderr; with ``--json`` a
machine-readable summary is printed on stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .carver import CarveParams, HeaderMode, NestedPolicy, carve_entry
from .evidence import open_evidence
from .pipeline import OutputError, run, write_output
from .registry import RegistryError, built_in_registry, dump_registry, load_registry
from .sniffer import ImageKind, sniff, validate_jpeg
from .sqlite_reader import BadMagic, Database, SqliteError

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_NOTHING = 2
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="viewerthumbs", description="Recover image-viewer thumbnails from evidence.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def carve_flags(p, default_block):
        p.add_argument("--block-size", type=_positive, default=default_block,
                       help=f"header alignment in bytes (default {default_block})")
        p.add_argument("--loose-header", action="store_true", help="accept FF D8 instead of FF D8 FF")
        p.add_argument("--nested", action="store_true", help="also carve embedded thumbnails")
        p.add_argument("--min-size", type=int, default=CarveParams.min_size)
        p.add_argument("--max-size", type=int, default=CarveParams.max_size)

    scan = sub.add_parser("scan", help="run the full extraction over an evidence tree or file")
    scan.add_argument("evidence")
    scan.add_argument("--out", required=True, help="output directory")
    scan.add_argument("--registry", help="YAML file extending or overriding built-in viewers")
    carve_flags(scan, 512)
    scan.add_argument("--threads", type=_positive, default=1)
    scan.add_argument("--force", action="store_true", help="reuse a non-empty output directory")
    scan.add_argument("--report", help="write the report here instead of OUT/report.json")
    scan.add_argument("--json", action="store_true")

    carve = sub.add_parser("carve", help="carve JPEGs out of one file")
    carve.add_argument("file")
    carve.add_argument("--out", help="write carved images to this directory")
    carve_flags(carve, 512)
    carve.add_argument("--json", action="store_true")

    dump = sub.add_parser("sqlite-dump", help="extract blobs from a SQLite database file")
    dump.add_argument("file")
    dump.add_argument("--table")
    dump.add_argument("--column")
    dump.add_argument("--out", help="write blobs to this directory")
    dump.add_argument("--json", action="store_true")

    sn = sub.add_parser("sniff", help="identify an image file and validate JPEG structure")
    sn.add_argument("file")
    sn.add_argument("--json", action="store_true")

    reg = sub.add_parser("registry", help="show the effective viewer registry")
    reg.add_argument("action", nargs="?", choices=["list"], default="list")
    reg.add_argument("--registry", help="YAML file merged over the built-ins")
    reg.add_argument("--json", action="store_true")
    return parser


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _carve_params(args) -> CarveParams:
    try:
        return CarveParams(
            block_size=args.block_size,
            header_mode=HeaderMode.LOOSE if args.loose_header else HeaderMode.STRICT,
            min_size=args.min_size,
            max_size=args.max_size,
            nested_policy=NestedPolicy.ALSO_NESTED if args.nested else NestedPolicy.OUTERMOST_ONLY,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_registry(path):
    if path is None:
        return built_in_registry()
    try:
        return load_registry(Path(path).read_bytes())
    except RegistryError as exc:
        raise UsageError(f"registry {path}: {exc}") from None
    except OSError as exc:
        raise UsageError(f"registry {path}: {exc.strerror or exc}") from None


def _emit_json(args, doc) -> None:
    if args.json:
        print(json.dumps(doc, indent=2))


def cmd_scan(args) -> int:
    registry = _load_registry(args.registry)
    params = _carve_params(args)
    source = open_evidence(args.evidence)
    report = run(source, registry, params, args.out, workers=args.threads, force=args.force,
                 report_path=args.report)
    for viewer, counts in report.counts.items():
        parts = ", ".join(f"{n} {status}" for status, n in counts.items())
        _say(f"{viewer}: {parts}")
    _say(f"{len(report.records)} record(s), {len(report.diagnostics)} diagnostic(s); "
         f"report: {args.report or Path(args.out) / 'report.json'}")
    _emit_json(args, {"records": len(report.records), "counts": report.counts,
                      "diagnostics": len(report.diagnostics)})
    return EXIT_OK if report.records else EXIT_NOTHING


def cmd_carve(args) -> int:
    params = _carve_params(args)
    source = open_evidence(args.file)
    if source.kind.value != "single_file":
        raise UsageError(f"{args.file} is a directory")
    entry = source.enumerate()[0]
    hits = carve_entry(source, entry, params)
    names = []
    if args.out and hits:
        out = _mkdir(args.out)
        seen: dict[bytes, str] = {}
        for hit in hits:
            names.append(seen.setdefault(hit.bytes, write_output(hit.bytes, out, len(seen) + 1)))
    _say(f"Restored {len(hits)} pictures")
    _emit_json(args, {"restored": len(hits),
                      "hits": [{"offset": h.offset, "length": h.length, "nested": h.nested} for h in hits],
                      "outputs": names})
    return EXIT_OK if hits else EXIT_NOTHING


def cmd_sqlite_dump(args) -> int:
    data = Path(args.file).read_bytes()
    try:
        db = Database(data)
    except (BadMagic, SqliteError) as exc:
        _say(f"{args.file}: not a database ({exc})")
        return EXIT_FATAL
    if args.table:
        cells = db.extract_blobs(args.table, args.column)
    else:
        cells = db.scan_all_blobs()
    per_table = Counter(c.table for c in cells)
    for table, n in sorted(per_table.items()):
        _say(f"{table}: {n} blob(s)")
    for d in db.diagnostics:
        _say(f"warning: {d.kind}: {d.message}")
    names = []
    if args.out and cells:
        out = _mkdir(args.out)
        seen: dict[bytes, str] = {}
        for cell in cells:
            if cell.bytes:
                names.append(seen.setdefault(cell.bytes, write_output(cell.bytes, out, len(seen) + 1)))
    _emit_json(args, {"tables": dict(sorted(per_table.items())), "blobs": len(cells), "outputs": names})
    return EXIT_OK if cells else EXIT_NOTHING


def cmd_sniff(args) -> int:
    data = Path(args.file).read_bytes()
    kind = sniff(data)
    report = validate_jpeg(data) if kind is ImageKind.JPEG else None
    _say(f"{args.file}: {kind.value}")
    if report is not None:
        state = "valid" if report.valid else f"invalid ({report.failure_reason})"
        _say(f"  jpeg structure: {state}, {report.byte_length_consumed} bytes, "
             f"{len(report.embedded_jpeg_offsets)} embedded thumbnail(s)")
    _emit_json(args, {"kind": kind.value, "validation": report.to_dict() if report else None})
    return EXIT_OK


def cmd_registry(args) -> int:
    registry = _load_registry(args.registry)
    if args.json:
        print(json.dumps([s.to_dict() for s in registry.signatures], indent=2))
    else:
        sys.stdout.write(dump_registry(registry))
    return EXIT_OK


def _mkdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


COMMANDS = {
    "scan": cmd_scan,
    "carve": cmd_carve,
    "sqlite-dump": cmd_sqlite_dump,
    "sniff": cmd_sniff,
    "registry": cmd_registry,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        _say(f"usage error: {exc}")
        return EXIT_USAGE
    except (OutputError, OSError, SqliteError) as exc:
        _say(f"error: {exc}")
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
