"""Command-line interface: ``didlpack <command> ...``.

Exit codes: 0 success, 1 validation or verification failure, 2 usage
error, 3 I/O or fetch error.  Reports and documents go to standard output
(or ``-o``/``--report`` files); human-readable messages go to standard error.
"""

from __future__ import annotations

import argparse
import dataclasses
import enum
import json
import logging
import sys
from pathlib import Path

from .assembler import build_package, extension_for, load_manifest, unpack_package
from .errors import (
    BuildFailed,
    DidlError,
    FetchFailed,
    MalformedFixity,
    MalformedXml,
    ManifestSemantics,
    ManifestSyntax,
    ProfileBlocked,
    ProfileShape,
    SchemeUnsupported,
    WriteFailed,
)
from .fixity import Status, attach_package_fixity, verify_component_fixity, verify_package_fixity
from .model import NamespaceRegistry, get_content_identifier, uri_scheme
from .profile import validate_profile
from .resources import (
    FETCH_SCHEMES,
    check_bit_equivalence,
    default_fetcher,
    embed_resource,
    externalize_resource,
    read_fetch_map,
)
from .xmlio import parse_didl, serialize_didl

log = logging.getLogger("didlpack")


class ExitStatus(enum.IntEnum):
    OK = 0
    FAILURE = 1
    USAGE = 2
    IO = 3


class _Fail(Exception):
    def __init__(self, code: ExitStatus, message: str):
        self.code = code
        super().__init__(message)


def _say(message: str) -> None:
    print(message, file=sys.stderr)


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise _Fail(ExitStatus.IO, f"cannot read {path}: {exc}") from None


def _emit(data: bytes, output: str | None) -> None:
    if output:
        try:
            Path(output).write_bytes(data)
        except OSError as exc:
            raise _Fail(ExitStatus.IO, f"cannot write {output}: {exc}") from None
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()


def _emit_json(obj, output: str | None = None) -> None:
    _emit((json.dumps(obj, indent=2) + "\n").encode("utf-8"), output)


def _registry(args) -> NamespaceRegistry:
    if not args.namespaces:
        return NamespaceRegistry.default()
    try:
        return NamespaceRegistry.from_file(args.namespaces)
    except OSError as exc:
        raise _Fail(ExitStatus.IO, f"cannot read {args.namespaces}: {exc}") from None
    except ValueError as exc:
        raise _Fail(ExitStatus.USAGE, str(exc)) from None


def _fetcher(args):
    fetch_map = None
    if args.fetch_map:
        try:
            fetch_map = read_fetch_map(args.fetch_map)
        except OSError as exc:
            raise _Fail(ExitStatus.IO, f"cannot read {args.fetch_map}: {exc}") from None
        except ValueError as exc:
            raise _Fail(ExitStatus.USAGE, str(exc)) from None
    return default_fetcher(allow_network=args.allow_network, fetch_map=fetch_map)


def _load(path: str, strict_shape: bool = True):
    outcome = parse_didl(_read(path), strict_shape=strict_shape)
    for w in outcome.warnings:
        _say(f"{path}: warning {w.code} at {w.location}: {w.message}")
    return outcome.document


def _load_or_fail(path: str):
    try:
        return _load(path)
    except (MalformedXml, ProfileShape) as exc:
        raise _Fail(ExitStatus.FAILURE, f"{path}: {exc}") from None


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_build(args) -> int:
    manifest_path = Path(args.manifest)
    try:
        manifest = load_manifest(_read(args.manifest), base_dir=manifest_path.parent)
        doc = build_package(manifest, _fetcher(args))
    except (ManifestSyntax, ManifestSemantics) as exc:
        raise _Fail(ExitStatus.FAILURE, f"{args.manifest}: {exc}") from None
    except BuildFailed as exc:
        io = isinstance(exc.cause, (FetchFailed, SchemeUnsupported))
        raise _Fail(ExitStatus.IO if io else ExitStatus.FAILURE, str(exc)) from None
    _emit(serialize_didl(doc), args.output)
    return ExitStatus.OK


def cmd_validate(args) -> int:
    try:
        doc = _load(args.document, strict_shape=False)
    except (MalformedXml, ProfileShape) as exc:
        _say(f"{args.document}: {exc}")
        report = {"passed": False, "findings": [{
            "ruleId": "PARSE", "severity": "error", "location": "/", "message": str(exc)}]}
    else:
        report = validate_profile(doc, lenient=args.lenient, registry=_registry(args)).to_json()
    _emit_json(report, args.report)
    n_err = sum(1 for f in report["findings"] if f["severity"] == "error")
    _say(f"{args.document}: {'passed' if report['passed'] else 'FAILED'} "
         f"({n_err} error(s), {len(report['findings'])} finding(s))")
    return ExitStatus.OK if report["passed"] else ExitStatus.FAILURE


def cmd_verify(args) -> int:
    doc = _load_or_fail(args.document)
    registry = _registry(args)
    fetcher = _fetcher(args)
    everything = not (args.components or args.package or args.bit_equivalence)
    report: dict = {}
    statuses: list[str] = []
    try:
        if everything or args.components:
            report["components"] = []
            for ci, comp in enumerate(doc.item.components, 1):
                outcome = verify_component_fixity(comp, fetcher, registry)
                statuses.append(outcome.status.value)
                report["components"].append({"component": ci, **outcome.to_json()})
        if everything or args.package:
            outcome = verify_package_fixity(doc, registry)
            statuses.append(outcome.status.value)
            report["package"] = outcome.to_json()
    except MalformedFixity as exc:
        raise _Fail(ExitStatus.FAILURE, f"malformed fixity information: {exc}") from None
    if everything or args.bit_equivalence:
        report["bitEquivalence"] = []
        for ci, comp in enumerate(doc.item.components, 1):
            eq = check_bit_equivalence(comp, fetcher)
            report["bitEquivalence"].append({"component": ci, **eq.to_json()})
            if not eq.complete:
                statuses.append(Status.UNVERIFIABLE.value)
            elif not eq.equivalent:
                statuses.append(Status.MISMATCH.value)
    _emit_json(report)
    if Status.MISMATCH.value in statuses:
        _say("verification FAILED: digest mismatch")
        return ExitStatus.FAILURE
    if Status.UNVERIFIABLE.value in statuses:
        _say("verification incomplete: some content could not be resolved")
        return ExitStatus.IO
    if Status.NO_FIXITY_INFO.value in statuses:
        _say("note: some targets carry no fixity information")
    return ExitStatus.OK


def cmd_unpack(args) -> int:
    doc = _load_or_fail(args.document)
    try:
        result = unpack_package(doc, _fetcher(args), args.directory,
                                lenient=args.lenient, registry=_registry(args))
    except ProfileBlocked as exc:
        _emit_json(exc.report.to_json())
        raise _Fail(ExitStatus.FAILURE, str(exc)) from None
    except OSError as exc:
        raise _Fail(ExitStatus.IO, f"cannot write to {args.directory}: {exc}") from None
    _say(f"unpacked {len(result.files)} file(s) into {args.directory}: {result.status}")
    return result.exit_code


def cmd_inspect(args) -> int:
    doc = _load_or_fail(args.document)
    try:
        identifier = get_content_identifier(doc.item, _registry(args))
    except DidlError as exc:
        identifier = f"<{exc}>"
    rows = [("component", "resource", "mimeType", "provision", "location")]
    for ci, comp in enumerate(doc.item.components, 1):
        for ri, res in enumerate(comp.resources, 1):
            if res.by_reference:
                prov, where = "by-reference", res.ref
            elif res.by_value:
                prov, where = "by-value", f"{len(res.data)} base64 chars"
            else:
                prov, where = "invalid", "-"
            if res.content_encodings:
                prov += f" [{' '.join(res.content_encodings)}]"
            rows.append((str(ci), str(ri), res.mime_type or "-", prov, where))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = [f"documentId: {doc.document_id or '-'}",
             f"contentId:  {identifier}",
             f"infoBlocks: {len(doc.info_blocks)}",
             ""]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    _emit(("\n".join(lines) + "\n").encode("utf-8"), None)
    return ExitStatus.OK


def _reseal(before, after, registry):
    """Refresh package fixity after a provisioning change, if the input had any."""
    outcome = verify_package_fixity(before, registry)
    if outcome.status == Status.NO_FIXITY_INFO:
        return after
    if outcome.status != Status.MATCH:
        raise _Fail(ExitStatus.FAILURE,
                    f"package fixity of the input is {outcome.status.value}; refusing to reseal")
    _say("package fixity refreshed for the converted document")
    return attach_package_fixity(after, registry=registry)


def _map_resources(doc, fn):
    item = doc.item
    comps = []
    for ci, comp in enumerate(item.components, 1):
        comps.append(dataclasses.replace(comp, resources=tuple(
            fn(ci, ri, res) for ri, res in enumerate(comp.resources, 1))))
    return dataclasses.replace(doc, items=(dataclasses.replace(item, components=tuple(comps)),))


def _convert_error(exc: DidlError) -> _Fail:
    io = isinstance(exc, (FetchFailed, SchemeUnsupported, WriteFailed))
    return _Fail(ExitStatus.IO if io else ExitStatus.FAILURE, str(exc))


def cmd_embed(args) -> int:
    doc = _load_or_fail(args.document)
    fetcher = _fetcher(args)
    try:
        converted = _map_resources(doc, lambda ci, ri, r: embed_resource(r, fetcher))
        converted = _reseal(doc, converted, _registry(args))
        data = serialize_didl(converted)
    except DidlError as exc:
        raise _convert_error(exc) from None
    _emit(data, args.output)
    return ExitStatus.OK


def cmd_externalize(args) -> int:
    base = args.base_uri if args.base_uri.endswith("/") else args.base_uri + "/"
    if uri_scheme(base) not in FETCH_SCHEMES:
        raise _Fail(ExitStatus.USAGE, f"--base-uri must be an absolute {'/'.join(FETCH_SCHEMES)} URI")
    doc = _load_or_fail(args.document)
    fetcher = _fetcher(args)
    out = Path(args.directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _Fail(ExitStatus.IO, f"cannot create {out}: {exc}") from None

    def convert(ci, ri, res):
        if not res.by_value:
            return res
        name = f"{ci}-{ri}.{extension_for(res.mime_type)}"
        try:
            with open(out / name, "wb") as sink:
                return externalize_resource(res, fetcher, base + name, sink)
        except OSError as exc:
            raise WriteFailed(f"cannot write {out / name}: {exc}") from None

    try:
        converted = _map_resources(doc, convert)
        converted = _reseal(doc, converted, _registry(args))
        data = serialize_didl(converted)
    except DidlError as exc:
        raise _convert_error(exc) from None
    _emit(data, args.output)
    return ExitStatus.OK


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--allow-network", action="store_true",
                        help="permit http/https fetching (off by default)")
    common.add_argument("--fetch-map", metavar="FILE",
                        help="URI<TAB>path overrides, one per line")
    common.add_argument("--namespaces", metavar="FILE",
                        help="namespace registry file: '<kind> <namespace-uri>' lines")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="didlpack", description="OAIS-profiled MPEG-21 DIDL packaging toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("build", parents=[common], help="build a package from a JSON manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("validate", parents=[common], help="static profile validation")
    p.add_argument("document")
    p.add_argument("--lenient", action="store_true", help="downgrade PR-03 to a warning")
    p.add_argument("--report", metavar="OUT.json")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("verify", parents=[common],
                       help="check fixity and bit-equivalence (all checks by default)")
    p.add_argument("document")
    p.add_argument("--components", action="store_true")
    p.add_argument("--package", action="store_true")
    p.add_argument("--bit-equivalence", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("unpack", parents=[common], help="write resources and sidecars to a directory")
    p.add_argument("document")
    p.add_argument("-d", "--directory", required=True)
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(func=cmd_unpack)

    p = sub.add_parser("inspect", parents=[common], help="summarize a package")
    p.add_argument("document")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("embed", parents=[common], help="convert every resource to By Value")
    p.add_argument("document")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("externalize", parents=[common],
                       help="write By Value resources to files and reference them")
    p.add_argument("document")
    p.add_argument("--base-uri", required=True)
    p.add_argument("-d", "--directory", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_externalize)
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args))
    except _Fail as exc:
        _say(f"didlpack {args.command}: {exc}")
        return int(exc.code)
    except DidlError as exc:
        _say(f"didlpack {args.command}: {exc}")
        return int(ExitStatus.FAILURE)


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
