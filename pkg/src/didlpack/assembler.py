"""Build packages from a JSON manifest and unpack them into plain files.

Manifest (UTF-8 JSON)::

    {
      "packageId": "info:lanl-repo/i/...",            # optional
      "contentId": "urn:foo/015997845",
      "resources": [
        {"source": "pict.tiff", "mimeType": "image/tiff",
         "embed": false, "contentEncodings": [], "group": "master"}
      ],
      "repInfo": [{"target": "master", "path": "jhove-tiff.xml"}],
      "pdi": ["premis.xml"],
      "fixity": {"enabled": true, "algorithmUri": "http://www.w3.org/2001/04/xmlenc#sha256"}
    }

A ``repInfo`` target is either a group key or the 0-based index of an entry
in ``resources``.  Relative paths are resolved against the manifest's
directory; ``source`` may also be an absolute file/http/https URI.
"""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import BuildFailed, DidlError, ManifestSemantics, ManifestSyntax, ProfileBlocked
from .fixity import (
    SHA256,
    ALGORITHMS,
    Status,
    VerificationOutcome,
    attach_package_fixity,
    compute_digest,
    make_fixity_statement,
    verify_component_fixity,
    verify_package_fixity,
)
from .model import (
    Component,
    Descriptor,
    DidlDocument,
    Item,
    NamespaceRegistry,
    Resource,
    SemanticKind,
    Statement,
    XmlFragment,
    find_statements,
    get_content_identifier,
    is_absolute_uri,
    media_type,
    uri_scheme,
    DII_NS,
    DEFAULT_REGISTRY,
)
from .profile import validate_profile
from .resources import (
    FETCH_SCHEMES,
    Fetcher,
    check_bit_equivalence,
    path_to_file_uri,
    resolve_all,
    resolve_resource,
)

log = logging.getLogger(__name__)

EXTENSIONS = {
    "image/tiff": "tiff",
    "image/jp2": "jp2",
    "application/xml": "xml",
}


def extension_for(mime: str) -> str:
    return EXTENSIONS.get(media_type(mime), "bin")


@dataclass(frozen=True)
class ManifestResource:
    source: str
    mime_type: str
    embed: bool = False
    content_encodings: tuple[str, ...] = ()
    group: str | None = None


@dataclass(frozen=True)
class PackageManifest:
    content_id: str
    resources: tuple[ManifestResource, ...]
    package_id: str | None = None
    rep_info: tuple[tuple[str | int, Path], ...] = ()
    pdi: tuple[Path, ...] = ()
    fixity_enabled: bool = False
    fixity_algorithm: str = SHA256

    def component_groups(self) -> list[list[int]]:
        """Resource indices per component, in manifest order of first appearance."""
        groups: list[list[int]] = []
        by_key: dict[str, list[int]] = {}
        for i, r in enumerate(self.resources):
            if r.group is None:
                groups.append([i])
            elif r.group in by_key:
                by_key[r.group].append(i)
            else:
                by_key[r.group] = [i]
                groups.append(by_key[r.group])
        return groups

    def component_of(self, target: str | int) -> int:
        for ci, members in enumerate(self.component_groups()):
            for i in members:
                if (isinstance(target, int) and i == target) or \
                        (isinstance(target, str) and self.resources[i].group == target):
                    return ci
        raise ManifestSemantics(f"repInfo target {target!r} names no resource or group")


# --------------------------------------------------------------------------
# manifest loading
# --------------------------------------------------------------------------

def _expect(value: Any, kind, pointer: str, optional: bool = False):
    if value is None and optional:
        return None
    if kind is str and isinstance(value, str):
        return value
    if kind is bool and isinstance(value, bool):
        return value
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind in (list, dict) and isinstance(value, kind):
        return value
    raise ManifestSyntax(f"expected {kind.__name__}, got {type(value).__name__}", pointer=pointer)


def _source_uri(source: str, base_dir: Path) -> str:
    if uri_scheme(source) in FETCH_SCHEMES:
        return source
    path = Path(source)
    if not path.is_absolute():
        path = base_dir / path
    return path_to_file_uri(path)


def load_manifest(data: bytes | str, base_dir: str | Path = ".") -> PackageManifest:
    base_dir = Path(base_dir)
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ManifestSyntax(f"manifest is not UTF-8: {exc}") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ManifestSyntax(exc.msg, line=exc.lineno) from None
    _expect(doc, dict, "")

    content_id = _expect(doc.get("contentId"), str, "/contentId")
    package_id = _expect(doc.get("packageId"), str, "/packageId", optional=True)
    resources = []
    for i, entry in enumerate(_expect(doc.get("resources", []), list, "/resources")):
        ptr = f"/resources/{i}"
        _expect(entry, dict, ptr)
        codecs = _expect(entry.get("contentEncodings", []), list, f"{ptr}/contentEncodings")
        resources.append(ManifestResource(
            source=_source_uri(_expect(entry.get("source"), str, f"{ptr}/source"), base_dir),
            mime_type=_expect(entry.get("mimeType"), str, f"{ptr}/mimeType"),
            embed=_expect(entry.get("embed", False), bool, f"{ptr}/embed"),
            content_encodings=tuple(_expect(c, str, f"{ptr}/contentEncodings/{k}")
                                    for k, c in enumerate(codecs)),
            group=_expect(entry.get("group"), str, f"{ptr}/group", optional=True),
        ))
    rep_info = []
    for i, entry in enumerate(_expect(doc.get("repInfo", []), list, "/repInfo")):
        ptr = f"/repInfo/{i}"
        _expect(entry, dict, ptr)
        target = entry.get("target")
        if not isinstance(target, int) or isinstance(target, bool):
            target = _expect(target, str, f"{ptr}/target")
        rep_info.append((target, base_dir / _expect(entry.get("path"), str, f"{ptr}/path")))
    pdi = tuple(base_dir / _expect(p, str, f"/pdi/{i}")
                for i, p in enumerate(_expect(doc.get("pdi", []), list, "/pdi")))
    fixity = _expect(doc.get("fixity", {}), dict, "/fixity")
    manifest = PackageManifest(
        content_id=content_id,
        resources=tuple(resources),
        package_id=package_id,
        rep_info=tuple(rep_info),
        pdi=pdi,
        fixity_enabled=_expect(fixity.get("enabled", False), bool, "/fixity/enabled"),
        fixity_algorithm=_expect(fixity.get("algorithmUri", SHA256), str, "/fixity/algorithmUri"),
    )
    check_manifest(manifest)
    return manifest


def check_manifest(m: PackageManifest) -> None:
    if not is_absolute_uri(m.content_id):
        raise ManifestSemantics("contentId must be an absolute URI")
    if m.package_id is not None and not is_absolute_uri(m.package_id):
        raise ManifestSemantics("packageId must be an absolute URI")
    if not m.resources:
        raise ManifestSemantics("≥1 resource")
    for i, r in enumerate(m.resources):
        if not r.mime_type.strip():
            raise ManifestSemantics(f"resources[{i}]: mimeType must be non-empty")
    for target, _ in m.rep_info:
        if isinstance(target, int) and not 0 <= target < len(m.resources):
            raise ManifestSemantics(f"repInfo target index {target} out of range")
        m.component_of(target)
    if m.fixity_enabled and m.fixity_algorithm not in ALGORITHMS:
        raise ManifestSemantics(f"unsupported fixity algorithm {m.fixity_algorithm}")


# --------------------------------------------------------------------------
# build
# --------------------------------------------------------------------------

def _identifier_statement(content_id: str) -> Statement:
    escaped = content_id.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    raw = f'<dii:Identifier xmlns:dii="{DII_NS}">{escaped}</dii:Identifier>'.encode("utf-8")
    return Statement.xml(XmlFragment(raw, DII_NS, "Identifier"))


def _xml_statement(path: Path) -> Statement:
    try:
        return Statement.xml(XmlFragment.from_file(path))
    except (OSError, ValueError) as exc:
        raise ManifestSemantics(f"{path}: cannot use as XML statement: {exc}") from None


def build_package(m: PackageManifest, f: Fetcher) -> DidlDocument:
    """Assemble an OAIS-profiled DIDL document from *m*."""
    check_manifest(m)
    refs = [Resource(r.mime_type, ref=r.source, content_encodings=r.content_encodings)
            for r in m.resources]
    need_bytes = [i for i, r in enumerate(m.resources) if r.embed or m.fixity_enabled]
    resolved: dict[int, bytes] = {}
    for i, res in zip(need_bytes, resolve_all([refs[i] for i in need_bytes], f)):
        if isinstance(res, DidlError):
            raise BuildFailed(i, res)
        resolved[i] = res.data

    resources = []
    for i, (entry, ref) in enumerate(zip(m.resources, refs)):
        if entry.embed:
            resources.append(Resource(entry.mime_type, data=base64.b64encode(resolved[i]).decode("ascii"),
                                      content_encodings=entry.content_encodings))
        else:
            resources.append(ref)

    components = []
    for ci, members in enumerate(m.component_groups()):
        descriptors = [Descriptor((_xml_statement(path),))
                       for target, path in m.rep_info if m.component_of(target) == ci]
        if m.fixity_enabled:
            records = [compute_digest(resolved[i], m.fixity_algorithm,
                                      resources[i].ref) for i in members]
            descriptors.append(Descriptor((make_fixity_statement(records),)))
        components.append(Component(None, tuple(descriptors), tuple(resources[i] for i in members)))

    item_descriptors = [Descriptor((_identifier_statement(m.content_id),))]
    item_descriptors += [Descriptor((_xml_statement(path),)) for path in m.pdi]
    doc = DidlDocument.of(Item(None, tuple(item_descriptors), tuple(components)), m.package_id)
    if m.fixity_enabled:
        doc = attach_package_fixity(doc, m.fixity_algorithm)
    return doc


# --------------------------------------------------------------------------
# unpack
# --------------------------------------------------------------------------

@dataclass
class UnpackResult:
    """What :func:`unpack_package` wrote and how verification went.

    ``status`` is ``ok``, ``failed`` (bit-equivalence or fixity mismatch) or
    ``partial`` (some resources could not be fetched).
    """

    files: dict[str, str] = field(default_factory=dict)
    report: dict = field(default_factory=dict)
    status: str = "ok"

    @property
    def exit_code(self) -> int:
        return {"ok": 0, "failed": 1, "partial": 3}[self.status]


def unpack_package(doc: DidlDocument, f: Fetcher, out_dir: str | Path, *,
                   lenient: bool = False, registry: NamespaceRegistry | None = None) -> UnpackResult:
    registry = registry or DEFAULT_REGISTRY
    profile = validate_profile(doc, lenient=lenient, registry=registry)
    if not profile.passed:
        raise ProfileBlocked(profile)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = UnpackResult()
    item = doc.item

    def write(name: str, data: bytes) -> None:
        (out / name).write_bytes(data)
        result.files[name] = compute_digest(data).hex

    fetch_failed = verification_failed = False
    component_fixity, bit_equivalence = [], []
    for ci, comp in enumerate(item.components, 1):
        eq = check_bit_equivalence(comp, f)
        bit_equivalence.append({"component": ci, **eq.to_json()})
        if not eq.complete:
            fetch_failed = True
        elif not eq.equivalent:
            verification_failed = True
        try:
            first = resolve_resource(comp.resources[0], f)
        except DidlError as exc:
            log.warning("component %d: %s", ci, exc)
            fetch_failed = True
        else:
            write(f"{ci}-1.{extension_for(comp.resources[0].mime_type)}", first.data)
        for k, s in enumerate(find_statements(comp, SemanticKind.REPRESENTATION_INFO, registry), 1):
            write(f"repinfo-{ci}-{k}.xml", s.fragment.raw)
        try:
            outcome = verify_component_fixity(comp, f, registry)
        except DidlError as exc:
            outcome = VerificationOutcome(Status.UNVERIFIABLE)
            log.warning("component %d fixity: %s", ci, exc)
        component_fixity.append({"component": ci, **outcome.to_json()})
        if outcome.status == Status.MISMATCH:
            verification_failed = True
        elif outcome.status == Status.UNVERIFIABLE:
            fetch_failed = True

    identifier = get_content_identifier(item, registry)
    write("package.id", (identifier + "\n").encode("utf-8"))
    k = 0
    for s in (s for d in item.descriptors for s in d.statements):
        if s.fragment is None or registry.classify_namespace(s.fragment.namespace) == SemanticKind.IDENTIFIER:
            continue
        k += 1
        write(f"pdi-{k}.xml", s.fragment.raw)

    try:
        package = verify_package_fixity(doc, registry)
    except DidlError as exc:
        package = VerificationOutcome(Status.UNVERIFIABLE)
        log.warning("package fixity: %s", exc)
    if package.status == Status.MISMATCH:
        verification_failed = True

    result.status = "failed" if verification_failed else "partial" if fetch_failed else "ok"
    result.report = {
        **profile.to_json(),
        "fixity": {"components": component_fixity, "package": package.to_json()},
        "bitEquivalence": bit_equivalence,
        "files": dict(sorted(result.files.items())),
        "status": result.status,
    }
    (out / "report.json").write_text(json.dumps(result.report, indent=2) + "\n", encoding="utf-8")
    return result
