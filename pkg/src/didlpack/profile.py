"""Static validation against the OAIS preservation profile for DIDL.

Rule catalog (severity in parentheses):

=====  ==================================================================
PR-01  exactly one top-level Item (error)
PR-02  no Item nested inside an Item (error)
PR-03  item carries a DII Identifier holding an absolute URI (error;
       warning in lenient mode; duplicates are a warning)
PR-04  every Component holds at least one Resource (error)
PR-05  every Resource, and every Statement, has a non-empty mimeType (error)
PR-06  a Resource is exactly one of By Reference / By Value (error)
PR-07  Resource ref scheme is http, https or file (warning)
PR-08  XML-typed Statements hold exactly one namespaced element; every
       Descriptor holds a Statement (error)
PR-09  Representation Information attached at item level (warning)
PR-10  fixity signatures stay within the digest subset and, on a Component,
       carry one Reference per Resource (error; ignored elements are info,
       deprecated digests a warning)
PR-11  DIDLDocumentId is an absolute URI (error)
PR-12  id attribute values are unique (error)
PR-13  By Value payloads are valid base64 (error)
PR-14  multi-resource Component: run the dynamic bit-equivalence check (info)
PR-15  misspelled XML-Signature namespace (warning)
=====  ==================================================================

Location paths follow ``/item/component[i]/resource[j]`` with 1-based
indices; ``/`` is the DIDL root and ``/didlinfo/block[i]`` an info block.
"""

from __future__ import annotations

import binascii
import json
import re
from dataclasses import dataclass

from .errors import MalformedFixity
from .fixity import SHA1, read_signature
from .model import (
    DEFAULT_REGISTRY,
    DSIG_NS_TYPO,
    Component,
    DidlDocument,
    Item,
    NamespaceRegistry,
    SemanticKind,
    Statement,
    XmlFragment,
    decode_base64,
    is_absolute_uri,
    uri_scheme,
)

ERROR, WARNING, INFO = "error", "warning", "info"
REF_SCHEMES = ("http", "https", "file")
_TYPO = DSIG_NS_TYPO.encode("ascii")


@dataclass(frozen=True)
class Finding:
    rule_id: str
    severity: str
    location: str
    message: str

    def to_json(self) -> dict:
        return {"ruleId": self.rule_id, "severity": self.severity,
                "location": self.location, "message": self.message}


@dataclass(frozen=True)
class ProfileReport:
    findings: tuple[Finding, ...]

    @property
    def passed(self) -> bool:
        return not any(f.severity == ERROR for f in self.findings)

    def rule_ids(self, *severities: str) -> set[str]:
        return {f.rule_id for f in self.findings if not severities or f.severity in severities}

    def to_json(self) -> dict:
        return {"passed": self.passed, "findings": [f.to_json() for f in self.findings]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


class _Validator:
    def __init__(self, registry: NamespaceRegistry, lenient: bool):
        self.registry = registry
        self.lenient = lenient
        self.found: list[tuple[int, Finding]] = []
        self.pos = 0
        self.ids: set[str] = set()

    def add(self, rule: str, severity: str, location: str, message: str) -> None:
        self.found.append((self.pos, Finding(rule, severity, location, message)))

    def visit(self) -> None:
        self.pos += 1

    def kind(self, s: Statement) -> SemanticKind | None:
        if s.fragment is None or not s.is_xml:
            return None
        return self.registry.classify_namespace(s.fragment.namespace)

    # -- nodes -------------------------------------------------------------
    def document(self, doc: DidlDocument) -> None:
        if doc.document_id is not None and not is_absolute_uri(doc.document_id):
            self.add("PR-11", ERROR, "/", f"DIDLDocumentId {doc.document_id!r} is not an absolute URI")
        if len(doc.items) != 1:
            self.add("PR-01", ERROR, "/", f"expected exactly one top-level Item, found {len(doc.items)}")
        for i, block in enumerate(doc.info_blocks, 1):
            self.visit()
            loc = f"/didlinfo/block[{i}]"
            self.typo(block, loc)
            if self.registry.classify_namespace(block.namespace) == SemanticKind.FIXITY:
                self.signature(block, loc, expected_refs=None)
        for n, item in enumerate(doc.items, 1):
            self.item(item, "/item" if n == 1 else f"/item[{n}]", top=True)

    def item(self, item: Item, base: str, top: bool) -> None:
        self.visit()
        self.unique_id(item.id, base)
        if top:
            self.identifier(item, base)
        self.descriptors(item, base, component=None)
        for i, comp in enumerate(item.components, 1):
            self.component(comp, f"{base}/component[{i}]")
        for i, nested in enumerate(item.items, 1):
            loc = f"{base}/item[{i}]"
            self.visit()
            self.add("PR-02", ERROR, loc, "nested Items are not used by the preservation profile")
            self.item(nested, loc, top=False)

    def identifier(self, item: Item, base: str) -> None:
        severity = WARNING if self.lenient else ERROR
        found = []
        for i, d in enumerate(item.descriptors, 1):
            for j, s in enumerate(d.statements, 1):
                if self.kind(s) == SemanticKind.IDENTIFIER and s.fragment.local_name == "Identifier":
                    found.append((f"{base}/descriptor[{i}]/statement[{j}]", s.fragment))
        if not found:
            self.add("PR-03", severity, base, "item carries no DII Identifier (Reference Information)")
            return
        loc, fragment = found[0]
        value = fragment.text().strip()
        if not is_absolute_uri(value):
            self.add("PR-03", severity, loc, f"DII Identifier {value!r} is not an absolute URI")
        for loc, _ in found[1:]:
            self.add("PR-03", WARNING, loc, "duplicate DII Identifier; the first one is used")

    def component(self, comp: Component, base: str) -> None:
        self.visit()
        self.unique_id(comp.id, base)
        if not comp.resources:
            self.add("PR-04", ERROR, base, "Component holds no Resource")
        elif len(comp.resources) > 1:
            self.add("PR-14", INFO, base,
                     f"{len(comp.resources)} resources declared bit-equivalent; "
                     "confirm with the dynamic bit-equivalence check")
        self.descriptors(comp, base, component=comp)
        for j, res in enumerate(comp.resources, 1):
            self.visit()
            loc = f"{base}/resource[{j}]"
            if not res.mime_type.strip():
                self.add("PR-05", ERROR, loc, "Resource lacks the mandatory mimeType")
            if (res.ref is None) == (res.data is None):
                which = "both a ref and an inline payload" if res.ref is not None else "neither a ref nor a payload"
                self.add("PR-06", ERROR, loc, f"Resource has {which}")
            if res.ref is not None and uri_scheme(res.ref) not in REF_SCHEMES:
                self.add("PR-07", WARNING, loc,
                         f"ref {res.ref!r} does not use one of the schemes {', '.join(REF_SCHEMES)}")
            if res.data is not None:
                try:
                    decode_base64(res.data)
                except (binascii.Error, ValueError) as exc:
                    self.add("PR-13", ERROR, loc, f"By Value payload is not valid base64: {exc}")

    def descriptors(self, node, base: str, component: Component | None) -> None:
        for i, d in enumerate(node.descriptors, 1):
            self.visit()
            dloc = f"{base}/descriptor[{i}]"
            if not d.statements:
                self.add("PR-08", ERROR, dloc, "Descriptor holds no Statement")
            for j, s in enumerate(d.statements, 1):
                self.visit()
                self.statement(s, f"{dloc}/statement[{j}]", component)

    def statement(self, s: Statement, loc: str, component: Component | None) -> None:
        if not s.mime_type.strip():
            self.add("PR-05", ERROR, loc, "Statement lacks the mandatory mimeType")
        if s.is_xml:
            if s.fragment is None:
                self.add("PR-08", ERROR, loc, "XML Statement holds no element")
            elif not s.fragment.namespace:
                self.add("PR-08", ERROR, loc,
                         f"XML Statement root <{s.fragment.local_name}> has no namespace")
        if s.fragment is not None:
            self.typo(s.fragment, loc)
        kind = self.kind(s)
        if kind == SemanticKind.REPRESENTATION_INFO and component is None:
            self.add("PR-09", WARNING, loc,
                     "Representation Information belongs on the Component, not the Item")
        if kind == SemanticKind.FIXITY:
            self.signature(s.fragment, loc,
                           expected_refs=None if component is None else len(component.resources))

    def signature(self, fragment: XmlFragment, loc: str, expected_refs: int | None) -> None:
        try:
            content = read_signature(fragment)
        except MalformedFixity as exc:
            self.add("PR-10", ERROR, loc, f"fixity signature outside the supported subset: {exc}")
            return
        if expected_refs is not None and len(content.records) != expected_refs:
            self.add("PR-10", ERROR, loc,
                     f"signature has {len(content.records)} Reference(s) for {expected_refs} Resource(s)")
        if any(r.algorithm == SHA1 for r in content.records):
            self.add("PR-10", WARNING, loc, "SHA-1 digests are deprecated")
        if content.ignored:
            self.add("PR-10", INFO, loc,
                     "ignored signature elements: " + ", ".join(sorted(set(content.ignored))))

    def typo(self, fragment: XmlFragment, loc: str) -> None:
        if _TYPO in fragment.raw:
            self.add("PR-15", WARNING, loc,
                     f"misspelled XML-Signature namespace {DSIG_NS_TYPO!r}")

    def unique_id(self, value: str | None, loc: str) -> None:
        if value is None:
            return
        if value in self.ids:
            self.add("PR-12", ERROR, loc, f"id {value!r} is not unique")
        self.ids.add(value)


def validate_profile(doc: DidlDocument, *, lenient: bool = False,
                     registry: NamespaceRegistry | None = None) -> ProfileReport:
    """Evaluate the whole rule catalog. Never raises for document problems."""
    v = _Validator(registry or DEFAULT_REGISTRY, lenient)
    v.document(doc)
    ordered = sorted(v.found, key=lambda pf: (pf[0], pf[1].rule_id))
    return ProfileReport(tuple(f for _, f in ordered))


_SEGMENT = re.compile(r"^(didlinfo|block|item|descriptor|statement|component|resource)(?:\[(\d+)\])?$")


def resolve_location(doc: DidlDocument, path: str):
    """Return the model node addressed by a finding location.

    Raises LookupError when the path does not address a node of *doc*.
    """
    if path == "/":
        return doc
    node = doc
    for seg in path.strip("/").split("/"):
        m = _SEGMENT.match(seg)
        if not m:
            raise LookupError(f"bad path segment {seg!r} in {path!r}")
        name, index = m.group(1), int(m.group(2) or 1) - 1
        if index < 0:
            raise LookupError(f"index must be 1-based in {path!r}")
        try:
            if name == "didlinfo" and node is doc:
                node = doc.info_blocks
            elif name == "block" and node is doc.info_blocks:
                node = doc.info_blocks[index]
            elif name == "item" and node is doc:
                node = doc.items[index]
            elif name == "item" and isinstance(node, Item):
                node = node.items[index]
            elif name == "descriptor" and isinstance(node, (Item, Component)):
                node = node.descriptors[index]
            elif name == "statement" and hasattr(node, "statements"):
                node = node.statements[index]
            elif name == "component" and isinstance(node, Item):
                node = node.components[index]
            elif name == "resource" and isinstance(node, Component):
                node = node.resources[index]
            else:
                raise LookupError(f"{seg!r} cannot follow {type(node).__name__} in {path!r}")
        except IndexError:
            raise LookupError(f"{path!r} does not resolve") from None
    return node
