"""In-memory DIDL document model and namespace-driven statement semantics.

All entities are frozen dataclasses holding tuples, so parsed documents are
immutable values that compare by content and can be shared between threads.
"""

from __future__ import annotations

import base64
import binascii
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Union
from xml.etree import ElementTree
from xml.parsers import expat

from .errors import (
    DuplicateIdentifierWarning,
    EmptyIdentifier,
    InvariantViolation,
    MissingIdentifier,
    NotXml,
)

DIDL_NS = "urn:mpeg:mpeg21:2002:02-DIDL-NS"
DII_NS = "urn:mpeg:mpeg21:2002:01-DII-NS"
DSIG_NS = "http://www.w3.org/2000/09/xmldsig#"
DSIG_NS_TYPO = "http://www.w3.org/2000/09/xmlsig#"
JHOVE_NS = "http://hul.harvard.edu/ois/xml/ns/jhove"

XML_STATEMENT_MIME = "application/xml; charset=utf-8"

_SCHEME_RE = re.compile(r"^([A-Za-z][A-Za-z0-9+.\-]*):(.+)$", re.S)
_B64_WS = re.compile(rb"[ \t\r\n]+")
# XML 1.0 Char production minus the surrogate block
_ILLEGAL_XML_CHARS = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\ufffe\uffff]")


def uri_scheme(uri: str | None) -> str | None:
    """Lower-cased scheme of an absolute URI, or None if *uri* is relative."""
    if not uri:
        return None
    m = _SCHEME_RE.match(uri)
    return m.group(1).lower() if m else None


def is_absolute_uri(uri: str | None) -> bool:
    return uri_scheme(uri) is not None and not any(c.isspace() for c in uri)


def media_type(mime: str) -> str:
    """Strip parameters: ``"application/xml; charset=utf-8"`` -> ``"application/xml"``."""
    return mime.split(";", 1)[0].strip().lower()


def is_xml_mime(mime: str) -> bool:
    return media_type(mime) in ("application/xml", "text/xml")


def decode_base64(payload: str | bytes) -> bytes:
    """Strict base64 decoding that ignores embedded whitespace.

    Raises binascii.Error for characters outside the alphabet or bad padding.
    """
    if isinstance(payload, str):
        try:
            payload = payload.encode("ascii")
        except UnicodeEncodeError as exc:
            raise binascii.Error(f"non-ASCII character in base64 payload: {exc}") from None
    return base64.b64decode(_B64_WS.sub(b"", payload), validate=True)


def illegal_xml_char(text: str) -> str | None:
    m = _ILLEGAL_XML_CHARS.search(text)
    return m.group(0) if m else None


# --------------------------------------------------------------------------
# entities
# --------------------------------------------------------------------------

def _fragment_root(raw: bytes) -> tuple[str, str]:
    root: list[tuple[str, str]] = []

    def start(name, attrs):
        if not root:
            uri, _, local = name.rpartition(" ")
            root.append((uri, local))

    def doctype(*args):
        raise ValueError("DOCTYPE is not allowed inside a fragment")

    p = expat.ParserCreate(namespace_separator=" ")
    p.StartElementHandler = start
    p.StartDoctypeDeclHandler = doctype
    try:
        p.Parse(raw, True)
    except expat.ExpatError as exc:
        raise ValueError(f"fragment is not well-formed XML: {exc}") from None
    return root[0]


@dataclass(frozen=True)
class XmlFragment:
    """The exact serialized bytes of one self-contained XML element.

    The bytes are kept verbatim; *namespace* and *local_name* describe the
    root element and are derived from the bytes on construction through
    :meth:`from_bytes`.
    """

    raw: bytes
    namespace: str
    local_name: str

    @classmethod
    def from_bytes(cls, raw: bytes | str) -> "XmlFragment":
        if isinstance(raw, str):
            raw = raw.encode("utf-8")
        stripped = raw.strip()
        if stripped.startswith(b"<?xml"):
            end = stripped.find(b"?>")
            stripped = stripped[end + 2:].strip()
        ns, local = _fragment_root(stripped)
        return cls(stripped, ns, local)

    @classmethod
    def from_file(cls, path: str | Path) -> "XmlFragment":
        return cls.from_bytes(Path(path).read_bytes())

    def element(self) -> ElementTree.Element:
        return ElementTree.fromstring(self.raw)

    def text(self) -> str:
        """Concatenated character data of the whole element."""
        return "".join(self.element().itertext())

    def __repr__(self) -> str:
        return f"XmlFragment({{{self.namespace}}}{self.local_name}, {len(self.raw)} bytes)"


StatementContent = Union[XmlFragment, bytes]


@dataclass(frozen=True)
class Statement:
    mime_type: str
    content: StatementContent = b""

    @property
    def is_xml(self) -> bool:
        return is_xml_mime(self.mime_type)

    @property
    def fragment(self) -> XmlFragment | None:
        return self.content if isinstance(self.content, XmlFragment) else None

    @classmethod
    def xml(cls, fragment: XmlFragment | bytes | str) -> "Statement":
        if not isinstance(fragment, XmlFragment):
            fragment = XmlFragment.from_bytes(fragment)
        return cls(XML_STATEMENT_MIME, fragment)


@dataclass(frozen=True)
class Descriptor:
    statements: tuple[Statement, ...] = ()


@dataclass(frozen=True)
class Resource:
    """A Resource element.

    Exactly one of *ref* (By Reference) and *data* (By Value, base64 text)
    should be set; both fields exist so that invalid input can still be
    represented and reported by the profile validator.
    """

    mime_type: str
    ref: str | None = None
    data: str | None = None
    content_encodings: tuple[str, ...] = ()

    @property
    def by_reference(self) -> bool:
        return self.ref is not None and self.data is None

    @property
    def by_value(self) -> bool:
        return self.data is not None and self.ref is None


@dataclass(frozen=True)
class Component:
    id: str | None = None
    descriptors: tuple[Descriptor, ...] = ()
    resources: tuple[Resource, ...] = ()


@dataclass(frozen=True)
class Item:
    id: str | None = None
    descriptors: tuple[Descriptor, ...] = ()
    components: tuple[Component, ...] = ()
    # nested items are representable only so the profile can reject them
    items: tuple["Item", ...] = ()


@dataclass(frozen=True)
class DidlDocument:
    document_id: str | None = None
    info_blocks: tuple[XmlFragment, ...] = ()
    items: tuple[Item, ...] = field(default=())

    @classmethod
    def of(cls, item: Item, document_id: str | None = None,
           info_blocks: tuple[XmlFragment, ...] = ()) -> "DidlDocument":
        return cls(document_id, tuple(info_blocks), (item,))

    @property
    def item(self) -> Item:
        if len(self.items) != 1:
            raise InvariantViolation(
                f"document must have exactly one top-level Item, found {len(self.items)}", "/")
        return self.items[0]


# --------------------------------------------------------------------------
# semantics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SemanticKind:
    name: str
    namespace: str | None = None

    @classmethod
    def other(cls, namespace: str) -> "SemanticKind":
        return cls("Other", namespace)

    def __str__(self) -> str:
        return f"Other({self.namespace})" if self.name == "Other" else self.name


SemanticKind.IDENTIFIER = SemanticKind("Identifier")
SemanticKind.REPRESENTATION_INFO = SemanticKind("RepresentationInfo")
SemanticKind.FIXITY = SemanticKind("Fixity")
SemanticKind.PRESERVATION = SemanticKind("Preservation")

_KINDS_BY_NAME = {
    k.name: k for k in (SemanticKind.IDENTIFIER, SemanticKind.REPRESENTATION_INFO,
                        SemanticKind.FIXITY, SemanticKind.PRESERVATION)
}


class NamespaceRegistry:
    """Maps statement root namespaces to semantic kinds.

    Exact URIs are looked up first; failing that, any namespace containing
    one of the registered preservation markers (case-insensitively) is
    classified as Preservation.
    """

    def __init__(self, exact: dict[str, SemanticKind] | None = None,
                 preservation_markers: tuple[str, ...] = ("premis",)):
        self.exact = dict(exact or {})
        self.preservation_markers = tuple(preservation_markers)

    @classmethod
    def default(cls) -> "NamespaceRegistry":
        return cls({
            DII_NS: SemanticKind.IDENTIFIER,
            JHOVE_NS: SemanticKind.REPRESENTATION_INFO,
            DSIG_NS: SemanticKind.FIXITY,
            DSIG_NS_TYPO: SemanticKind.FIXITY,
        })

    def extended(self, text: str) -> "NamespaceRegistry":
        """Return a copy extended by registry-file lines ``kind <ws> namespace``.

        Blank lines and ``#`` comments are skipped.  A ``Preservation`` line
        adds a substring marker; other kinds add an exact URI.
        """
        exact = dict(self.exact)
        markers = list(self.preservation_markers)
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            if len(parts) != 2 or parts[0] not in _KINDS_BY_NAME:
                raise ValueError(f"namespace registry line {lineno}: expected '<kind> <namespace>'")
            kind = _KINDS_BY_NAME[parts[0]]
            if kind is SemanticKind.PRESERVATION:
                markers.append(parts[1].strip())
            else:
                exact[parts[1].strip()] = kind
        return NamespaceRegistry(exact, tuple(markers))

    @classmethod
    def from_file(cls, path: str | Path) -> "NamespaceRegistry":
        return cls.default().extended(Path(path).read_text(encoding="utf-8"))

    def classify_namespace(self, namespace: str) -> SemanticKind:
        kind = self.exact.get(namespace)
        if kind is not None:
            return kind
        lowered = namespace.lower()
        if any(m.lower() in lowered for m in self.preservation_markers if m):
            return SemanticKind.PRESERVATION
        return SemanticKind.other(namespace)


DEFAULT_REGISTRY = NamespaceRegistry.default()


def classify_statement(s: Statement, registry: NamespaceRegistry | None = None) -> SemanticKind:
    if not s.is_xml or s.fragment is None:
        raise NotXml(f"statement of type {s.mime_type!r} carries no XML element")
    return (registry or DEFAULT_REGISTRY).classify_namespace(s.fragment.namespace)


def _kind_of(s: Statement, registry: NamespaceRegistry) -> SemanticKind | None:
    try:
        return classify_statement(s, registry)
    except NotXml:
        return None


def iter_statements(node: Item | Component) -> Iterator[Statement]:
    for d in node.descriptors:
        yield from d.statements


def find_statements(node: Item | Component, kind: SemanticKind,
                    registry: NamespaceRegistry | None = None) -> list[Statement]:
    """Statements of *kind* attached directly to *node*, in document order.

    Item-level lookups do not descend into the item's components.
    """
    registry = registry or DEFAULT_REGISTRY
    return [s for s in iter_statements(node) if _kind_of(s, registry) == kind]


def get_content_identifier(item: Item, registry: NamespaceRegistry | None = None) -> str:
    found = [s.fragment for s in find_statements(item, SemanticKind.IDENTIFIER, registry)
             if s.fragment.local_name == "Identifier"]
    if not found:
        raise MissingIdentifier("item carries no DII Identifier statement")
    if len(found) > 1:
        warnings.warn(
            f"{len(found)} DII identifiers present; using the first in document order",
            DuplicateIdentifierWarning, stacklevel=2)
    value = found[0].text().strip()
    if not value:
        raise EmptyIdentifier("DII Identifier is blank")
    return value


# --------------------------------------------------------------------------
# invariant checking
# --------------------------------------------------------------------------

def _text_violations(value: str | None, what: str, loc: str) -> list[InvariantViolation]:
    if value is None:
        return []
    bad = illegal_xml_char(value)
    if bad is not None:
        return [InvariantViolation(f"{what} contains character U+{ord(bad):04X} not allowed in XML", loc)]
    return []


def _statement_violations(s: Statement, loc: str) -> list[InvariantViolation]:
    out = []
    if not s.mime_type.strip():
        out.append(InvariantViolation("statement mimeType must be non-empty", loc))
    out += _text_violations(s.mime_type, "mimeType", loc)
    if s.fragment is not None:
        if s.is_xml and not s.fragment.namespace:
            out.append(InvariantViolation("XML statement root element must be namespaced", loc))
    else:
        if not isinstance(s.content, bytes):
            out.append(InvariantViolation("statement content must be XmlFragment or bytes", loc))
        elif s.is_xml:
            out.append(InvariantViolation("XML statement must contain exactly one element", loc))
        else:
            try:
                out += _text_violations(s.content.decode("utf-8"), "statement text", loc)
            except UnicodeDecodeError:
                out.append(InvariantViolation("statement text must be UTF-8", loc))
    return out


def _descriptor_violations(descriptors, base: str) -> list[InvariantViolation]:
    out = []
    for i, d in enumerate(descriptors, 1):
        dloc = f"{base}/descriptor[{i}]"
        if not d.statements:
            out.append(InvariantViolation("descriptor must hold at least one statement", dloc))
        for j, s in enumerate(d.statements, 1):
            out += _statement_violations(s, f"{dloc}/statement[{j}]")
    return out


def _resource_violations(r: Resource, loc: str) -> list[InvariantViolation]:
    out = []
    if not r.mime_type.strip():
        out.append(InvariantViolation("resource mimeType must be non-empty", loc))
    if (r.ref is None) == (r.data is None):
        out.append(InvariantViolation("resource must be exactly one of By Reference or By Value", loc))
    if r.ref is not None and not is_absolute_uri(r.ref):
        out.append(InvariantViolation("resource ref must be an absolute URI", loc))
    if r.data is not None:
        try:
            decode_base64(r.data)
        except (binascii.Error, ValueError):
            out.append(InvariantViolation("By Value payload is not valid base64", loc))
    for enc in r.content_encodings:
        if not enc or any(c.isspace() for c in enc):
            out.append(InvariantViolation(f"invalid content encoding name {enc!r}", loc))
    for what, value in (("mimeType", r.mime_type), ("ref", r.ref)):
        out += _text_violations(value, what, loc)
    return out


def invariant_violations(doc: DidlDocument) -> list[InvariantViolation]:
    """Every model invariant broken by *doc*, in document order. Performs no I/O."""
    out: list[InvariantViolation] = []
    if doc.document_id is not None and not is_absolute_uri(doc.document_id):
        out.append(InvariantViolation("DIDLDocumentId must be an absolute URI", "/"))
    out += _text_violations(doc.document_id, "DIDLDocumentId", "/")
    for i, block in enumerate(doc.info_blocks, 1):
        if not isinstance(block, XmlFragment):
            out.append(InvariantViolation("info block must be an XmlFragment", f"/didlinfo/block[{i}]"))
    if len(doc.items) != 1:
        out.append(InvariantViolation(
            f"document must have exactly one top-level Item, found {len(doc.items)}", "/"))
    seen_ids: set[str] = set()
    for n, item in enumerate(doc.items, 1):
        base = "/item" if n == 1 else f"/item[{n}]"
        if item.items:
            out.append(InvariantViolation("nested Items are not allowed", base))
        if item.id is not None:
            if item.id in seen_ids:
                out.append(InvariantViolation(f"duplicate id {item.id!r}", base))
            seen_ids.add(item.id)
            out += _text_violations(item.id, "id", base)
        out += _descriptor_violations(item.descriptors, base)
        for ci, comp in enumerate(item.components, 1):
            cloc = f"{base}/component[{ci}]"
            if comp.id is not None:
                if comp.id in seen_ids:
                    out.append(InvariantViolation(f"duplicate id {comp.id!r}", cloc))
                seen_ids.add(comp.id)
                out += _text_violations(comp.id, "id", cloc)
            out += _descriptor_violations(comp.descriptors, cloc)
            if not comp.resources:
                out.append(InvariantViolation("component must hold at least one resource", cloc))
            for ri, res in enumerate(comp.resources, 1):
                out += _resource_violations(res, f"{cloc}/resource[{ri}]")
    return out
