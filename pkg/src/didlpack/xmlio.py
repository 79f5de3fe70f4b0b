"""Byte-level DIDL parsing and canonical serialization.

Parsing is driven by expat so that every foreign element found inside a
``Statement`` or ``DIDLInfo`` can be sliced out of the input byte-exactly.
When such an element relies on namespace declarations made by one of its
ancestors, the missing declarations are added to its start tag (warning
``W-NS-INHERITED``) so the stored fragment stays self-contained.

Canonical form, as produced by :func:`serialize_didl`:

* UTF-8, no byte-order mark, first line ``<?xml version="1.0" encoding="UTF-8"?>``;
* DIDL elements use the ``didl`` prefix, declared once on the root;
* no whitespace between DIDL-level elements, empty elements self-close;
* attributes sorted by (namespace URI, local name) and double-quoted;
* ``& < > "`` and control characters escaped as character references;
* statement and info-block fragments copied verbatim from their stored bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple
from xml.parsers import expat

from .errors import MalformedXml, NotDidl, ProfileShape
from .model import (
    DIDL_NS,
    DSIG_NS_TYPO,
    Component,
    Descriptor,
    DidlDocument,
    Item,
    Resource,
    Statement,
    XmlFragment,
    invariant_violations,
)

XML_DECLARATION = b'<?xml version="1.0" encoding="UTF-8"?>\n'

_SUPPORTED = {"DIDL", "DIDLInfo", "Item", "Descriptor", "Statement", "Component", "Resource"}
_ALLOWED_CHILDREN = {
    "DIDL": {"DIDLInfo", "Item"},
    "Item": {"Descriptor", "Component", "Item"},
    "Component": {"Descriptor", "Resource"},
    "Descriptor": {"Statement"},
    "Statement": set(),
    "Resource": set(),
    "DIDLInfo": set(),
}
_KNOWN_ATTRS = {
    "DIDL": {"DIDLDocumentId"},
    "Item": {"id"},
    "Component": {"id"},
    "Descriptor": set(),
    "Statement": {"mimeType"},
    "Resource": {"mimeType", "ref", "encoding", "contentEncoding"},
    "DIDLInfo": set(),
}
_QNAME_IN_CONTENT = re.compile(r"(?<![\w.:/\-])([A-Za-z_][\w.\-]*):(?=[A-Za-z_])")
_TAG_NAME = re.compile(rb"<[^\s/>]+")
_UTF8_NAMES = {"utf-8", "utf8", "us-ascii", "ascii"}


class ParseWarning(NamedTuple):
    code: str
    location: str
    message: str


@dataclass(frozen=True)
class ParseOutcome:
    document: DidlDocument
    warnings: tuple[ParseWarning, ...] = ()


@dataclass
class _Node:
    local: str
    path: str
    line: int
    attrs: dict[str, str] = field(default_factory=dict)
    children: list["_Node"] = field(default_factory=list)
    text: list[str] = field(default_factory=list)
    fragments: list[XmlFragment] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)

    def child_path(self, kind: str, top_level: bool = False) -> str:
        n = self.counters[kind] = self.counters.get(kind, 0) + 1
        if top_level:
            return "/item" if n == 1 else f"/item[{n}]"
        base = "" if self.path == "/" else self.path
        return f"{base}/{kind}[{n}]"


def _start_tag_end(data: bytes, start: int) -> tuple[int, bool]:
    """Offset just past the start tag beginning at *start*, and whether it self-closes."""
    i, n = start + 1, len(data)
    quote = None
    while i < n:
        c = data[i]
        if quote is not None:
            if c == quote:
                quote = None
        elif c in (0x22, 0x27):
            quote = c
        elif c == 0x3E:
            return i + 1, data[i - 1] == 0x2F
        i += 1
    return n, False


class _Parser:
    def __init__(self, data: bytes, strict_shape: bool):
        self.data = data
        self.strict_shape = strict_shape
        self.warnings: list[ParseWarning] = []
        self.p = expat.ParserCreate(namespace_separator=" ")
        self.p.namespace_prefixes = True
        self.p.buffer_text = True
        self.p.StartElementHandler = self.start
        self.p.EndElementHandler = self.end
        self.p.CharacterDataHandler = self.chars
        self.p.StartNamespaceDeclHandler = self.ns_decl
        self.p.StartDoctypeDeclHandler = self.doctype
        self.p.XmlDeclHandler = self.xml_decl
        self.pending: dict[str | None, str] = {}
        self.scopes: list[dict[str | None, str]] = []
        self.stack: list[_Node] = []
        self.root: _Node | None = None
        # active fragment state
        self.frag_depth: int | None = None
        self.frag_start = 0
        self.frag_needs: set[str | None] = set()
        self.frag_name: tuple[str, str] = ("", "")

    # -- helpers ---------------------------------------------------------
    def warn(self, code: str, location: str, message: str) -> None:
        self.warnings.append(ParseWarning(code, location, message))

    def shape(self, message: str):
        return ProfileShape(f"line {self.p.CurrentLineNumber}: {message}")

    def location(self) -> str:
        return self.stack[-1].path if self.stack else "/"

    def inherited(self, prefix: str | None) -> str | None:
        """Binding of *prefix* from outside the active fragment, if it is not redeclared inside."""
        for frame in self.scopes[self.frag_depth:]:
            if prefix in frame:
                return None
        for frame in reversed(self.scopes[:self.frag_depth]):
            if prefix in frame:
                return frame[prefix]
        return None

    def note_prefix(self, prefix: str | None, from_content: bool = False) -> None:
        uri = self.inherited(prefix)
        if not uri:
            return
        if from_content and prefix == "didl" and uri == DIDL_NS:
            return
        self.frag_needs.add(prefix)

    # -- expat handlers --------------------------------------------------
    def xml_decl(self, version, encoding, standalone):
        if encoding and encoding.lower() not in _UTF8_NAMES:
            raise MalformedXml(f"unsupported document encoding {encoding!r}; UTF-8 required",
                               self.p.CurrentLineNumber, self.p.CurrentColumnNumber + 1)

    def doctype(self, *args):
        raise MalformedXml("DOCTYPE declarations are not supported",
                           self.p.CurrentLineNumber, self.p.CurrentColumnNumber + 1)

    def ns_decl(self, prefix, uri):
        self.pending[prefix] = uri or ""
        if uri == DSIG_NS_TYPO:
            self.warn("W-DSIG-TYPO", self.location(),
                      f"misspelled XML-Signature namespace {DSIG_NS_TYPO!r} treated as "
                      "http://www.w3.org/2000/09/xmldsig#")

    def start(self, name, attrs):
        self.scopes.append(self.pending)
        self.pending = {}
        parts = name.split(" ")
        ns = parts[0] if len(parts) > 1 else ""
        local = parts[1] if len(parts) > 1 else parts[0]
        prefix = parts[2] if len(parts) > 2 else None

        if self.frag_depth is not None:
            if ns:
                self.note_prefix(prefix)
            for aname, value in attrs.items():
                aparts = aname.split(" ")
                if len(aparts) > 2:
                    self.note_prefix(aparts[2])
                self.scan_content(value)
            return

        if self.root is None:
            if ns != DIDL_NS or local != "DIDL":
                raise NotDidl(f"root element is {{{ns}}}{local}, expected {{{DIDL_NS}}}DIDL",
                              self.p.CurrentLineNumber, self.p.CurrentColumnNumber + 1)
            node = _Node("DIDL", "/", self.p.CurrentLineNumber)
            self.root = node
            self.take_attrs(node, attrs)
            self.stack.append(node)
            return

        parent = self.stack[-1]
        if parent.local in ("Statement", "DIDLInfo"):
            self.begin_fragment(parent, ns, local, prefix, attrs)
            return
        if ns != DIDL_NS:
            raise self.shape(f"foreign element {{{ns}}}{local} inside DIDL {parent.local}")
        if local not in _SUPPORTED:
            raise self.shape(f"DIDL element {local} is not supported by the preservation profile")
        if local not in _ALLOWED_CHILDREN[parent.local]:
            raise self.shape(f"{local} is not allowed inside {parent.local}")

        if local == "DIDLInfo":
            path = "/didlinfo"
        elif local == "Item" and parent.local == "DIDL":
            path = parent.child_path("item", top_level=True)
        else:
            path = parent.child_path(local.lower())
        node = _Node(local, path, self.p.CurrentLineNumber)
        self.take_attrs(node, attrs)
        parent.children.append(node)
        self.stack.append(node)

    def take_attrs(self, node: _Node, attrs: dict[str, str]) -> None:
        for aname, value in attrs.items():
            if " " not in aname and aname in _KNOWN_ATTRS[node.local]:
                node.attrs[aname] = value
            else:
                self.warn("W-ATTR-DROPPED", node.path,
                          f"attribute {aname.split(' ')[1] if ' ' in aname else aname!r} on "
                          f"{node.local} is not modelled and was dropped")

    def begin_fragment(self, parent, ns, local, prefix, attrs):
        if parent.local == "Statement" and parent.fragments:
            raise self.shape("a Statement may hold at most one element")
        self.frag_depth = len(self.scopes) - 1
        self.frag_start = self.p.CurrentByteIndex
        self.frag_needs = set()
        self.frag_name = (ns, local)
        if ns:
            self.note_prefix(prefix)
        for aname, value in attrs.items():
            aparts = aname.split(" ")
            if len(aparts) > 2:
                self.note_prefix(aparts[2])
            self.scan_content(value)

    def scan_content(self, text: str) -> None:
        for m in _QNAME_IN_CONTENT.finditer(text):
            if m.group(1) != "xml":
                self.note_prefix(m.group(1), from_content=True)

    def chars(self, text):
        if self.frag_depth is not None:
            self.scan_content(text)
        elif self.stack:
            self.stack[-1].text.append(text)

    def end(self, name):
        depth = len(self.scopes) - 1
        if self.frag_depth is not None:
            if depth == self.frag_depth:
                self.finish_fragment()
            self.scopes.pop()
            return
        self.scopes.pop()
        self.stack.pop()

    def finish_fragment(self) -> None:
        start = self.frag_start
        tag_end, self_closing = _start_tag_end(self.data, start)
        if self_closing:
            stop = tag_end
        else:
            stop = self.data.index(b">", self.p.CurrentByteIndex) + 1
        raw = self.data[start:stop]
        parent = self.stack[-1]
        if self.frag_needs:
            decls = []
            for prefix in sorted(self.frag_needs, key=lambda p: (p is not None, p or "")):
                uri = self.inherited(prefix)
                uri = uri.replace("&", "&amp;").replace('"', "&quot;").replace("<", "&lt;")
                attr = "xmlns" if prefix is None else f"xmlns:{prefix}"
                decls.append(f' {attr}="{uri}"'.encode("utf-8"))
            head = _TAG_NAME.match(raw).end()
            raw = raw[:head] + b"".join(decls) + raw[head:]
            names = ", ".join("(default)" if p is None else p for p in sorted(
                self.frag_needs, key=lambda p: p or ""))
            self.warn("W-NS-INHERITED", parent.path,
                      f"inherited namespace declarations copied into fragment: {names}")
        parent.fragments.append(XmlFragment(raw, *self.frag_name))
        self.frag_depth = None

    # -- driver ----------------------------------------------------------
    def run(self) -> DidlDocument:
        if self.data.startswith((b"\xff\xfe", b"\xfe\xff")):
            raise MalformedXml("UTF-16 input is not supported; UTF-8 required", 1, 1)
        try:
            self.p.Parse(self.data, True)
        except expat.ExpatError as exc:
            raise MalformedXml(expat.errors.messages[exc.code] if exc.code else str(exc),
                               exc.lineno, exc.offset + 1) from None
        return self.build(self.root)

    # -- tree -> model ---------------------------------------------------
    def drop_text(self, node: _Node) -> None:
        if "".join(node.text).strip():
            self.warn("W-TEXT-DROPPED", node.path,
                      f"character data inside {node.local} is not modelled and was dropped")

    def build(self, root: _Node) -> DidlDocument:
        self.drop_text(root)
        info: list[XmlFragment] = []
        items: list[Item] = []
        for child in root.children:
            if child.local == "DIDLInfo":
                self.drop_text(child)
                info.extend(child.fragments)
            else:
                items.append(self.build_item(child))
        if self.strict_shape and len(items) != 1:
            raise ProfileShape(f"document must hold exactly one top-level Item, found {len(items)}")
        return DidlDocument(root.attrs.get("DIDLDocumentId"), tuple(info), tuple(items))

    def build_item(self, node: _Node) -> Item:
        self.drop_text(node)
        descriptors, components, items = [], [], []
        for child in node.children:
            if child.local == "Descriptor":
                descriptors.append(self.build_descriptor(child))
            elif child.local == "Component":
                components.append(self.build_component(child))
            else:
                items.append(self.build_item(child))
        return Item(node.attrs.get("id"), tuple(descriptors), tuple(components), tuple(items))

    def build_component(self, node: _Node) -> Component:
        self.drop_text(node)
        descriptors, resources = [], []
        for child in node.children:
            if child.local == "Descriptor":
                descriptors.append(self.build_descriptor(child))
            else:
                resources.append(self.build_resource(child))
        return Component(node.attrs.get("id"), tuple(descriptors), tuple(resources))

    def build_descriptor(self, node: _Node) -> Descriptor:
        self.drop_text(node)
        return Descriptor(tuple(self.build_statement(c) for c in node.children))

    def build_statement(self, node: _Node) -> Statement:
        text = "".join(node.text)
        mime = node.attrs.get("mimeType", "")
        if node.fragments:
            if text.strip():
                raise ProfileShape(f"{node.path}: Statement mixes character data with an element")
            return Statement(mime, node.fragments[0])
        return Statement(mime, text.encode("utf-8"))

    def build_resource(self, node: _Node) -> Resource:
        attrs = node.attrs
        text = "".join(node.text)
        encoding = attrs.get("encoding")
        if encoding is not None and encoding != "base64":
            raise ProfileShape(f"{node.path}: Resource encoding {encoding!r} is not supported")
        data = None
        if encoding == "base64":
            data = text
        elif text.strip():
            self.warn("W-RESOURCE-ENCODING", node.path,
                      "inline Resource content without encoding=\"base64\" read as base64 payload")
            data = text
        codecs = tuple(attrs.get("contentEncoding", "").split())
        return Resource(attrs.get("mimeType", ""), attrs.get("ref"), data, codecs)


def parse_didl(data: bytes, *, strict_shape: bool = True) -> ParseOutcome:
    """Parse DIDL bytes into a :class:`DidlDocument`.

    With ``strict_shape=False`` documents holding zero or several top-level
    Items are returned as-is so that :func:`didlpack.profile.validate_profile`
    can report them; by default they raise :class:`ProfileShape`.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    parser = _Parser(bytes(data), strict_shape)
    doc = parser.run()
    return ParseOutcome(doc, tuple(parser.warnings))


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def escape(text: str) -> str:
    out = []
    for ch in text:
        o = ord(ch)
        if ch == "&":
            out.append("&amp;")
        elif ch == "<":
            out.append("&lt;")
        elif ch == ">":
            out.append("&gt;")
        elif ch == '"':
            out.append("&quot;")
        elif o < 0x20 or 0x7F <= o <= 0x9F:
            out.append(f"&#x{o:X};")
        else:
            out.append(ch)
    return "".join(out)


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def open(self, name: str, attrs: dict[str, str | None], empty: bool = False, root: bool = False):
        s = f"<didl:{name}"
        if root:
            s += f' xmlns:didl="{DIDL_NS}"'
        # all DIDL attributes are unqualified, so (namespace, local) order is local order
        for key in sorted(k for k, v in attrs.items() if v is not None):
            s += f' {key}="{escape(attrs[key])}"'
        s += "/>" if empty else ">"
        self.parts.append(s.encode("utf-8"))

    def close(self, name: str):
        self.parts.append(f"</didl:{name}>".encode("utf-8"))

    def raw(self, data: bytes):
        self.parts.append(data)

    def text(self, text: str):
        self.parts.append(escape(text).encode("utf-8"))


def _write_descriptors(w: _Writer, descriptors) -> None:
    for d in descriptors:
        w.open("Descriptor", {})
        for s in d.statements:
            attrs = {"mimeType": s.mime_type}
            if s.fragment is not None:
                w.open("Statement", attrs)
                w.raw(s.fragment.raw)
                w.close("Statement")
            elif s.content:
                w.open("Statement", attrs)
                w.text(s.content.decode("utf-8"))
                w.close("Statement")
            else:
                w.open("Statement", attrs, empty=True)
        w.close("Descriptor")


def _write_item(w: _Writer, item: Item) -> None:
    if not (item.descriptors or item.components or item.items):
        w.open("Item", {"id": item.id}, empty=True)
        return
    w.open("Item", {"id": item.id})
    _write_descriptors(w, item.descriptors)
    for comp in item.components:
        w.open("Component", {"id": comp.id})
        _write_descriptors(w, comp.descriptors)
        for r in comp.resources:
            attrs = {
                "mimeType": r.mime_type,
                "ref": r.ref,
                "encoding": "base64" if r.data is not None else None,
                "contentEncoding": " ".join(r.content_encodings) or None,
            }
            if r.data:
                w.open("Resource", attrs)
                w.text(r.data)
                w.close("Resource")
            else:
                w.open("Resource", attrs, empty=True)
        w.close("Component")
    for nested in item.items:
        _write_item(w, nested)
    w.close("Item")


def canonicalize(doc: DidlDocument, exclude_info_blocks: bool = False) -> bytes:
    """Canonical bytes of *doc*; optionally without the DIDLInfo element.

    The form without DIDLInfo is the digest scope for package fixity.
    """
    violations = invariant_violations(doc)
    if violations:
        raise violations[0]
    w = _Writer()
    w.raw(XML_DECLARATION)
    w.open("DIDL", {"DIDLDocumentId": doc.document_id}, root=True)
    if doc.info_blocks and not exclude_info_blocks:
        w.open("DIDLInfo", {})
        for block in doc.info_blocks:
            w.raw(block.raw)
        w.close("DIDLInfo")
    for item in doc.items:
        _write_item(w, item)
    w.close("DIDL")
    return b"".join(w.parts)


def serialize_didl(doc: DidlDocument) -> bytes:
    return canonicalize(doc, exclude_info_blocks=False)

