"""Fixity information: digests wrapped in a minimal XML-Signature subset.

Only ``Signature/SignedInfo/Reference/{DigestMethod,DigestValue}`` is
interpreted.  ``SignatureValue``, ``KeyInfo``, ``Object``,
``CanonicalizationMethod``, ``SignatureMethod`` and ``Transforms`` are
tolerated and reported as ignored; no cryptographic signature check is made.

Reference vectors for the default algorithm (FIPS 180-2)::

    sha256("")    = e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855
    sha256("abc") = ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad
"""

from __future__ import annotations

import base64
import binascii
import enum
import hashlib
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence
from xml.etree import ElementTree

from .errors import (
    DidlError,
    EmptyRecordList,
    MalformedFixity,
    UnsupportedAlgorithm,
)
from .model import (
    DSIG_NS,
    DSIG_NS_TYPO,
    Component,
    DidlDocument,
    NamespaceRegistry,
    SemanticKind,
    Statement,
    XmlFragment,
    find_statements,
    DEFAULT_REGISTRY,
)
from .resources import Fetcher, resolve_resource
from .xmlio import canonicalize, escape

SHA256 = "http://www.w3.org/2001/04/xmlenc#sha256"
SHA1 = "http://www.w3.org/2000/09/xmldsig#sha1"


@dataclass(frozen=True)
class _Algorithm:
    hashlib_name: str
    size: int
    writable: bool


ALGORITHMS = {
    SHA256: _Algorithm("sha256", 32, True),
    SHA1: _Algorithm("sha1", 20, False),
}

_IGNORED = {
    "Signature": {"SignatureValue", "KeyInfo", "Object"},
    "SignedInfo": {"CanonicalizationMethod", "SignatureMethod"},
    "Reference": {"Transforms"},
}


def _algorithm(uri: str) -> _Algorithm:
    try:
        return ALGORITHMS[uri]
    except KeyError:
        raise UnsupportedAlgorithm(uri) from None


@dataclass(frozen=True)
class FixityRecord:
    algorithm: str
    digest: bytes
    reference_uri: str | None = None

    def __post_init__(self):
        alg = _algorithm(self.algorithm)
        if len(self.digest) != alg.size:
            raise ValueError(f"{self.algorithm} digest must be {alg.size} bytes, got {len(self.digest)}")

    @property
    def hex(self) -> str:
        return self.digest.hex()


def compute_digest(data: bytes, algorithm: str = SHA256,
                   reference_uri: str | None = None) -> FixityRecord:
    alg = _algorithm(algorithm)
    if not alg.writable:
        warnings.warn(f"{algorithm} is deprecated and accepted for verification only",
                      DeprecationWarning, stacklevel=2)
    return FixityRecord(algorithm, hashlib.new(alg.hashlib_name, data).digest(), reference_uri)


def make_fixity_statement(records: Sequence[FixityRecord]) -> Statement:
    if not records:
        raise EmptyRecordList("at least one fixity record is required")
    parts = [f'<dsig:Signature xmlns:dsig="{DSIG_NS}"><dsig:SignedInfo>']
    for rec in records:
        if not _algorithm(rec.algorithm).writable:
            raise UnsupportedAlgorithm(rec.algorithm, "read-only algorithm; not used for new fixity")
        uri = "" if rec.reference_uri is None else f' URI="{escape(rec.reference_uri)}"'
        parts.append(
            f"<dsig:Reference{uri}>"
            f'<dsig:DigestMethod Algorithm="{escape(rec.algorithm)}"/>'
            f"<dsig:DigestValue>{base64.b64encode(rec.digest).decode('ascii')}</dsig:DigestValue>"
            "</dsig:Reference>")
    parts.append("</dsig:SignedInfo></dsig:Signature>")
    return Statement.xml(XmlFragment("".join(parts).encode("utf-8"), DSIG_NS, "Signature"))


@dataclass(frozen=True)
class SignatureContent:
    records: tuple[FixityRecord, ...]
    ignored: tuple[str, ...] = ()


def _split(tag: str) -> tuple[str, str]:
    if tag.startswith("{"):
        ns, _, local = tag[1:].partition("}")
        return ns, local
    return "", tag


def _dsig_children(el, parent_local: str, ignored: list[str]):
    out = []
    for child in el:
        ns, local = _split(child.tag)
        if ns not in (DSIG_NS, DSIG_NS_TYPO):
            raise MalformedFixity(f"unexpected element {child.tag} in {parent_local}")
        if local in _IGNORED.get(parent_local, ()):
            ignored.append(local)
            continue
        out.append((local, child))
    return out


def read_signature(fragment: XmlFragment) -> SignatureContent:
    """Extract digest records from a signature fragment.

    Raises MalformedFixity when the fragment leaves the supported subset.
    """
    try:
        root = fragment.element()
    except ElementTree.ParseError as exc:
        raise MalformedFixity(f"signature is not well-formed: {exc}") from None
    ns, local = _split(root.tag)
    if ns not in (DSIG_NS, DSIG_NS_TYPO) or local != "Signature":
        raise MalformedFixity(f"expected dsig:Signature, found {root.tag}")
    ignored: list[str] = []
    children = _dsig_children(root, "Signature", ignored)
    if [c[0] for c in children] != ["SignedInfo"]:
        raise MalformedFixity("Signature must contain exactly one SignedInfo")
    refs = _dsig_children(children[0][1], "SignedInfo", ignored)
    if not refs or any(name != "Reference" for name, _ in refs):
        raise MalformedFixity("SignedInfo must contain one or more Reference elements")
    records = []
    for n, (_, ref) in enumerate(refs, 1):
        parts = dict()
        for name, el in _dsig_children(ref, "Reference", ignored):
            if name in parts or name not in ("DigestMethod", "DigestValue"):
                raise MalformedFixity(f"Reference {n}: unexpected or repeated {name}")
            parts[name] = el
        if set(parts) != {"DigestMethod", "DigestValue"}:
            raise MalformedFixity(f"Reference {n}: DigestMethod and DigestValue are required")
        algorithm = parts["DigestMethod"].get("Algorithm")
        if not algorithm:
            raise MalformedFixity(f"Reference {n}: DigestMethod lacks Algorithm")
        if algorithm not in ALGORITHMS:
            raise MalformedFixity(f"Reference {n}: unsupported digest algorithm {algorithm}")
        try:
            digest = base64.b64decode("".join((parts["DigestValue"].text or "").split()),
                                      validate=True)
            record = FixityRecord(algorithm, digest, ref.get("URI"))
        except (binascii.Error, ValueError) as exc:
            raise MalformedFixity(f"Reference {n}: bad DigestValue: {exc}") from None
        records.append(record)
    return SignatureContent(tuple(records), tuple(ignored))


# --------------------------------------------------------------------------
# verification
# --------------------------------------------------------------------------

class Status(str, enum.Enum):
    MATCH = "Match"
    MISMATCH = "Mismatch"
    NO_FIXITY_INFO = "NoFixityInfo"
    UNVERIFIABLE = "Unverifiable"


@dataclass(frozen=True)
class ReferenceCheck:
    reference_uri: str | None
    expected: bytes
    actual: bytes | None = None
    error: str | None = None

    @property
    def matches(self) -> bool:
        return self.actual is not None and self.actual == self.expected

    def to_json(self) -> dict:
        return {
            "reference": self.reference_uri,
            "expected": self.expected.hex(),
            "actual": None if self.actual is None else self.actual.hex(),
            "error": self.error,
        }


@dataclass(frozen=True)
class VerificationOutcome:
    status: Status
    details: tuple[ReferenceCheck, ...] = field(default=())

    def to_json(self) -> dict:
        return {"status": self.status.value, "details": [d.to_json() for d in self.details]}


def _outcome(details: list[ReferenceCheck]) -> VerificationOutcome:
    if any(d.actual is not None and not d.matches for d in details):
        status = Status.MISMATCH
    elif any(d.actual is None for d in details):
        status = Status.UNVERIFIABLE
    else:
        status = Status.MATCH
    return VerificationOutcome(status, tuple(details))


def _rehash(record: FixityRecord, data: bytes) -> bytes:
    return hashlib.new(ALGORITHMS[record.algorithm].hashlib_name, data).digest()


def verify_component_fixity(c: Component, f: Fetcher,
                            registry: NamespaceRegistry | None = None) -> VerificationOutcome:
    """Recompute resource digests and compare them with the component's signatures.

    A Reference with a URI is paired with the resource whose ``ref`` equals
    it; otherwise (or when no resource carries that URI) it is paired by
    position within its signature.
    """
    statements = find_statements(c, SemanticKind.FIXITY, registry)
    if not statements:
        return VerificationOutcome(Status.NO_FIXITY_INFO)
    resolved: dict[int, bytes | DidlError] = {}

    def data_of(index: int):
        if index not in resolved:
            try:
                resolved[index] = resolve_resource(c.resources[index], f).data
            except DidlError as exc:
                resolved[index] = exc
        return resolved[index]

    details = []
    for s in statements:
        for pos, rec in enumerate(read_signature(s.fragment).records):
            index = next((i for i, r in enumerate(c.resources)
                          if rec.reference_uri and r.ref == rec.reference_uri), pos)
            if index >= len(c.resources):
                details.append(ReferenceCheck(rec.reference_uri, rec.digest,
                                              error=f"no resource at position {index + 1}"))
                continue
            data = data_of(index)
            if isinstance(data, DidlError):
                details.append(ReferenceCheck(rec.reference_uri, rec.digest, error=str(data)))
            else:
                details.append(ReferenceCheck(rec.reference_uri, rec.digest, _rehash(rec, data)))
    return _outcome(details)


def _package_blocks(doc: DidlDocument, registry: NamespaceRegistry) -> list[int]:
    return [i for i, b in enumerate(doc.info_blocks)
            if registry.classify_namespace(b.namespace) == SemanticKind.FIXITY]


def attach_package_fixity(doc: DidlDocument, algorithm: str = SHA256,
                          registry: NamespaceRegistry | None = None) -> DidlDocument:
    """Return *doc* with a single package-fixity block in DIDLInfo.

    The digest covers the canonical document without DIDLInfo, so an earlier
    fixity block (which is replaced) does not influence the new digest.
    """
    registry = registry or DEFAULT_REGISTRY
    record = compute_digest(canonicalize(doc, exclude_info_blocks=True), algorithm)
    block = make_fixity_statement([record]).fragment
    existing = _package_blocks(doc, registry)
    blocks = list(doc.info_blocks)
    if existing:
        blocks[existing[0]] = block
        blocks = [b for i, b in enumerate(blocks) if i not in existing[1:]]
    else:
        blocks.append(block)
    return replace(doc, info_blocks=tuple(blocks))


def verify_package_fixity(doc: DidlDocument,
                          registry: NamespaceRegistry | None = None) -> VerificationOutcome:
    registry = registry or DEFAULT_REGISTRY
    indices = _package_blocks(doc, registry)
    if not indices:
        return VerificationOutcome(Status.NO_FIXITY_INFO)
    records = []
    for i in indices:
        for rec in read_signature(doc.info_blocks[i]).records:
            if rec.reference_uri:
                raise MalformedFixity(
                    f"package signature Reference must not carry a URI, found {rec.reference_uri!r}")
            records.append(rec)
    try:
        body = canonicalize(doc, exclude_info_blocks=True)
    except DidlError as exc:
        return VerificationOutcome(Status.UNVERIFIABLE,
                                   tuple(ReferenceCheck(None, r.digest, error=str(exc)) for r in records))
    return _outcome([ReferenceCheck(None, r.digest, _rehash(r, body)) for r in records])
