"""Resolution and conversion of Resource provisioning.

A :class:`Fetcher` turns an absolute URI into bytes.  The resolver never
alters those bytes: content encodings are reported but only removed by an
explicit call to :func:`decode_content`.
"""

from __future__ import annotations

import base64
import binascii
import gzip
import hashlib
import logging
import os
import urllib.error
import urllib.request
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import BinaryIO, Callable, Mapping, Protocol, Sequence, Union
from urllib.parse import unquote, urlsplit

from .errors import (
    CorruptStream,
    DidlError,
    FetchFailed,
    InvalidBase64,
    SchemeUnsupported,
    UnsupportedEncoding,
    WriteFailed,
)
from .model import Component, Resource, decode_base64, uri_scheme

log = logging.getLogger(__name__)

FETCH_SCHEMES = ("file", "http", "https")
DEFAULT_TIMEOUT = 30.0
MAX_REDIRECTS = 5


class Fetcher(Protocol):
    """Anything that maps an absolute URI to bytes.

    ``max_concurrency`` caps parallel calls; ``1`` declares the fetcher serial.
    """

    max_concurrency: int | None

    def fetch(self, uri: str) -> bytes: ...


class MemoryFetcher:
    """Deterministic in-memory fetcher, mostly for tests."""

    max_concurrency = None

    def __init__(self, mapping: Mapping[str, bytes] | None = None):
        self.mapping = dict(mapping or {})

    def fetch(self, uri: str) -> bytes:
        try:
            return self.mapping[uri]
        except KeyError:
            raise FetchFailed(uri, "no such entry") from None


def file_uri_to_path(uri: str) -> Path:
    parts = urlsplit(uri)
    if parts.scheme.lower() != "file":
        raise SchemeUnsupported(uri)
    if parts.netloc not in ("", "localhost"):
        raise FetchFailed(uri, f"remote file host {parts.netloc!r} not supported")
    path = unquote(parts.path)
    if not path.startswith("/"):
        raise FetchFailed(uri, "file URI path must be absolute")
    return Path(path)


def path_to_file_uri(path: str | Path) -> str:
    return Path(path).resolve().as_uri()


class FileFetcher:
    max_concurrency = None

    def fetch(self, uri: str) -> bytes:
        path = file_uri_to_path(uri)
        try:
            return path.read_bytes()
        except OSError as exc:
            raise FetchFailed(uri, exc) from exc


class _LimitedRedirects(urllib.request.HTTPRedirectHandler):
    max_redirections = MAX_REDIRECTS


class HttpFetcher:
    """One GET per call; at most five redirects, no retries."""

    max_concurrency = 4

    def __init__(self, timeout: float = DEFAULT_TIMEOUT):
        self.timeout = timeout
        self._opener = urllib.request.build_opener(_LimitedRedirects)

    def fetch(self, uri: str) -> bytes:
        if uri_scheme(uri) not in ("http", "https"):
            raise SchemeUnsupported(uri)
        try:
            with self._opener.open(uri, timeout=self.timeout) as resp:
                return resp.read()
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise FetchFailed(uri, exc) from exc


class SchemeFetcher:
    """Dispatch on URI scheme, consulting exact-URI overrides first."""

    def __init__(self, by_scheme: Mapping[str, Fetcher],
                 overrides: Mapping[str, Path] | None = None):
        self.by_scheme = dict(by_scheme)
        self.overrides = dict(overrides or {})
        limits = [f.max_concurrency for f in self.by_scheme.values() if f.max_concurrency]
        self.max_concurrency = min(limits) if limits else None

    def fetch(self, uri: str) -> bytes:
        if uri in self.overrides:
            try:
                return Path(self.overrides[uri]).read_bytes()
            except OSError as exc:
                raise FetchFailed(uri, exc) from exc
        scheme = uri_scheme(uri)
        fetcher = self.by_scheme.get(scheme or "")
        if fetcher is None:
            if scheme in ("http", "https"):
                raise FetchFailed(uri, "network access is disabled")
            raise SchemeUnsupported(uri)
        return fetcher.fetch(uri)


def read_fetch_map(path: str | Path) -> dict[str, Path]:
    """Parse ``URI<TAB>path`` lines; relative paths are taken from the map's directory."""
    path = Path(path)
    out: dict[str, Path] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        uri, sep, target = line.partition("\t")
        if not sep or not target.strip():
            raise ValueError(f"{path}:{lineno}: expected 'URI<TAB>path'")
        target_path = Path(target.strip())
        if not target_path.is_absolute():
            target_path = path.parent / target_path
        out[uri.strip()] = target_path
    return out


def default_fetcher(allow_network: bool = False, fetch_map: Mapping[str, Path] | None = None,
                    timeout: float | None = None) -> SchemeFetcher:
    if timeout is None:
        timeout = float(os.environ.get("DIDLPACK_TIMEOUT_SECS", DEFAULT_TIMEOUT))
    schemes: dict[str, Fetcher] = {"file": FileFetcher()}
    if allow_network:
        http = HttpFetcher(timeout)
        schemes.update(http=http, https=http)
    return SchemeFetcher(schemes, fetch_map)


# --------------------------------------------------------------------------
# resolution
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ResolvedResource:
    data: bytes
    source: str
    sha256: bytes

    @classmethod
    def of(cls, data: bytes, source: str) -> "ResolvedResource":
        return cls(data, source, hashlib.sha256(data).digest())

    @property
    def sha256_hex(self) -> str:
        return self.sha256.hex()


def resolve_resource(r: Resource, f: Fetcher) -> ResolvedResource:
    if r.data is not None and r.ref is None:
        try:
            data = decode_base64(r.data)
        except (binascii.Error, ValueError) as exc:
            raise InvalidBase64(str(exc)) from None
        return ResolvedResource.of(data, f"by-value ({len(data)} bytes)")
    if r.ref is not None and r.data is None:
        if uri_scheme(r.ref) not in FETCH_SCHEMES:
            raise SchemeUnsupported(r.ref)
        return ResolvedResource.of(f.fetch(r.ref), r.ref)
    raise DidlError("resource must be exactly one of By Reference or By Value")


def resolve_all(resources: Sequence[Resource], f: Fetcher) -> list[Union[ResolvedResource, DidlError]]:
    """Resolve in parallel (within the fetcher's limit); results keep input order.

    Resolution errors are returned in place of results rather than raised.
    """
    def one(r):
        try:
            return resolve_resource(r, f)
        except DidlError as exc:
            return exc

    limit = getattr(f, "max_concurrency", None) or 8
    if limit == 1 or len(resources) < 2:
        return [one(r) for r in resources]
    with ThreadPoolExecutor(max_workers=min(limit, len(resources))) as pool:
        return list(pool.map(one, resources))


def embed_resource(r: Resource, f: Fetcher) -> Resource:
    if r.by_value:
        return r
    data = resolve_resource(r, f).data
    return replace(r, ref=None, data=base64.b64encode(data).decode("ascii"))


Sink = Union[BinaryIO, Callable[[bytes], object]]


def externalize_resource(r: Resource, f: Fetcher, target_uri: str, sink: Sink) -> Resource:
    """Write the resolved bytes to *sink* and point *r* at *target_uri* instead."""
    if uri_scheme(target_uri) not in FETCH_SCHEMES:
        raise SchemeUnsupported(target_uri)
    data = resolve_resource(r, f).data
    write = sink.write if hasattr(sink, "write") else sink
    try:
        write(data)
    except OSError as exc:
        raise WriteFailed(f"cannot write {target_uri}: {exc}") from exc
    return replace(r, ref=target_uri, data=None)


@dataclass(frozen=True)
class ResourceDigest:
    index: int
    sha256: str | None
    error: str | None = None


@dataclass(frozen=True)
class BitEquivalenceReport:
    equivalent: bool
    digests: tuple[ResourceDigest, ...]

    @property
    def complete(self) -> bool:
        return all(d.error is None for d in self.digests)

    def to_json(self) -> dict:
        return {
            "equivalent": self.equivalent,
            "digests": [{"resource": d.index, "sha256": d.sha256, "error": d.error}
                        for d in self.digests],
        }


def check_bit_equivalence(c: Component, f: Fetcher) -> BitEquivalenceReport:
    entries = []
    for i, res in enumerate(resolve_all(c.resources, f), 1):
        if isinstance(res, DidlError):
            entries.append(ResourceDigest(i, None, str(res)))
        else:
            entries.append(ResourceDigest(i, res.sha256_hex))
    ok = all(e.error is None for e in entries) and len({e.sha256 for e in entries}) <= 1
    return BitEquivalenceReport(ok, tuple(entries))


# --------------------------------------------------------------------------
# content encodings
# --------------------------------------------------------------------------

def _gunzip(data: bytes) -> bytes:
    try:
        return gzip.decompress(data)
    except (OSError, EOFError, zlib.error) as exc:
        raise CorruptStream("gzip", exc) from None


DECODERS: dict[str, Callable[[bytes], bytes]] = {
    "gzip": _gunzip,
    "identity": lambda data: data,
}


def decode_content(data: bytes, encodings: Sequence[str]) -> bytes:
    """Undo *encodings*, listed outermost first."""
    names = [e.lower() for e in encodings]
    for name in names:
        if name not in DECODERS:
            raise UnsupportedEncoding(name)
    for name in names:
        data = DECODERS[name](data)
    return data
