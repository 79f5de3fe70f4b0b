import base64
import gzip
import hashlib
import io

import pytest
from hypothesis import given, settings, strategies as st

from didlpack.errors import (
    CorruptStream,
    FetchFailed,
    InvalidBase64,
    SchemeUnsupported,
    UnsupportedEncoding,
)
from didlpack.model import Component, Resource
from didlpack.resources import (
    FileFetcher,
    MemoryFetcher,
    SchemeFetcher,
    check_bit_equivalence,
    decode_content,
    default_fetcher,
    embed_resource,
    externalize_resource,
    file_uri_to_path,
    path_to_file_uri,
    read_fetch_map,
    resolve_all,
    resolve_resource,
)

from conftest import DATA, TIFF_URI, JP2_URI


class TestResolve:
    def test_by_value(self):
        res = resolve_resource(Resource("text/plain", data="TVBFRy0yMQ=="), MemoryFetcher())
        assert res.data == b"MPEG-21"
        assert res.sha256 == hashlib.sha256(b"MPEG-21").digest()

    def test_by_value_tolerates_line_breaks(self):
        data = base64.encodebytes(bytes(range(200))).decode()
        assert "\n" in data
        assert resolve_resource(Resource("a/b", data=data), MemoryFetcher()).data == bytes(range(200))

    def test_bad_base64(self):
        with pytest.raises(InvalidBase64):
            resolve_resource(Resource("a/b", data="!!!"), MemoryFetcher())

    def test_by_reference(self, stub_fetcher, stub_bytes):
        res = resolve_resource(Resource("image/tiff", ref=TIFF_URI), stub_fetcher)
        assert res.data == stub_bytes[TIFF_URI]
        assert res.source == TIFF_URI

    def test_unsupported_scheme(self, stub_fetcher):
        with pytest.raises(SchemeUnsupported):
            resolve_resource(Resource("a/b", ref="ftp://x/y"), stub_fetcher)

    def test_missing_entry(self, stub_fetcher):
        with pytest.raises(FetchFailed):
            resolve_resource(Resource("a/b", ref="http://nowhere/x"), stub_fetcher)

    def test_resolve_all_keeps_order_and_errors(self, stub_fetcher):
        out = resolve_all([Resource("a/b", ref=JP2_URI), Resource("a/b", data="!"),
                           Resource("a/b", ref=TIFF_URI)], stub_fetcher)
        assert out[0].source == JP2_URI
        assert isinstance(out[1], InvalidBase64)
        assert out[2].source == TIFF_URI

    def test_content_encodings_not_removed(self):
        packed = gzip.compress(b"hello")
        r = Resource("text/plain", data=base64.b64encode(packed).decode(), content_encodings=("gzip",))
        assert resolve_resource(r, MemoryFetcher()).data == packed


class TestFetchers:
    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "a b.bin"
        path.write_bytes(b"xyz")
        uri = path_to_file_uri(path)
        assert uri.startswith("file:///")
        assert file_uri_to_path(uri) == path.resolve()
        assert FileFetcher().fetch(uri) == b"xyz"

    def test_file_missing(self, tmp_path):
        with pytest.raises(FetchFailed):
            FileFetcher().fetch(path_to_file_uri(tmp_path / "nope"))

    def test_network_disabled(self):
        with pytest.raises(FetchFailed, match="network"):
            default_fetcher().fetch("http://example.invalid/x")

    def test_unknown_scheme(self):
        with pytest.raises(SchemeUnsupported):
            SchemeFetcher({}).fetch("gopher://x")

    def test_fetch_map(self, stub_bytes):
        mapping = read_fetch_map(DATA / "fetch-map.tsv")
        f = default_fetcher(fetch_map=mapping)
        assert f.fetch(TIFF_URI) == stub_bytes[TIFF_URI]
        assert f.fetch(JP2_URI) == stub_bytes[JP2_URI]

    def test_fetch_map_syntax(self, tmp_path):
        bad = tmp_path / "map.tsv"
        bad.write_text("http://x only-spaces\n")
        with pytest.raises(ValueError):
            read_fetch_map(bad)


class TestConversion:
    def test_embed(self, stub_fetcher, stub_bytes):
        r = embed_resource(Resource("image/tiff", ref=TIFF_URI), stub_fetcher)
        assert r.ref is None
        assert base64.b64decode(r.data) == stub_bytes[TIFF_URI]

    def test_embed_keeps_by_value(self):
        r = Resource("a/b", data="AAAA")
        assert embed_resource(r, MemoryFetcher()) is r

    def test_externalize(self, stub_fetcher, stub_bytes):
        sink = io.BytesIO()
        r = externalize_resource(Resource("image/jp2", ref=JP2_URI), stub_fetcher,
                                 "file:///tmp/out.jp2", sink)
        assert r.ref == "file:///tmp/out.jp2" and r.data is None
        assert sink.getvalue() == stub_bytes[JP2_URI]

    def test_externalize_callable_sink(self):
        got = []
        externalize_resource(Resource("a/b", data="TVBFRy0yMQ=="), MemoryFetcher(),
                             "http://x/y", got.append)
        assert got == [b"MPEG-21"]

    def test_externalize_relative_target_writes_nothing(self):
        sink = io.BytesIO()
        with pytest.raises(SchemeUnsupported):
            externalize_resource(Resource("a/b", data="AAAA"), MemoryFetcher(), "out/x.bin", sink)
        assert sink.getvalue() == b""

    @settings(max_examples=50, deadline=None)
    @given(st.binary(max_size=2048))
    def test_embed_externalize_inverse(self, data):
        uri = "http://example.org/x"
        f = MemoryFetcher({uri: data})
        embedded = embed_resource(Resource("a/b", ref=uri), f)
        sink = io.BytesIO()
        back = externalize_resource(embedded, f, uri, sink)
        assert back == Resource("a/b", ref=uri)
        assert sink.getvalue() == data


class TestBitEquivalence:
    def test_equal(self, stub_bytes):
        f = MemoryFetcher({"http://a/1": b"same", "http://a/2": b"same"})
        comp = Component(resources=(Resource("a/b", ref="http://a/1"), Resource("a/b", ref="http://a/2"),
                                    Resource("a/b", data=base64.b64encode(b"same").decode())))
        report = check_bit_equivalence(comp, f)
        assert report.equivalent and report.complete
        assert {d.sha256 for d in report.digests} == {hashlib.sha256(b"same").hexdigest()}

    def test_different(self):
        f = MemoryFetcher({"http://a/1": b"one", "http://a/2": b"two"})
        comp = Component(resources=(Resource("a/b", ref="http://a/1"), Resource("a/b", ref="http://a/2")))
        report = check_bit_equivalence(comp, f)
        assert not report.equivalent
        assert report.complete

    def test_unreachable(self):
        comp = Component(resources=(Resource("a/b", ref="http://a/1"), Resource("a/b", data="")))
        report = check_bit_equivalence(comp, MemoryFetcher())
        assert not report.equivalent and not report.complete
        assert report.to_json()["digests"][0]["error"]

    def test_single_resource(self, stub_fetcher):
        assert check_bit_equivalence(Component(resources=(Resource("a/b", ref=TIFF_URI),)),
                                     stub_fetcher).equivalent


class TestDecode:
    def test_gzip_oracle(self):
        assert decode_content(gzip.compress(b"payload"), ["gzip"]) == b"payload"

    def test_outermost_first(self):
        data = gzip.compress(gzip.compress(b"x"))
        assert decode_content(data, ["GZIP", "identity", "gzip"]) == b"x"

    def test_unknown_encoding(self):
        with pytest.raises(UnsupportedEncoding):
            decode_content(gzip.compress(b"x"), ["gzip", "zstd"])

    def test_corrupt(self):
        with pytest.raises(CorruptStream):
            decode_content(b"not gzip", ["gzip"])

    @given(st.binary(max_size=4096))
    def test_gzip_inverse(self, data):
        assert decode_content(gzip.compress(data), ["gzip"]) == data
        assert decode_content(data, []) == data
