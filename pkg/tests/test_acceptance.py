"""Acceptance criteria AC-1 .. AC-9.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary prints
one PASS/FAIL line per criterion.
"""

import hashlib
import io
import json
import random
import re
import time
from dataclasses import replace

import pytest

import didlpack.fixity
from didlpack.assembler import build_package, load_manifest, unpack_package
from didlpack.cli import run_cli
from didlpack.fixity import Status, attach_package_fixity, verify_component_fixity, verify_package_fixity
from didlpack.model import (
    Component,
    Resource,
    SemanticKind,
    XmlFragment,
    classify_statement,
    get_content_identifier,
)
from didlpack.profile import ERROR, validate_profile
from didlpack.resources import (
    FileFetcher,
    MemoryFetcher,
    check_bit_equivalence,
    embed_resource,
    externalize_resource,
    resolve_resource,
)
from didlpack.xmlio import parse_didl, serialize_didl

from conftest import DATA
from docgen import random_document
from test_profile import MUTATIONS

FETCH_MAP = str(DATA / "fetch-map.tsv")


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


@pytest.mark.acceptance(1)
def test_ac1_fixture_fidelity():
    with Timer() as t:
        doc = parse_didl((DATA / "sample_package.xml").read_bytes()).document
        item = doc.item
        assert doc.document_id == "info:lanl-repo/i/11d8-a819-b1db893d21e6"
        assert item.id == "uuid-00004342-c477-11d8-a819-b1db893d21e6"
        assert get_content_identifier(item) == "urn:foo/015997845"
        assert len(item.components) == 2
        assert [c.resources[0].mime_type for c in item.components] == ["image/tiff", "image/jp2"]
        assert [c.resources[0].ref for c in item.components] == [
            "http://foo/bar/pict/015997845.tiff", "http://foo/bar/pict/015997845.jp2"]
        assert len(doc.info_blocks) == 1
        for comp in item.components:
            kinds = {s.fragment.local_name: classify_statement(s)
                     for d in comp.descriptors for s in d.statements}
            assert kinds == {"jhove": SemanticKind.REPRESENTATION_INFO, "Signature": SemanticKind.FIXITY}
    assert t.elapsed < 1.0, t.elapsed


@pytest.mark.acceptance(2)
def test_ac2_round_trip_fixpoint():
    with Timer() as t:
        sources = [(DATA / "sample_package.xml").read_bytes()]
        sources += [serialize_didl(random_document(random.Random(seed))) for seed in range(1000)]
        for data in sources:
            parsed = parse_didl(data).document
            out = serialize_didl(parsed)
            assert parse_didl(out).document == parsed
            assert serialize_didl(parsed) == out
            assert serialize_didl(parse_didl(out).document) == out
    assert len(sources) >= 1001
    assert t.elapsed < 30.0, t.elapsed


@pytest.mark.acceptance(3)
def test_ac3_profile_mutation_suite(fixture_doc):
    with Timer() as t:
        clean = validate_profile(fixture_doc)
        assert clean.rule_ids(ERROR) == set()
        assert clean.passed
        for n in range(1, 16):
            rule = f"PR-{n:02d}"
            mutate, implied = MUTATIONS[rule]
            fired = validate_profile(mutate(fixture_doc)).rule_ids()
            assert rule in fired, rule
            assert fired <= {rule} | implied, (rule, fired)
    assert t.elapsed < 10.0, t.elapsed


@pytest.mark.acceptance(4)
def test_ac4_provisioning_round_trips():
    rng = random.Random(4)
    lengths = [0, 1, 64 * 1024] + [rng.randint(0, 64 * 1024) for _ in range(97)]
    uri = "http://example.org/blob"
    for length in lengths:
        data = rng.randbytes(length)
        digest = hashlib.sha256(data).digest()
        f = MemoryFetcher({uri: data})
        embedded = embed_resource(Resource("application/octet-stream", ref=uri), f)
        assert resolve_resource(embedded, MemoryFetcher()).sha256 == digest
        sink = io.BytesIO()
        external = externalize_resource(embedded, MemoryFetcher(), "http://example.org/out", sink)
        assert resolve_resource(external, MemoryFetcher({"http://example.org/out": sink.getvalue()})).sha256 \
            == digest
    vector = embed_resource(Resource("text/plain", ref=uri), MemoryFetcher({uri: b"MPEG-21"}))
    assert vector.data == "TVBFRy0yMQ=="
    assert resolve_resource(Resource("text/plain", data="TVBFRy0yMQ=="), MemoryFetcher()).data == b"MPEG-21"
    empty = embed_resource(Resource("text/plain", ref=uri), MemoryFetcher({uri: b""}))
    assert empty.data == "" and resolve_resource(empty, MemoryFetcher()).data == b""


@pytest.mark.acceptance(5)
def test_ac5_digest_vectors():
    quoted = dict(re.findall(r'sha256\("(\w*)"\)\s*=\s*([0-9a-f]{64})', didlpack.fixity.__doc__))
    assert quoted == {
        "": "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
        "abc": "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad",
    }
    for text, expected in quoted.items():
        assert didlpack.fixity.compute_digest(text.encode()).hex == expected
        assert hashlib.sha256(text.encode()).hexdigest() == expected


def _sealed_package():
    data = {"http://x/a.bin": b"alpha-bytes", "http://x/b.bin": b"\x00\x01beta"}
    m = load_manifest(json.dumps({
        "packageId": "info:example/pkg/1",
        "contentId": "urn:example/1",
        "resources": [{"source": uri, "mimeType": "application/octet-stream"} for uri in data],
        "fixity": {"enabled": True},
    }))
    doc = build_package(m, MemoryFetcher(data))
    comps = tuple(replace(c, id=f"c{i}") for i, c in enumerate(doc.item.components))
    doc = replace(doc, items=(replace(doc.item, id="i0", components=comps),))
    note = XmlFragment.from_bytes(b'<x:note xmlns:x="urn:example:notes">created</x:note>')
    return attach_package_fixity(replace(doc, info_blocks=(note,) + doc.info_blocks)), data


def _attribute_edits(doc):
    """Every DIDL attribute outside DIDLInfo, edited once."""
    item = doc.item

    def comp(i, **kw):
        comps = list(item.components)
        comps[i] = replace(comps[i], **kw)
        return replace(doc, items=(replace(item, components=tuple(comps)),))

    yield replace(doc, document_id=doc.document_id + "x")
    yield replace(doc, items=(replace(item, id="i1"),))
    for i, c in enumerate(item.components):
        yield comp(i, id=c.id + "x")
        res = c.resources[0]
        yield comp(i, resources=(replace(res, mime_type="application/x-other"),))
        yield comp(i, resources=(replace(res, ref=res.ref + "x"),))
        yield comp(i, resources=(replace(res, ref=None, data=""),))


@pytest.mark.acceptance(6)
def test_ac6_fixity_closure_and_tamper_detection():
    doc, data = _sealed_package()
    f = MemoryFetcher(data)
    for comp in doc.item.components:
        assert verify_component_fixity(comp, f).status == Status.MATCH
    assert verify_package_fixity(doc).status == Status.MATCH
    assert verify_package_fixity(parse_didl(serialize_didl(doc)).document).status == Status.MATCH

    for ci, comp in enumerate(doc.item.components):
        uri = comp.resources[0].ref
        for pos in range(len(data[uri])):
            for bit in range(8):
                flipped = bytearray(data[uri])
                flipped[pos] ^= 1 << bit
                tampered = MemoryFetcher({**data, uri: bytes(flipped)})
                assert verify_component_fixity(comp, tampered).status == Status.MISMATCH

    edits = list(_attribute_edits(doc))
    assert len(edits) == 10
    for edited in edits:
        assert verify_package_fixity(edited).status == Status.MISMATCH

    note = XmlFragment.from_bytes(b'<x:note xmlns:x="urn:example:notes">edited later</x:note>')
    relabelled = replace(doc, info_blocks=(note,) + doc.info_blocks[1:])
    assert verify_package_fixity(relabelled).status == Status.MATCH


@pytest.mark.acceptance(7)
def test_ac7_bit_equivalence(stub_bytes):
    tiff = stub_bytes["http://foo/bar/pict/015997845.tiff"]
    comp = Component(resources=(Resource("image/tiff", ref="http://a/1"), Resource("image/tiff", ref="http://a/2")))
    same = check_bit_equivalence(comp, MemoryFetcher({"http://a/1": tiff, "http://a/2": tiff}))
    assert same.equivalent
    assert len({d.sha256 for d in same.digests}) == 1

    different = check_bit_equivalence(comp, MemoryFetcher({"http://a/1": tiff, "http://a/2": tiff[:-1]}))
    assert not different.equivalent
    digests = [d.sha256 for d in different.digests]
    assert len(set(digests)) == 2
    assert digests == [hashlib.sha256(tiff).hexdigest(), hashlib.sha256(tiff[:-1]).hexdigest()]


@pytest.mark.acceptance(8)
def test_ac8_build_unpack_round_trip(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    big = random.Random(8).randbytes(10 * 1024 * 1024)
    (src / "master.tiff").write_bytes(big)
    (src / "derivative.jp2").write_bytes((DATA / "015997845.jp2").read_bytes())
    (src / "manifest.json").write_text(json.dumps({
        "contentId": "urn:foo/015997845",
        "resources": [{"source": "master.tiff", "mimeType": "image/tiff"},
                      {"source": "derivative.jp2", "mimeType": "image/jp2", "embed": True}],
        "fixity": {"enabled": True},
    }))
    with Timer() as t:
        m = load_manifest((src / "manifest.json").read_bytes(), src)
        doc = build_package(m, FileFetcher())
        reparsed = parse_didl(serialize_didl(doc)).document
        result = unpack_package(reparsed, FileFetcher(), tmp_path / "out")
    assert t.elapsed < 5.0, t.elapsed
    assert result.status == "ok"
    out = tmp_path / "out"
    for produced, original in (("1-1.tiff", "master.tiff"), ("2-1.jp2", "derivative.jp2")):
        assert hashlib.sha256((out / produced).read_bytes()).digest() \
            == hashlib.sha256((src / original).read_bytes()).digest()
    assert (out / "package.id").read_text(encoding="utf-8").strip() == m.content_id


@pytest.mark.acceptance(9)
def test_ac9_cli_contract(tmp_path, capsys):
    fixture = str(DATA / "sample_package.xml")
    broken = tmp_path / "broken.xml"
    broken.write_bytes((DATA / "sample_package.xml").read_bytes().replace(b' mimeType="image/jp2"', b""))

    assert run_cli(["validate", fixture]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True

    assert run_cli(["inspect", fixture]) == 0
    table = capsys.readouterr().out
    assert "urn:foo/015997845" in table and "image/tiff" in table and "image/jp2" in table

    assert run_cli(["validate", str(broken)]) == 1
    report = json.loads(capsys.readouterr().out)
    assert "PR-05" in {f["ruleId"] for f in report["findings"]}

    assert run_cli(["verify", fixture, "--fetch-map", FETCH_MAP]) == 0
    assert json.loads(capsys.readouterr().out)["package"]["status"] == "Match"

    assert run_cli(["verify", fixture]) == 3
    assert json.loads(capsys.readouterr().out)["components"][0]["status"] == "Unverifiable"

    assert run_cli(["no-such-command"]) == 2
    assert run_cli(["validate"]) == 2
