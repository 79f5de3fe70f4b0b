import json
import shutil
import subprocess
import sys

import pytest

from didlpack.cli import run_cli

from conftest import DATA

FETCH_MAP = str(DATA / "fetch-map.tsv")


@pytest.fixture
def fixture_path(tmp_path):
    path = tmp_path / "fixture.xml"
    shutil.copy(DATA / "sample_package.xml", path)
    return str(path)


@pytest.fixture
def broken_path(tmp_path):
    path = tmp_path / "broken.xml"
    path.write_bytes((DATA / "sample_package.xml").read_bytes().replace(b'mimeType="image/tiff"', b"", 1))
    return str(path)


def test_validate_fixture(fixture_path, capsys):
    assert run_cli(["validate", fixture_path]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report == {"passed": True, "findings": []}


def test_validate_broken(broken_path, tmp_path, capsys):
    out = tmp_path / "report.json"
    assert run_cli(["validate", broken_path, "--report", str(out)]) == 1
    report = json.loads(out.read_text())
    assert "PR-05" in {f["ruleId"] for f in report["findings"]}


def test_validate_unparsable(tmp_path, capsys):
    path = tmp_path / "junk.xml"
    path.write_bytes(b"<DIDL")
    assert run_cli(["validate", str(path)]) == 1
    assert json.loads(capsys.readouterr().out)["findings"][0]["ruleId"] == "PARSE"


def test_validate_lenient(tmp_path, capsys):
    path = tmp_path / "noid.xml"
    path.write_bytes(b'<DIDL xmlns="urn:mpeg:mpeg21:2002:02-DIDL-NS"><Item/></DIDL>')
    assert run_cli(["validate", str(path)]) == 1
    assert run_cli(["validate", "--lenient", str(path)]) == 0


def test_inspect(fixture_path, capsys):
    assert run_cli(["inspect", fixture_path]) == 0
    out = capsys.readouterr().out
    for needle in ("urn:foo/015997845", "image/tiff", "image/jp2", "info:lanl-repo/i/11d8-a819-b1db893d21e6"):
        assert needle in out


def test_verify_with_fetch_map(fixture_path, capsys):
    assert run_cli(["verify", fixture_path, "--fetch-map", FETCH_MAP]) == 0
    report = json.loads(capsys.readouterr().out)
    assert [c["status"] for c in report["components"]] == ["Match", "Match"]
    assert report["package"]["status"] == "Match"
    assert all(e["equivalent"] for e in report["bitEquivalence"])


def test_verify_without_network_is_io_error(fixture_path, capsys):
    assert run_cli(["verify", fixture_path, "--components"]) == 3
    report = json.loads(capsys.readouterr().out)
    assert set(report) == {"components"}


def test_verify_package_only_needs_no_fetch(fixture_path, capsys):
    assert run_cli(["verify", fixture_path, "--package"]) == 0


def test_verify_mismatch(tmp_path, capsys):
    path = tmp_path / "tampered.xml"
    path.write_bytes((DATA / "sample_package.xml").read_bytes()
                     .replace(b"uuid-00004342-c477", b"uuid-00004342-c478"))
    assert run_cli(["verify", str(path), "--package"]) == 1
    assert json.loads(capsys.readouterr().out)["package"]["status"] == "Mismatch"


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["validate"], ["externalize", "x.xml", "-d", "out"],
                                  ["unpack", "x.xml"]])
def test_usage_errors(argv, capsys):
    assert run_cli(argv) == 2


def test_missing_input_is_io_error(tmp_path, capsys):
    assert run_cli(["inspect", str(tmp_path / "absent.xml")]) == 3


def test_unpack(fixture_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert run_cli(["unpack", fixture_path, "-d", str(out), "--fetch-map", FETCH_MAP]) == 0
    assert sorted(p.name for p in out.iterdir()) == [
        "1-1.tiff", "2-1.jp2", "package.id", "repinfo-1-1.xml", "repinfo-2-1.xml", "report.json"]


def test_unpack_blocked(broken_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert run_cli(["unpack", broken_path, "-d", str(out)]) == 1
    assert not out.exists()
    assert json.loads(capsys.readouterr().out)["passed"] is False


def test_build_then_validate(tmp_path, capsys):
    (tmp_path / "a.txt").write_bytes(b"alpha")
    (tmp_path / "b.txt").write_bytes(b"beta")
    (tmp_path / "m.json").write_text(json.dumps({
        "contentId": "urn:x/1",
        "resources": [{"source": "a.txt", "mimeType": "text/plain"},
                      {"source": "b.txt", "mimeType": "text/plain", "embed": True}],
        "fixity": {"enabled": True},
    }))
    pkg = tmp_path / "pkg.xml"
    assert run_cli(["build", str(tmp_path / "m.json"), "-o", str(pkg)]) == 0
    assert run_cli(["validate", str(pkg)]) == 0
    assert run_cli(["verify", str(pkg)]) == 0


def test_build_bad_manifest(tmp_path, capsys):
    (tmp_path / "m.json").write_text('{"contentId": "urn:x", "resources": []}')
    assert run_cli(["build", str(tmp_path / "m.json")]) == 1


def test_build_unreachable_source(tmp_path, capsys):
    (tmp_path / "m.json").write_text(json.dumps({
        "contentId": "urn:x", "resources": [{"source": "gone.bin", "mimeType": "a/b", "embed": True}]}))
    assert run_cli(["build", str(tmp_path / "m.json")]) == 3


def test_embed_externalize_verify(fixture_path, tmp_path, capsys):
    embedded, external = tmp_path / "embedded.xml", tmp_path / "external.xml"
    files = tmp_path / "files"
    assert run_cli(["embed", fixture_path, "-o", str(embedded), "--fetch-map", FETCH_MAP]) == 0
    assert b'encoding="base64"' in embedded.read_bytes()
    assert run_cli(["verify", str(embedded)]) == 0
    assert run_cli(["externalize", str(embedded), "--base-uri", files.as_uri(),
                    "-d", str(files), "-o", str(external)]) == 0
    assert sorted(p.name for p in files.iterdir()) == ["1-1.tiff", "2-1.jp2"]
    assert run_cli(["verify", str(external)]) == 0


def test_embed_without_sources_is_io_error(fixture_path, capsys):
    assert run_cli(["embed", fixture_path]) == 3


def test_namespace_registry_flag(tmp_path, fixture_path, capsys):
    reg = tmp_path / "ns.txt"
    reg.write_text("RepresentationInfo urn:x:techmd\n")
    assert run_cli(["validate", fixture_path, "--namespaces", str(reg)]) == 0


def test_deterministic_output(fixture_path, capsys):
    outputs = []
    for _ in range(2):
        assert run_cli(["embed", fixture_path, "--fetch-map", FETCH_MAP]) == 0
        outputs.append(capsys.readouterr().out)
    assert outputs[0] == outputs[1]


def test_console_entry_point(fixture_path):
    proc = subprocess.run([sys.executable, "-m", "didlpack", "validate", fixture_path],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["passed"] is True
    assert "passed" in proc.stderr
