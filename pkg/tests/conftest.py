from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from didlpack.resources import MemoryFetcher  # noqa: E402
from didlpack.xmlio import parse_didl  # noqa: E402

DATA = Path(__file__).parent / "data"
TIFF_URI = "http://foo/bar/pict/015997845.tiff"
JP2_URI = "http://foo/bar/pict/015997845.jp2"


@pytest.fixture(scope="session")
def fixture_bytes() -> bytes:
    return (DATA / "sample_package.xml").read_bytes()


@pytest.fixture(scope="session")
def fixture_doc(fixture_bytes):
    return parse_didl(fixture_bytes).document


@pytest.fixture(scope="session")
def stub_bytes() -> dict[str, bytes]:
    return {TIFF_URI: (DATA / "015997845.tiff").read_bytes(),
            JP2_URI: (DATA / "015997845.jp2").read_bytes()}


@pytest.fixture
def stub_fetcher(stub_bytes) -> MemoryFetcher:
    return MemoryFetcher(stub_bytes)


# -- acceptance summary ------------------------------------------------------

_RESULTS: dict[int, list[bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and (report.when == "call" or report.failed):
        _RESULTS.setdefault(marker.args[0], []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok = all(_RESULTS[n])
        terminalreporter.write_line(f"AC-{n}: {'PASS' if ok else 'FAIL'} ({len(_RESULTS[n])} check(s))")
