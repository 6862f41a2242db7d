from __future__ import annotations

import numpy as np
import pytest

from tadesign.model import Dataset, SiteRecord
from tadesign.synth import separable_spec, write_synth

_acceptance: list[tuple[str, str]] = []


def small_dataset(dist, attempts, mrs, paging=None, coords=None) -> Dataset:
    m = len(dist)
    paging = paging if paging is not None else [0] * m
    coords = coords if coords is not None else [(0.0, 0.01 * i) for i in range(m)]
    sites = [SiteRecord(i, coords[i][0], coords[i][1], paging[i]) for i in range(m)]
    return Dataset(sites, np.asarray(dist, float), np.asarray(attempts), np.asarray(mrs))


def random_dataset(rng: np.random.Generator, m: int) -> Dataset:
    d = rng.uniform(0.1, 20.0, (m, m))
    d = np.triu(d, 1)
    a = np.triu(rng.integers(0, 1000, (m, m)), 1)
    r = np.triu(rng.integers(0, 20000, (m, m)), 1)
    paging = rng.integers(0, 100_000, m).tolist()
    return small_dataset(d + d.T, a + a.T, r + r.T, paging)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synth_files(tmp_path_factory):
    """The separable preset (m=120, k=5, seed 7) written as CSV inputs."""
    root = tmp_path_factory.mktemp("synth")
    paths = {name: root / f"{name}.csv" for name in ("sites", "relations", "planted")}
    ds, labels = write_synth(separable_spec(7), paths["sites"], paths["relations"], paths["planted"])
    return paths, ds, labels


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.outcome == "passed" else "FAIL"
        _acceptance.append((status, f"{marker.args[0] if marker.args else item.name}"))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for status, name in _acceptance:
        terminalreporter.write_line(f"[{status}] {name}")
