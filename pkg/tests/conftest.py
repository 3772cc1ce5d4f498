import shutil
from pathlib import Path

import numpy as np
import pytest

from cdrses import cli

DATA = Path(__file__).parent / "data"


def random_histograms(seed, count, max_locations=12):
    """Seeded list of (points_km, counts) pairs with integer counts >= 1."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        L = int(rng.integers(1, max_locations + 1))
        pts = rng.normal(0, 10, size=(L, 2))
        n = rng.integers(1, 60, size=L).astype(float)
        out.append((pts, n))
    return out


def pack(hists):
    """CSR arrays for a list of histograms."""
    sizes = [len(n) for _, n in hists]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    x = np.concatenate([p[:, 0] for p, _ in hists])
    y = np.concatenate([p[:, 1] for p, _ in hists])
    n = np.concatenate([c for _, c in hists])
    return offsets, x, y, n


@pytest.fixture(scope="session")
def small_city(tmp_path_factory):
    """A 1000-SIM synthetic city written to disk with its run config."""
    d = tmp_path_factory.mktemp("city")
    assert cli.main(["synth", "--seed", "7", "--sims", "1000", "--cells", "120", "--out", str(d)]) == 0
    return d


@pytest.fixture(scope="session")
def small_run(small_city, tmp_path_factory):
    """Full pipeline output for ``small_city``."""
    out = tmp_path_factory.mktemp("run") / "out"
    assert cli.main(["pipeline", "--config", str(small_city / "run.cfg"), "--outdir", str(out)]) == 0
    return out


@pytest.fixture
def city_copy(small_city, tmp_path):
    d = tmp_path / "city"
    shutil.copytree(small_city, d, ignore=shutil.ignore_patterns("out"))
    return d



ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
