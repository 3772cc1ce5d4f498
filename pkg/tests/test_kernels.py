import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdrses import _kernels_py, kernels
from cdrses.calendars import HolidayCalendar

from conftest import pack, random_histograms

BACKENDS = kernels.backends()


def test_fallback_always_available():
    assert "numpy" in BACKENDS
    assert kernels.BACKEND in ("cython", "numpy")


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")
def test_backends_agree_on_random_histograms():
    args = pack(random_histograms(11, 3000, max_locations=30))
    for k in (1, 2, 3, 7):
        a = BACKENDS["numpy"].histogram_indicators(*args, k)
        b = BACKENDS["cython"].histogram_indicators(*args, k)
        # rg, rg_k and counts use identical summation order
        for i in (0, 1, 3):
            np.testing.assert_array_equal(a[i], b[i])
        # log() may differ in the last bit between numpy and libm
        np.testing.assert_allclose(a[2], b[2], rtol=0, atol=1e-14)


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")
def test_backends_agree_on_slots():
    cal = HolidayCalendar()
    rng = np.random.default_rng(3)
    ts = rng.integers(cal.start_ts(), cal.end_ts(), 200_000).astype(np.int64)
    a = BACKENDS["numpy"].classify_slots(ts, cal.tz_offset_s, cal.day0, cal.holiday_mask())
    b = BACKENDS["cython"].classify_slots(ts, cal.tz_offset_s, cal.day0, cal.holiday_mask())
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_out_of_period_timestamp_rejected(name):
    cal = HolidayCalendar()
    with pytest.raises(ValueError):
        BACKENDS[name].classify_slots(np.array([cal.end_ts()]), cal.tz_offset_s, cal.day0, cal.holiday_mask())


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_empty_input(name):
    out = BACKENDS[name].histogram_indicators(np.array([0], dtype=np.int64), np.zeros(0), np.zeros(0),
                                              np.zeros(0), 2)
    assert all(len(o) == 0 for o in out)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(-50, 50), st.integers(1, 30)),
                min_size=1, max_size=15, unique_by=lambda t: (t[0], t[1])),
       st.integers(1, 6))
def test_group_split_does_not_change_results(rows, k):
    # one histogram evaluated alone equals the same histogram inside a batch
    x = np.array([r[0] for r in rows], float)
    y = np.array([r[1] for r in rows], float)
    n = np.array([r[2] for r in rows], float)
    alone = kernels.histogram_indicators(np.array([0, len(rows)]), x, y, n, k)
    xx, yy, nn = np.r_[x, x[::-1]], np.r_[y, y[::-1]], np.r_[n, n[::-1]]
    batch = kernels.histogram_indicators(np.array([0, len(rows), 2 * len(rows)]), xx, yy, nn, k)
    for a, b in zip(alone, batch):
        assert a[0] == b[0]


def test_environment_variable_forces_fallback():
    code = "from cdrses import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, CDRSES_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_slot_codes_exposed():
    assert (kernels.NEITHER, kernels.WORK, kernels.HOME) == (_kernels_py.NEITHER, _kernels_py.WORK,
                                                            _kernels_py.HOME)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_single_location_and_k1_exactly_zero(name):
    rng = np.random.default_rng(8)
    x, y = rng.normal(0, 20, 400), rng.normal(0, 20, 400)
    n = rng.integers(1, 97, 400).astype(float)
    single = BACKENDS[name].histogram_indicators(np.arange(401, dtype=np.int64), x, y, n, 1)
    assert np.all(single[0] == 0.0) and np.all(single[1] == 0.0)
    pairs = BACKENDS[name].histogram_indicators(np.arange(0, 401, 4, dtype=np.int64), x, y, n, 1)
    assert np.all(pairs[1] == 0.0)
