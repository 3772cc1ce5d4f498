# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Mirrors ``_kernels_py`` exactly; see that module for semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt

cnp.import_array()


cdef void _insertion_rank(const double[:] n, Py_ssize_t lo, Py_ssize_t hi,
                          Py_ssize_t[:] buf) noexcept nogil:
    # order positions lo..hi-1 by count descending, position ascending
    cdef Py_ssize_t i, j, m = hi - lo, cur
    for i in range(m):
        buf[i] = lo + i
    for i in range(1, m):
        cur = buf[i]
        j = i - 1
        while j >= 0 and (n[buf[j]] < n[cur] or (n[buf[j]] == n[cur] and buf[j] > cur)):
            buf[j + 1] = buf[j]
            j -= 1
        buf[j + 1] = cur


def histogram_indicators(const cnp.int64_t[:] offsets, const double[:] x, const double[:] y,
                         const double[:] n, Py_ssize_t k):
    cdef Py_ssize_t G = offsets.shape[0] - 1
    cdef Py_ssize_t g, i, lo, hi, m, maxm = 0
    cdef double N, sx, sy, cx, cy, acc, dx, dy, p, ent
    rg_a = np.zeros(G, dtype=np.float64)
    rgk_a = np.zeros(G, dtype=np.float64)
    ent_a = np.zeros(G, dtype=np.float64)
    nloc_a = np.zeros(G, dtype=np.int64)
    cdef double[:] rg = rg_a
    cdef double[:] rgk = rgk_a
    cdef double[:] ent_out = ent_a
    cdef cnp.int64_t[:] nloc = nloc_a
    for g in range(G):
        if offsets[g + 1] - offsets[g] > maxm:
            maxm = offsets[g + 1] - offsets[g]
    buf_a = np.empty(max(maxm, 1), dtype=np.intp)
    flag_a = np.zeros(x.shape[0], dtype=np.uint8)
    cdef Py_ssize_t[:] buf = buf_a
    cdef cnp.uint8_t[:] flag = flag_a

    with nogil:
        for g in range(G):
            lo = offsets[g]
            hi = offsets[g + 1]
            m = hi - lo
            nloc[g] = m
            N = 0.0
            sx = 0.0
            sy = 0.0
            for i in range(lo, hi):
                N = N + n[i]
                sx = sx + n[i] * x[i]
                sy = sy + n[i] * y[i]
            cx = sx / N
            cy = sy / N
            acc = 0.0
            for i in range(lo, hi):
                dx = x[i] - cx
                dy = y[i] - cy
                acc = acc + n[i] * (dx * dx + dy * dy)
            # one location: exactly zero, whatever the centroid rounding
            rg[g] = sqrt(acc / N) if m > 1 else 0.0

            if N <= 1.0 or m == 1:
                ent_out[g] = 0.0
            else:
                ent = 0.0
                for i in range(lo, hi):
                    p = n[i] / N
                    ent = ent + p * log(p)
                ent_out[g] = -ent / log(N)

            if m <= k:
                rgk[g] = rg[g]
            else:
                _insertion_rank(n, lo, hi, buf)
                for i in range(k):
                    flag[buf[i]] = 1
                N = 0.0
                sx = 0.0
                sy = 0.0
                for i in range(lo, hi):
                    if flag[i]:
                        N = N + n[i]
                        sx = sx + n[i] * x[i]
                        sy = sy + n[i] * y[i]
                cx = sx / N
                cy = sy / N
                acc = 0.0
                for i in range(lo, hi):
                    if flag[i]:
                        dx = x[i] - cx
                        dy = y[i] - cy
                        acc = acc + n[i] * (dx * dx + dy * dy)
                        flag[i] = 0
                rgk[g] = sqrt(acc / N) if k > 1 else 0.0
    return rg_a, rgk_a, ent_a, nloc_a


def classify_slots(const cnp.int64_t[:] ts, cnp.int64_t tz_offset_s, cnp.int64_t day0,
                   const cnp.uint8_t[:] holiday_by_day):
    cdef Py_ssize_t i, R = ts.shape[0], D = holiday_by_day.shape[0]
    cdef cnp.int64_t local, d, hour
    day_a = np.empty(R, dtype=np.int32)
    hour_a = np.empty(R, dtype=np.int8)
    slot_a = np.empty(R, dtype=np.int8)
    cdef cnp.int32_t[:] day = day_a
    cdef cnp.int8_t[:] hr = hour_a
    cdef cnp.int8_t[:] slot = slot_a
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(R):
            local = ts[i] + tz_offset_s
            d = local // 86400 - day0
            if d < 0 or d >= D:
                bad = i
                break
            hour = (local % 86400) // 3600
            day[i] = <cnp.int32_t>d
            hr[i] = <cnp.int8_t>hour
            if holiday_by_day[d]:
                slot[i] = 2
            elif 9 <= hour < 16:
                slot[i] = 1
            elif hour >= 22 or hour < 6:
                slot[i] = 2
            else:
                slot[i] = 0
    if bad >= 0:
        raise ValueError(f"timestamp {ts[bad]} lies outside the calendar period")
    return day_a, hour_a, slot_a
