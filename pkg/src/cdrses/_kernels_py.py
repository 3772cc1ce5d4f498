"""Numpy implementations of the hot loops.

Both functions operate on flat, grouped arrays so that one call covers every
subscriber.  ``offsets`` is a CSR-style index: group ``g`` owns entries
``offsets[g]:offsets[g + 1]``, sorted by location id, each with count >= 1.
"""

import numpy as np

NEITHER, WORK, HOME = 0, 1, 2


def histogram_indicators(offsets, x, y, n, k):
    """Radius of gyration, top-k radius, normalized entropy and location count per group.

    Sums run sequentially in entry order (``np.bincount``), so results are
    reproducible bit for bit; groups with at most ``k`` entries reuse the
    full radius, which makes ``rg_k == rg`` exact there.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    G = len(offsets) - 1
    sizes = np.diff(offsets)
    g = np.repeat(np.arange(G), sizes)

    N = np.bincount(g, weights=n, minlength=G)
    cx = np.bincount(g, weights=n * x, minlength=G) / N
    cy = np.bincount(g, weights=n * y, minlength=G) / N
    dx = x - cx[g]
    dy = y - cy[g]
    rg = np.sqrt(np.bincount(g, weights=n * (dx * dx + dy * dy), minlength=G) / N)
    # one location: exactly zero, whatever the centroid rounding
    rg[sizes == 1] = 0.0

    p = n / N[g]
    plogp = np.bincount(g, weights=p * np.log(p), minlength=G)
    degenerate = (N <= 1.0) | (sizes == 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(degenerate, 0.0, -plogp / np.log(np.where(degenerate, 2.0, N)))
    ent = np.where(degenerate, 0.0, ent)

    rgk = rg.copy()
    big = sizes > k
    if big.any():
        pos = np.arange(len(n))
        order = np.lexsort((pos, -n, g))
        rank = np.empty(len(n), dtype=np.int64)
        rank[order] = pos - offsets[g[order]]
        sel = (rank < k) & big[g]
        gs, xs, ys, ns = g[sel], x[sel], y[sel], n[sel]
        Nk = np.bincount(gs, weights=ns, minlength=G)
        with np.errstate(divide="ignore", invalid="ignore"):
            kx = np.bincount(gs, weights=ns * xs, minlength=G) / Nk
            ky = np.bincount(gs, weights=ns * ys, minlength=G) / Nk
            ddx = xs - kx[gs]
            ddy = ys - ky[gs]
            rk = np.sqrt(np.bincount(gs, weights=ns * (ddx * ddx + ddy * ddy), minlength=G) / Nk)
        rgk[big] = rk[big] if k > 1 else 0.0
    return rg, rgk, ent, sizes.astype(np.int64)


def classify_slots(ts, tz_offset_s, day0, holiday_by_day):
    """Local day index, local hour and anchor time-window code for each timestamp."""
    ts = np.asarray(ts, dtype=np.int64)
    holiday_by_day = np.asarray(holiday_by_day, dtype=np.uint8)
    local = ts + np.int64(tz_offset_s)
    day = local // 86400 - np.int64(day0)
    bad = (day < 0) | (day >= len(holiday_by_day))
    if bad.any():
        raise ValueError(f"timestamp {ts[np.argmax(bad)]} lies outside the calendar period")
    hour = (local % 86400) // 3600
    hol = holiday_by_day[day].astype(bool)
    slot = np.full(len(ts), NEITHER, dtype=np.int8)
    slot[(hour >= 22) | (hour < 6)] = HOME
    slot[(hour >= 9) & (hour < 16)] = WORK
    slot[hol] = HOME
    return day.astype(np.int32), hour.astype(np.int8), slot
