"""Mobility indicators: radius of gyration, top-k radius, visit entropy, travel diversity.

Locations are weighted by record counts. Single-histogram helpers wrap the
batched kernel so both paths share one implementation; the batched
functions evaluate every (SIM, day type) or (SIM, day) group in one call.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import kernels
from .calendars import DAY_NAMES, DAY_TYPES, HOLIDAY, WORKDAY
from .traces import Traces

RETURNER, EXPLORER, UNDEFINED = "returner", "explorer", "undefined"
INDICATOR_COLUMNS = ["sim_id", "day_type", "rg_km", "rg2_km", "entropy", "mobility_class",
                     "location_count", "travel_diversity"]
DAILY_COLUMNS = ["sim_id", "date", "day_type", "rg_km", "entropy", "location_count"]


@dataclass
class VisitHistogram:
    """Record counts per location; ``xy`` in km, rows sorted by location id."""

    ids: list
    counts: np.ndarray
    xy: np.ndarray
    day_type: str = WORKDAY

    @classmethod
    def from_mapping(cls, counts: dict, coords: dict, day_type: str = WORKDAY):
        ids = sorted(counts)
        n = np.array([counts[i] for i in ids], dtype=float)
        if len(ids) == 0 or np.any(n < 1):
            raise ValueError("a visit histogram needs at least one location with count >= 1")
        xy = np.array([coords[i] for i in ids], dtype=float).reshape(-1, 2)
        return cls(ids, n, xy, day_type)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def _single(self, k):
        return kernels.histogram_indicators(np.array([0, len(self.ids)]), self.xy[:, 0], self.xy[:, 1],
                                            self.counts, k)


def radius_of_gyration(h: VisitHistogram) -> float:
    return float(h._single(1)[0][0])


def k_radius_of_gyration(h: VisitHistogram, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return float(h._single(k)[1][0])


def entropy(h: VisitHistogram) -> float:
    return float(h._single(1)[2][0])


def classify_mobility(rg, rg_k):
    """Returner if rg_k > rg/2, explorer if rg_k < rg/2, undefined at equality or rg == 0."""
    rg = np.asarray(rg, dtype=float)
    rg_k = np.asarray(rg_k, dtype=float)
    half = rg / 2.0
    out = np.where(rg_k > half, RETURNER, np.where(rg_k < half, EXPLORER, UNDEFINED))
    out = np.where(rg == 0, UNDEFINED, out)
    return out.item() if out.ndim == 0 else out


def grouped_indicators(offsets, x, y, n, k, threads: int = 1):
    """Kernel call split over ``threads`` contiguous group ranges; output is thread-count independent."""
    offsets = np.asarray(offsets, dtype=np.int64)
    G = len(offsets) - 1
    if threads <= 1 or G < 2 * threads:
        return kernels.histogram_indicators(offsets, x, y, n, k)
    cuts = np.linspace(0, G, threads + 1).astype(np.int64)

    def run(i):
        g0, g1 = cuts[i], cuts[i + 1]
        lo, hi = offsets[g0], offsets[g1]
        return kernels.histogram_indicators(offsets[g0:g1 + 1] - lo, x[lo:hi], y[lo:hi], n[lo:hi], k)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(run, range(threads)))
    return tuple(np.concatenate([p[j] for p in parts]) for j in range(4))


def _histograms(group, loc, n_locs):
    """Counts per (group, location), sorted by group then location, plus CSR offsets."""
    key = group.astype(np.int64) * n_locs + loc
    uniq, cnt = np.unique(key, return_counts=True)
    g = uniq // n_locs
    l = uniq % n_locs
    groups, starts = np.unique(g, return_index=True)
    offsets = np.append(starts, len(g)).astype(np.int64)
    return groups, offsets, l, cnt.astype(float)


def _entropy_of_counts(group, counts):
    """Normalized entropy (natural log, divided by log N) of each group of aggregated counts."""
    groups, starts = np.unique(group, return_index=True)
    offsets = np.append(starts, len(group)).astype(np.int64)
    z = np.zeros(len(counts))
    return groups, kernels.histogram_indicators(offsets, z, z, counts, 1)[2]


def _kgram_entropy(group, seq, k: int, directed: bool):
    """Diversity of consecutive k-tuples of distinct-step moves, per group.

    ``group`` and ``seq`` are time-ordered and grouped contiguously. Repeated
    consecutive locations are collapsed first. Groups too short for a single
    k-tuple get 0.
    """
    if len(seq) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    keep = np.ones(len(seq), dtype=bool)
    keep[1:] = (seq[1:] != seq[:-1]) | (group[1:] != group[:-1])
    group, seq = group[keep], seq[keep]
    m = len(seq) - k + 1
    all_groups = np.unique(group)
    if m <= 0:
        return all_groups, np.zeros(len(all_groups))
    grams = np.stack([seq[i:i + m] for i in range(k)], axis=1).astype(np.int64)
    g0 = group[:m]
    same = np.ones(m, dtype=bool)
    for i in range(1, k):
        same &= group[i:i + m] == g0
    grams, g0 = grams[same], g0[same]
    if not directed:
        grams = np.sort(grams, axis=1)
    rows, cnt = np.unique(np.column_stack([g0, grams]), axis=0, return_counts=True)
    groups, ent = _entropy_of_counts(rows[:, 0], cnt.astype(float))
    out = np.zeros(len(all_groups))
    out[np.searchsorted(all_groups, groups)] = ent
    return all_groups, out


def travel_diversity(seq, k: int = 2, directed: bool = True) -> float:
    """Entropy of consecutive k-length transitions of a time-ordered location sequence."""
    if k < 1:
        raise ValueError("k must be >= 1")
    seq = list(seq)
    if not seq:
        raise ValueError("sequence must not be empty")
    codes = {s: i for i, s in enumerate(sorted(set(seq)))}
    arr = np.array([codes[s] for s in seq], dtype=np.int64)
    _, ent = _kgram_entropy(np.zeros(len(arr), dtype=np.int64), arr, k, directed)
    return float(ent[0])


def compute_indicators(tr: Traces, k: int = 2, diversity_k: int = 2, directed: bool = True,
                       threads: int = 1) -> pd.DataFrame:
    """One row per (SIM, day type) that has records of that day type."""
    M = len(tr.merged_ids)
    dtype = tr.holiday.astype(np.int64)
    group = tr.sim.astype(np.int64) * 2 + dtype
    groups, offsets, l, cnt = _histograms(group, tr.loc, M)
    xy = tr.xy_km[l] if len(l) else np.zeros((0, 2))
    rg, rgk, ent, nloc = grouped_indicators(offsets, xy[:, 0], xy[:, 1], cnt, k, threads)

    order = np.argsort(group, kind="stable")
    dgroups, div = _kgram_entropy(group[order], tr.loc[order].astype(np.int64), diversity_k, directed)
    div_full = np.zeros(len(groups))
    div_full[np.searchsorted(groups, dgroups)] = div

    return pd.DataFrame({
        "sim_id": tr.sim_ids[groups // 2].astype(str),
        "day_type": np.array(DAY_TYPES, dtype=object)[groups % 2],
        "rg_km": rg,
        "rg2_km": rgk,
        "entropy": ent,
        "mobility_class": classify_mobility(rg, rgk) if len(rg) else np.array([], dtype=object),
        "location_count": nloc,
        "travel_diversity": div_full,
    }, columns=INDICATOR_COLUMNS)


def daily_series(tr: Traces, threads: int = 1) -> pd.DataFrame:
    """Radius of gyration, entropy and location count for every SIM-day with records."""
    D, M = tr.calendar.days, len(tr.merged_ids)
    group = tr.sim.astype(np.int64) * D + tr.day
    groups, offsets, l, cnt = _histograms(group, tr.loc, M)
    xy = tr.xy_km[l] if len(l) else np.zeros((0, 2))
    rg, _, ent, nloc = grouped_indicators(offsets, xy[:, 0], xy[:, 1], cnt, 1, threads)
    dates = np.array([d.isoformat() for d in tr.calendar.dates()], dtype=object)
    hol = tr.calendar.holiday_mask()
    day = groups % D
    return pd.DataFrame({
        "sim_id": tr.sim_ids[groups // D].astype(str),
        "date": dates[day],
        "day_type": np.where(hol[day] == 1, HOLIDAY, WORKDAY),
        "rg_km": rg,
        "entropy": ent,
        "location_count": nloc,
    }, columns=DAILY_COLUMNS)


def daily_profile(daily: pd.DataFrame) -> pd.DataFrame:
    """Mean daily indicators per day of week, split by day type."""
    dow = pd.to_datetime(daily["date"]).dt.weekday.map(dict(enumerate(DAY_NAMES)))
    out = (daily.assign(day_of_week=dow)
           .groupby(["day_of_week", "day_type"], sort=False)[["rg_km", "entropy", "location_count"]]
           .mean().reset_index())
    out["day_of_week"] = pd.Categorical(out["day_of_week"], DAY_NAMES, ordered=True)
    return out.sort_values(["day_of_week", "day_type"]).reset_index(drop=True)
