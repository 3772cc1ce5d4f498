"""Home and work cell estimation from time-window activity counts.

Work window: workdays 09:00-16:00. Home window: workdays 22:00-06:00 and all
day on weekends and holidays. Windows are start-inclusive, end-exclusive and
are decided by each record's own local clock time and day type.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import kernels
from .calendars import HolidayCalendar
from .traces import Traces

SLOT_NAMES = {kernels.NEITHER: "neither", kernels.WORK: "work_window", kernels.HOME: "home_window"}
ANCHOR_COLUMNS = ["home_merged_id", "work_merged_id", "home_count", "work_count", "home_work_km"]


@dataclass
class AnchorEstimate:
    sim_id: str
    home_cell: str | None
    work_cell: str | None
    home_count: int
    work_count: int
    home_work_km: float | None


def classify_slot(timestamp: int, calendar: HolidayCalendar) -> str:
    _, _, slot = calendar.classify(np.array([timestamp], dtype=np.int64))
    return SLOT_NAMES[int(slot[0])]


def _most_frequent(sim, loc, n_sims, n_locs):
    """Per SIM: location with the highest count (ties -> smallest index) and that count."""
    best = np.full(n_sims, -1, dtype=np.int64)
    count = np.zeros(n_sims, dtype=np.int64)
    if len(sim) == 0:
        return best, count
    key = sim.astype(np.int64) * n_locs + loc
    uniq, cnt = np.unique(key, return_counts=True)
    s, l = uniq // n_locs, uniq % n_locs
    order = np.lexsort((l, -cnt, s))
    s, l, cnt = s[order], l[order], cnt[order]
    first = np.ones(len(s), dtype=bool)
    first[1:] = s[1:] != s[:-1]
    best[s[first]] = l[first]
    count[s[first]] = cnt[first]
    return best, count


def estimate_all(tr: Traces) -> pd.DataFrame:
    """Anchor table for every SIM in ``tr`` (index ``sim_id``)."""
    S, M = len(tr.sim_ids), len(tr.merged_ids)
    work = tr.slot == kernels.WORK
    home = tr.slot == kernels.HOME
    w_loc, w_cnt = _most_frequent(tr.sim[work], tr.loc[work], S, M)
    h_loc, h_cnt = _most_frequent(tr.sim[home], tr.loc[home], S, M)
    both = (w_loc >= 0) & (h_loc >= 0)
    hw = np.full(S, np.nan)
    if both.any():
        d = tr.xy_km[h_loc[both]] - tr.xy_km[w_loc[both]]
        hw[both] = np.hypot(d[:, 0], d[:, 1])
    ids = np.append(tr.merged_ids, None)
    return pd.DataFrame({
        "home_merged_id": ids[h_loc],
        "work_merged_id": ids[w_loc],
        "home_count": h_cnt,
        "work_count": w_cnt,
        "home_work_km": hw,
    }, index=pd.Index(tr.sim_ids.astype(str), name="sim_id"))


def estimate_anchors(tr: Traces, sim_id: str) -> AnchorEstimate:
    """Anchors of a single SIM."""
    row = estimate_all(tr.subset([sim_id])).loc[str(sim_id)]
    hw = row["home_work_km"]
    return AnchorEstimate(
        sim_id=str(sim_id),
        home_cell=row["home_merged_id"],
        work_cell=row["work_merged_id"],
        home_count=int(row["home_count"]),
        work_count=int(row["work_count"]),
        home_work_km=None if pd.isna(hw) else float(hw),
    )
