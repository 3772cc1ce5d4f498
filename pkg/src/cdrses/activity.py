"""Per-SIM activity statistics, exploratory distributions and the active-SIM filter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .calendars import DAY_NAMES, HolidayCalendar
from .ingest import CdrTable

STATS_COLUMNS = ["total_records", "active_days", "weekday_active_days", "weekend_active_days",
                 "weekday_daily_mean", "weekend_daily_mean", "records_per_day_mean"]
BUCKETS = ("=1", "(1,10]", "(10,100]", "(100,1000]", ">1000")


@dataclass(frozen=True)
class FilterCriteria:
    min_days: int = 20
    min_weekday_mean: float = 40.0
    min_weekend_mean: float = 20.0
    max_daily_mean: float = 1000.0


def compute_stats(table: CdrTable, calendar: HolidayCalendar, day=None) -> pd.DataFrame:
    """Activity counts per SIM. Daily means are over active days of each type only.

    ``day`` may carry precomputed local day indices for ``table``.
    """
    if day is None:
        day, _, _ = calendar.classify(table.ts)
    D = calendar.days
    hol = calendar.holiday_mask().astype(bool)
    key = table.sim.astype(np.int64) * D + day
    uniq, per_day = np.unique(key, return_counts=True)
    s = uniq // D
    d = uniq % D
    S = len(table.sim_ids)
    is_we = hol[d]
    total = np.bincount(s, weights=per_day, minlength=S)
    active = np.bincount(s, minlength=S)
    wd_days = np.bincount(s[~is_we], minlength=S)
    we_days = np.bincount(s[is_we], minlength=S)
    wd_rec = np.bincount(s[~is_we], weights=per_day[~is_we], minlength=S)
    we_rec = np.bincount(s[is_we], weights=per_day[is_we], minlength=S)
    with np.errstate(divide="ignore", invalid="ignore"):
        stats = pd.DataFrame({
            "total_records": total.astype(np.int64),
            "active_days": active.astype(np.int64),
            "weekday_active_days": wd_days.astype(np.int64),
            "weekend_active_days": we_days.astype(np.int64),
            "weekday_daily_mean": np.where(wd_days > 0, wd_rec / np.maximum(wd_days, 1), 0.0),
            "weekend_daily_mean": np.where(we_days > 0, we_rec / np.maximum(we_days, 1), 0.0),
            "records_per_day_mean": np.where(active > 0, total / np.maximum(active, 1), 0.0),
        }, index=pd.Index(table.sim_ids.astype(str), name="sim_id"))
    return stats[stats["active_days"] > 0]


def activity_categories(stats: pd.DataFrame) -> pd.DataFrame:
    counts = stats["total_records"].to_numpy()
    bucket = np.select([counts == 1, counts <= 10, counts <= 100, counts <= 1000], [0, 1, 2, 3], 4)
    sims = np.bincount(bucket, minlength=5)
    recs = np.bincount(bucket, weights=counts, minlength=5)
    return pd.DataFrame({
        "bucket": BUCKETS,
        "sims": sims,
        "sim_share": sims / max(sims.sum(), 1) * 100.0,
        "records": recs.astype(np.int64),
        "activity_share": recs / max(recs.sum(), 1) * 100.0,
    })


def select_active(stats: pd.DataFrame, criteria: FilterCriteria = FilterCriteria()) -> list[str]:
    keep = ((stats["active_days"] >= criteria.min_days)
            & (stats["weekday_daily_mean"] >= criteria.min_weekday_mean)
            & (stats["weekend_daily_mean"] >= criteria.min_weekend_mean)
            & (stats["records_per_day_mean"] <= criteria.max_daily_mean))
    return sorted(stats.index[keep].astype(str))


def day_hour_matrix(table: CdrTable, calendar: HolidayCalendar, day=None, hour=None) -> pd.DataFrame:
    """7x24 record counts by local day of week (rows Mon..Sun) and hour."""
    if day is None or hour is None:
        day, hour, _ = calendar.classify(table.ts)
    dow = calendar.weekday_index()[day].astype(np.int64)
    flat = np.bincount(dow * 24 + hour.astype(np.int64), minlength=7 * 24)
    return pd.DataFrame(flat.reshape(7, 24), index=pd.Index(DAY_NAMES, name="day"),
                        columns=[str(h) for h in range(24)])


def active_days_histogram(stats: pd.DataFrame) -> pd.DataFrame:
    counts = stats["active_days"].value_counts().sort_index()
    return pd.DataFrame({"active_days": counts.index.astype(int), "sims": counts.to_numpy()})
