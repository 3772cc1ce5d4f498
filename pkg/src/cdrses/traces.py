"""CDR events resolved to merged cells and the local clock, ordered per SIM by time."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calendars import HolidayCalendar
from .ingest import CdrTable
from .spatial import MergedCell


@dataclass
class Traces:
    sim_ids: np.ndarray
    merged_ids: np.ndarray
    xy_km: np.ndarray
    calendar: HolidayCalendar
    sim: np.ndarray
    ts: np.ndarray
    loc: np.ndarray
    day: np.ndarray
    hour: np.ndarray
    slot: np.ndarray
    dropped: int = 0

    def __len__(self):
        return len(self.ts)

    @property
    def holiday(self) -> np.ndarray:
        """Per-record flag: 1 on weekend/holiday days."""
        return self.calendar.holiday_mask()[self.day]

    def take(self, index) -> "Traces":
        return Traces(self.sim_ids, self.merged_ids, self.xy_km, self.calendar,
                      self.sim[index], self.ts[index], self.loc[index], self.day[index],
                      self.hour[index], self.slot[index], self.dropped)

    def subset(self, sim_ids) -> "Traces":
        """Keep only the given SIMs, recoding them densely in id order."""
        wanted = set(map(str, sim_ids))
        pos = np.array([i for i, s in enumerate(self.sim_ids) if str(s) in wanted], dtype=np.int64)
        recode = np.full(len(self.sim_ids), -1, dtype=np.int32)
        recode[pos] = np.arange(len(pos), dtype=np.int32)
        new = recode[self.sim]
        keep = new >= 0
        out = self.take(keep)
        out.sim = new[keep]
        out.sim_ids = self.sim_ids[pos]
        return out


def locate(table: CdrTable, merged: list[MergedCell], calendar: HolidayCalendar) -> Traces:
    """Map raw cells to merged cells and sort by (sim, timestamp, merged cell)."""
    merged_ids = np.array([m.merged_id for m in merged], dtype=object)
    lookup = {c: i for i, m in enumerate(merged) for c in m.member_cell_ids}
    cell_to_loc = np.array([lookup.get(str(c), -1) for c in table.cell_ids], dtype=np.int32)
    loc = cell_to_loc[table.cell] if len(table) else np.zeros(0, np.int32)
    ok = loc >= 0
    sim, ts, loc = table.sim[ok], table.ts[ok], loc[ok]
    order = np.lexsort((loc, ts, sim))
    sim, ts, loc = sim[order], ts[order], loc[order]
    day, hour, slot = calendar.classify(ts)
    xy = np.array([m.xy for m in merged], dtype=float).reshape(-1, 2) / 1000.0
    return Traces(table.sim_ids, merged_ids, xy, calendar, sim.astype(np.int32), ts, loc.astype(np.int32),
                  day, hour, slot, dropped=int((~ok).sum()))
