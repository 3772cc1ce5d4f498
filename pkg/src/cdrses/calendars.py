"""Observation-period calendar: weekends, public holidays and the local clock."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from . import kernels

WORKDAY, HOLIDAY = "workday", "holiday"
DAY_TYPES = (WORKDAY, HOLIDAY)
DAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")

# Hungary, April 2017
DEFAULT_HOLIDAYS = (dt.date(2017, 4, 14), dt.date(2017, 4, 17))


@dataclass(frozen=True)
class HolidayCalendar:
    start: dt.date = dt.date(2017, 4, 1)
    days: int = 30
    holidays: frozenset = field(default_factory=lambda: frozenset(DEFAULT_HOLIDAYS))
    weekend: tuple = (5, 6)
    tz_offset_hours: float = 2.0

    def __post_init__(self):
        if self.days <= 0:
            raise ValueError("calendar must cover at least one day")
        object.__setattr__(self, "holidays", frozenset(self.holidays))

    @property
    def tz_offset_s(self) -> int:
        return int(round(self.tz_offset_hours * 3600))

    @property
    def day0(self) -> int:
        """Epoch day number of the first local calendar day."""
        return (self.start - dt.date(1970, 1, 1)).days

    @property
    def end(self) -> dt.date:
        return self.start + dt.timedelta(days=self.days - 1)

    def dates(self):
        return [self.start + dt.timedelta(days=i) for i in range(self.days)]

    def is_holiday(self, day: dt.date) -> bool:
        """Weekends and public holidays both count as holiday-type days."""
        return day.weekday() in self.weekend or day in self.holidays

    def day_type(self, day: dt.date) -> str:
        return HOLIDAY if self.is_holiday(day) else WORKDAY

    def holiday_mask(self) -> np.ndarray:
        return np.array([self.is_holiday(d) for d in self.dates()], dtype=np.uint8)

    def weekday_index(self) -> np.ndarray:
        return np.array([d.weekday() for d in self.dates()], dtype=np.int8)

    def local_datetime(self, ts: int) -> dt.datetime:
        return dt.datetime(1970, 1, 1) + dt.timedelta(seconds=int(ts) + self.tz_offset_s)

    def timestamp(self, local: dt.datetime) -> int:
        """Epoch seconds of a naive local datetime."""
        return int((local - dt.datetime(1970, 1, 1)).total_seconds()) - self.tz_offset_s

    def start_ts(self) -> int:
        return self.timestamp(dt.datetime.combine(self.start, dt.time()))

    def end_ts(self) -> int:
        """Exclusive end of the period in epoch seconds."""
        return self.start_ts() + self.days * 86400

    def classify(self, ts):
        """``(day_index, hour, slot)`` arrays for epoch timestamps; see ``kernels.classify_slots``."""
        return kernels.classify_slots(np.asarray(ts, dtype=np.int64), self.tz_offset_s,
                                      self.day0, self.holiday_mask())


def parse_dates(text: str):
    return frozenset(dt.date.fromisoformat(t.strip()) for t in text.split(",") if t.strip())
