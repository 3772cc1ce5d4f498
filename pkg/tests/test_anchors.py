import numpy as np
import pytest

from cdrses import anchors
from cdrses.calendars import HolidayCalendar
from cdrses.ingest import CdrTable
from cdrses.spatial import MergedCell
from cdrses.traces import locate

CAL = HolidayCalendar()
TUE = 3  # 2017-04-04


def ts(day, hour, minute=0):
    return CAL.start_ts() + day * 86400 + hour * 3600 + minute * 60


def traces(records, ids, coords_km):
    merged = [MergedCell(mid, (f"c{mid}",), 0, 0, x * 1000.0, y * 1000.0) for mid, (x, y) in zip(ids, coords_km)]
    table = CdrTable.from_records([(s, t, f"c{c}") for s, t, c in records])
    return locate(table, merged, CAL)


@pytest.mark.parametrize("day, hour, minute, slot", [
    (TUE, 10, 30, "work_window"), (TUE, 23, 10, "home_window"), (13, 11, 0, "home_window"),
    (TUE, 9, 0, "work_window"), (TUE, 16, 0, "neither"), (TUE, 22, 0, "home_window"),
    (TUE, 6, 0, "neither"), (TUE, 5, 59, "home_window"), (0, 12, 0, "home_window")])
def test_classify_slot(day, hour, minute, slot):
    assert anchors.classify_slot(ts(day, hour, minute), CAL) == slot


def test_home_and_work_by_construction():
    recs = [("S1", ts(d, 23), "A") for d in range(2, 8)] * 5
    recs += [("S1", ts(TUE, 10, m), "B") for m in range(50)]
    est = anchors.estimate_anchors(traces(recs, ["A", "B"], [(0, 0), (3, 4)]), "S1")
    assert (est.home_cell, est.work_cell) == ("A", "B")
    assert est.home_work_km == pytest.approx(5.0)
    assert est.work_count == 50


def test_tie_goes_to_smaller_id():
    recs = [("S1", ts(TUE, 23), "012"), ("S1", ts(TUE, 23, 5), "007")]
    est = anchors.estimate_anchors(traces(recs, ["007", "012"], [(0, 0), (1, 0)]), "S1")
    assert est.home_cell == "007"


def test_no_work_records():
    recs = [("S1", ts(TUE, 23), "A")]
    est = anchors.estimate_anchors(traces(recs, ["A"], [(0, 0)]), "S1")
    assert est.work_cell is None and est.home_work_km is None and est.home_cell == "A"


def test_estimate_all_matches_single():
    rng = np.random.default_rng(4)
    recs = [(f"S{rng.integers(0, 5)}", int(t), rng.choice(["A", "B", "C"]))
            for t in rng.integers(CAL.start_ts(), CAL.end_ts(), 2000)]
    tr = traces(recs, ["A", "B", "C"], [(0, 0), (1, 0), (0, 2)])
    table = anchors.estimate_all(tr)
    for sim in table.index:
        est = anchors.estimate_anchors(tr, sim)
        assert est.home_cell == table.at[sim, "home_merged_id"]
        assert est.work_cell == table.at[sim, "work_merged_id"]
