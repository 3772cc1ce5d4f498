import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from cdrses import ingest

CDR_HEADER = "sim_id,timestamp,cell_id,customer_type,subscription_type,age,gender,tac\n"
CELL_HEADER = "cell_id,centroid_lon,centroid_lat,base_lon,base_lat,area_m2\n"
LISTING_HEADER = "listing_id,lon,lat,price_huf,floor_m2\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_empty_cdr(tmp_path):
    table, obs, rep = ingest.parse_cdr(write(tmp_path, "c.csv", ""))
    assert len(table) == 0 and rep.malformed == 0 and obs.empty


def test_header_only_cdr(tmp_path):
    table, _, rep = ingest.parse_cdr(write(tmp_path, "c.csv", CDR_HEADER))
    assert len(table) == 0 and rep.malformed == 0


def test_timestamp_truncated_to_ten_seconds(tmp_path):
    p = write(tmp_path, "c.csv", CDR_HEADER + "S1,1491901234,A,,,,,\n")
    table, _, rep = ingest.parse_cdr(p, {"A"})
    assert table.ts.tolist() == [1491901230]
    assert rep.truncated == 1


def test_unknown_cell_dropped(tmp_path):
    p = write(tmp_path, "c.csv", CDR_HEADER + "S1,10,A,,,,,\nS1,20,B,,,,,\nS2,30,Z,,,,,\n")
    table, _, rep = ingest.parse_cdr(p, {"A", "B"})
    assert len(table) == 2 and rep.dropped_unknown_cell == 1
    assert list(table.sim_ids) == ["S1"]


def test_malformed_rows_counted(tmp_path):
    p = write(tmp_path, "c.csv", CDR_HEADER + "S1,abc,A,,,,,\nS1,20,A,,,,,\n,30,A,,,,,\nS1,1.5,A,,,,,\n")
    table, _, rep = ingest.parse_cdr(p, {"A"})
    assert len(table) == 1 and rep.malformed == 3 and rep.rows == 4


def test_missing_column_is_fatal(tmp_path):
    with pytest.raises(ingest.IngestError):
        ingest.parse_cdr(write(tmp_path, "c.csv", "sim_id,cell_id\nS1,A\n"))


def test_ids_sorted_and_chunking_irrelevant(tmp_path):
    rng = np.random.default_rng(0)
    rows = [f"S{rng.integers(0, 50)},{rng.integers(0, 10**6)},C{rng.integers(0, 20)},,,,,"
            for _ in range(3000)]
    p = write(tmp_path, "c.csv", CDR_HEADER + "\n".join(rows) + "\n")
    a, _, _ = ingest.parse_cdr(p, chunksize=10**6)
    b, _, _ = ingest.parse_cdr(p, chunksize=97)
    assert list(a.sim_ids) == sorted(a.sim_ids)
    for f in ("sim", "ts", "cell"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    assert list(a.records()) == list(b.records())


def test_observations_keep_attribute_rows(tmp_path):
    p = write(tmp_path, "c.csv", CDR_HEADER + "S1,10,A,consumer,prepaid,35,male,123\nS1,20,A,,,,,\n")
    _, obs, _ = ingest.parse_cdr(p, {"A"})
    assert len(obs) == 1
    attrs = ingest.normalize_attributes(obs)
    assert attrs.loc["S1"].tolist() == ["consumer", "prepaid", "35", "male", "123"]


def obs(rows):
    return pd.DataFrame(rows, columns=["sim_id", *ingest.ATTRIBUTE_FIELDS])


def test_normalize_consistent_age():
    df = obs([["S1", None, None, "35", None, None]] * 3)
    assert ingest.normalize_attributes(df).at["S1", "age"] == "35"


def test_normalize_age_conflict_with_unknown():
    df = obs([["S1", None, None, "35", None, None], ["S1", None, None, "unknown", None, None],
              ["S1", None, None, "35", None, None]])
    assert ingest.normalize_attributes(df).at["S1", "age"] == "unknown"


def test_normalize_fields_independent():
    df = obs([["S1", None, "prepaid", None, "male", None], ["S1", None, "postpaid", None, "male", None]])
    row = ingest.normalize_attributes(df).loc["S1"]
    assert row["gender"] == "male" and row["subscription_type"] == "unknown"
    assert row["customer_type"] == "unknown"  # never observed


@pytest.mark.parametrize("age", ["-1", "100", "abc", "35.5"])
def test_invalid_age_unknown(age):
    assert ingest.normalize_attributes(obs([["S1", None, None, age, None, None]])).at["S1", "age"] == "unknown"


def test_normalize_pairs_input():
    out = ingest.normalize_attributes([("S2", {"gender": "female"}), ("S1", {"gender": "MALE"})])
    assert list(out.index) == ["S1", "S2"]
    assert out.at["S1", "gender"] == "male"


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from(["male", "female", "unknown", None]), min_size=1, max_size=8))
def test_normalize_is_order_insensitive(values):
    df = obs([["S1", None, None, None, v, None] for v in values])
    a = ingest.normalize_attributes(df)
    b = ingest.normalize_attributes(df.iloc[::-1])
    pd.testing.assert_frame_equal(a, b)
    seen = {v for v in values if v is not None}
    expected = seen.pop() if len(seen) == 1 else "unknown"
    assert a.at["S1", "gender"] == expected


def test_cells_two_rows(tmp_path):
    p = write(tmp_path, "cells.csv", CELL_HEADER + "A,19.04,47.49,19.04,47.49,100\nB,19.05,47.50,19.05,47.50,100\n")
    df, rep = ingest.parse_cells(p)
    assert len(df) == 2 and rep.records == 2


def test_cells_duplicate_fatal(tmp_path):
    p = write(tmp_path, "cells.csv", CELL_HEADER + "A,19.04,47.49,19.04,47.49,100\nA,19.05,47.50,19.05,47.50,1\n")
    with pytest.raises(ingest.IngestError, match="duplicate"):
        ingest.parse_cells(p)


def test_cells_out_of_bounds_dropped(tmp_path):
    p = write(tmp_path, "cells.csv", CELL_HEADER + "A,19.04,47.49,19.04,47.49,100\nB,25.0,47.50,25.0,47.5,1\n")
    df, rep = ingest.parse_cells(p)
    assert list(df["cell_id"]) == ["A"] and rep.dropped_out_of_bounds == 1


def test_listing_price_per_m2(tmp_path):
    p = write(tmp_path, "l.csv", LISTING_HEADER + "1,19.0,47.5,45000000,50\n2,19.0,47.5,1000,0\n"
                                                  "3,19.0,47.5,30000000,60\n4,19.1,47.4,10000000,20\n")
    df, rep = ingest.parse_listings(p)
    assert df["price_per_m2"].iloc[0] == 900_000
    assert len(df) == 3 and rep.dropped_nonpositive_floor == 1


def test_table_roundtrip(tmp_path):
    t = ingest.CdrTable.from_records([("S2", 15, "B"), ("S1", 20, "A")])
    t.save(tmp_path / "r.npz")
    u = ingest.CdrTable.load(tmp_path / "r.npz")
    assert list(u.records()) == list(t.records())
    assert list(t.records())[0] == ingest.CdrRecord("S2", 10, "B")


def test_from_frame_matches_from_records():
    df = pd.DataFrame({"sim_id": ["S2", "S1", "S2"], "timestamp": [15, 20, 33], "cell_id": ["B", "A", "A"]})
    a = ingest.CdrTable.from_frame(df)
    b = ingest.CdrTable.from_records(df.itertuples(index=False))
    assert list(a.records()) == list(b.records())


def test_report_sum_and_lines():
    r = ingest.ParseReport(rows=2, records=1) + ingest.ParseReport(rows=3, malformed=1)
    assert r.rows == 5 and r.malformed == 1
    assert "rows=5" in r.lines()
