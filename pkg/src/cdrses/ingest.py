"""Readers for the three input tables: CDR events, cells and estate listings.

CDR files are large, so they are read in chunks into a columnar
:class:`CdrTable` (integer-coded SIMs and cells) instead of row objects.
Bad rows are skipped and counted in a :class:`ParseReport`; only problems
with reference data (duplicate cell ids) or unreadable files are fatal.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np
import pandas as pd

from .spatial import DEFAULT_PROJECTION, Projection

UNKNOWN = "unknown"
ATTRIBUTE_FIELDS = ("customer_type", "subscription_type", "age", "gender", "tac")
ENUMS = {
    "customer_type": {"business", "consumer"},
    "subscription_type": {"prepaid", "postpaid"},
    "gender": {"male", "female"},
}
CDR_COLUMNS = ("sim_id", "timestamp", "cell_id")
CELL_COLUMNS = ("cell_id", "centroid_lon", "centroid_lat", "base_lon", "base_lat", "area_m2")
LISTING_COLUMNS = ("listing_id", "lon", "lat", "price_huf", "floor_m2")


class IngestError(ValueError):
    """Fatal input problem: wrong header, ambiguous reference data."""


@dataclass
class ParseReport:
    rows: int = 0
    records: int = 0
    malformed: int = 0
    dropped_unknown_cell: int = 0
    dropped_out_of_bounds: int = 0
    dropped_nonpositive_floor: int = 0
    truncated: int = 0

    def __add__(self, other: "ParseReport") -> "ParseReport":
        return ParseReport(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def to_dict(self):
        return asdict(self)

    def lines(self, prefix=""):
        return [f"{prefix}{k}={v}" for k, v in self.to_dict().items()]

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class CdrRecord(NamedTuple):
    sim_id: str
    timestamp: int
    cell_id: str


@dataclass
class SimAttributes:
    sim_id: str
    customer_type: str = UNKNOWN
    subscription_type: str = UNKNOWN
    age: int | None = None
    gender: str = UNKNOWN
    tac: str = UNKNOWN

    @classmethod
    def from_row(cls, sim_id, row):
        age = row["age"]
        return cls(
            sim_id=sim_id,
            customer_type=row["customer_type"],
            subscription_type=row["subscription_type"],
            age=None if age == UNKNOWN else int(age),
            gender=row["gender"],
            tac=row["tac"],
        )


@dataclass
class CdrTable:
    """Columnar CDR events. ``sim``/``cell`` index into the sorted ``sim_ids``/``cell_ids``."""

    sim_ids: np.ndarray
    cell_ids: np.ndarray
    sim: np.ndarray
    ts: np.ndarray
    cell: np.ndarray

    def __len__(self):
        return len(self.ts)

    def records(self) -> Iterator[CdrRecord]:
        for s, t, c in zip(self.sim, self.ts, self.cell):
            yield CdrRecord(str(self.sim_ids[s]), int(t), str(self.cell_ids[c]))

    def take(self, index) -> "CdrTable":
        return CdrTable(self.sim_ids, self.cell_ids, self.sim[index], self.ts[index], self.cell[index])

    def sorted(self) -> "CdrTable":
        """Order by (sim, timestamp, cell); the order every per-SIM scan assumes."""
        return self.take(np.lexsort((self.cell, self.ts, self.sim)))

    def cell_counts(self) -> dict:
        counts = np.bincount(self.cell, minlength=len(self.cell_ids))
        return {str(c): int(n) for c, n in zip(self.cell_ids, counts)}

    def save(self, path):
        np.savez(path, sim_ids=self.sim_ids.astype(str), cell_ids=self.cell_ids.astype(str),
                 sim=self.sim, ts=self.ts, cell=self.cell)

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            return cls(z["sim_ids"].astype(object), z["cell_ids"].astype(object),
                       z["sim"], z["ts"], z["cell"])

    @classmethod
    def from_records(cls, records: Iterable, cell_ids=None) -> "CdrTable":
        """Build from ``(sim_id, timestamp, cell_id)`` triples; timestamps truncated to 10 s."""
        recs = list(records)
        sims = np.array(sorted({str(r[0]) for r in recs}), dtype=object)
        cells = np.array(sorted({str(r[2]) for r in recs} | set(cell_ids or ())), dtype=object)
        sim_pos = {s: i for i, s in enumerate(sims)}
        cell_pos = {c: i for i, c in enumerate(cells)}
        sim = np.array([sim_pos[str(r[0])] for r in recs], dtype=np.int32)
        ts = np.array([int(r[1]) for r in recs], dtype=np.int64)
        cell = np.array([cell_pos[str(r[2])] for r in recs], dtype=np.int32)
        return cls(sims, cells, sim, ts - ts % 10, cell)

    @classmethod
    def from_frame(cls, df: pd.DataFrame, cell_ids=None) -> "CdrTable":
        """Build from a frame with ``sim_id``, ``timestamp``, ``cell_id`` columns (no validation)."""
        sim, sims = pd.factorize(df["sim_id"].astype(str), sort=True)
        cell_str = df["cell_id"].astype(str)
        if cell_ids is None:
            cell, cells = pd.factorize(cell_str, sort=True)
        else:
            cells = pd.Index(sorted(map(str, cell_ids)))
            cell = cells.get_indexer(cell_str)
            if (cell < 0).any():
                raise IngestError("frame references cells outside cell_ids")
        ts = df["timestamp"].to_numpy(dtype=np.int64)
        return cls(np.asarray(sims, dtype=object), np.asarray(cells, dtype=object),
                   sim.astype(np.int32), ts - ts % 10, np.asarray(cell, dtype=np.int32))


def _header(path) -> list[str]:
    with open(path, newline="") as fh:
        row = next(csv.reader(fh), None)
    if row is None:
        return []
    return [c.strip() for c in row]


def _count_rows(path) -> int:
    n = 0
    with open(path, "rb") as fh:
        next(fh, None)
        for line in fh:
            if line.strip():
                n += 1
    return n


def _require(header, required, path):
    missing = [c for c in required if c not in header]
    if missing:
        raise IngestError(f"{path}: missing columns {', '.join(missing)}")


def parse_cdr(path, cells=None, chunksize: int = 1_000_000):
    """Read a CDR CSV.

    ``cells`` is the set of valid cell ids; rows referencing other cells are
    dropped and counted. Returns ``(table, observations, report)`` where
    ``observations`` holds one row per distinct ``(sim_id, attributes...)``
    combination seen. An empty attribute field is "not observed", the literal
    ``unknown`` is an observation.
    """
    path = Path(path)
    header = _header(path)
    report = ParseReport()
    if not header:
        empty = CdrTable(np.array([], dtype=object), np.array(sorted(cells or ()), dtype=object),
                         np.zeros(0, np.int32), np.zeros(0, np.int64), np.zeros(0, np.int32))
        return empty, pd.DataFrame(columns=["sim_id", *ATTRIBUTE_FIELDS]), report
    _require(header, CDR_COLUMNS, path)
    attr_cols = [c for c in ATTRIBUTE_FIELDS if c in header]
    report.rows = _count_rows(path)

    known_cells = None if cells is None else np.array(sorted(map(str, cells)), dtype=object)
    cell_pos = {} if known_cells is None else {c: i for i, c in enumerate(known_cells)}
    sim_pos: dict = {}
    dtypes = {c: "category" for c in ("sim_id", "cell_id", *attr_cols)}
    dtypes["timestamp"] = str
    sims, tss, cellc, obs = [], [], [], []
    parsed = 0
    reader = pd.read_csv(path, usecols=list(CDR_COLUMNS) + attr_cols, dtype=dtypes,
                         keep_default_na=False, na_values=[""], on_bad_lines="skip",
                         chunksize=chunksize, skip_blank_lines=True)
    for chunk in reader:
        parsed += len(chunk)
        ts_f = pd.to_numeric(chunk["timestamp"], errors="coerce").to_numpy(dtype=float)
        s_codes = chunk["sim_id"].cat.codes.to_numpy()
        c_codes = chunk["cell_id"].cat.codes.to_numpy()
        ok = (s_codes >= 0) & (c_codes >= 0) & np.isfinite(ts_f)
        ok &= np.floor(np.where(ok, ts_f, 0.0)) == np.where(ok, ts_f, 0.0)
        report.malformed += int((~ok).sum())

        sim_cats = chunk["sim_id"].cat.categories.astype(str)
        remap_s = np.array([sim_pos.setdefault(s, len(sim_pos)) for s in sim_cats], dtype=np.int64)
        cell_cats = chunk["cell_id"].cat.categories.astype(str)
        if known_cells is None:
            remap_c = np.array([cell_pos.setdefault(c, len(cell_pos)) for c in cell_cats], dtype=np.int64)
        else:
            remap_c = np.array([cell_pos.get(c, -1) for c in cell_cats], dtype=np.int64)

        if attr_cols:
            sub = chunk.loc[ok, ["sim_id", *attr_cols]]
            has = sub[attr_cols].notna().any(axis=1)
            if has.any():
                o = sub[has].astype(object).drop_duplicates()
                obs.append(o)

        s_idx = remap_s[s_codes[ok]] if len(remap_s) else np.zeros(0, np.int64)
        c_idx = remap_c[c_codes[ok]] if len(remap_c) else np.zeros(0, np.int64)
        ts = ts_f[ok].astype(np.int64)
        known = c_idx >= 0
        report.dropped_unknown_cell += int((~known).sum())
        ts = ts[known]
        report.truncated += int((ts % 10 != 0).sum())
        sims.append(s_idx[known])
        tss.append(ts - ts % 10)
        cellc.append(c_idx[known])

    report.malformed += report.rows - parsed
    sim_arr = np.concatenate(sims) if sims else np.zeros(0, np.int64)
    ts_arr = np.concatenate(tss) if tss else np.zeros(0, np.int64)
    cell_arr = np.concatenate(cellc) if cellc else np.zeros(0, np.int64)

    # recode so that integer order matches id order
    sim_names = np.array(list(sim_pos), dtype=object)
    order = np.argsort(sim_names.astype(str), kind="stable")
    rank = np.empty(len(order), dtype=np.int32)
    rank[order] = np.arange(len(order), dtype=np.int32)
    present = np.zeros(len(sim_names), dtype=bool)
    present[sim_arr] = True
    # SIMs seen only on dropped rows get no code
    keep_names = sim_names[order][present[order]]
    newcode = np.cumsum(present[order]) - 1
    final = np.empty(len(sim_names), dtype=np.int32)
    final[order] = newcode
    sim_arr = final[sim_arr] if len(sim_arr) else sim_arr.astype(np.int32)

    if known_cells is None:
        cell_names = np.array(list(cell_pos), dtype=object)
        corder = np.argsort(cell_names.astype(str), kind="stable")
        crank = np.empty(len(corder), dtype=np.int32)
        crank[corder] = np.arange(len(corder), dtype=np.int32)
        cell_arr = crank[cell_arr] if len(cell_arr) else cell_arr
        known_cells = cell_names[corder]

    table = CdrTable(keep_names, known_cells, sim_arr.astype(np.int32), ts_arr.astype(np.int64),
                     np.asarray(cell_arr, dtype=np.int32))
    report.records = len(table)
    observations = (pd.concat(obs, ignore_index=True).drop_duplicates(ignore_index=True)
                    if obs else pd.DataFrame(columns=["sim_id", *ATTRIBUTE_FIELDS]))
    for c in ATTRIBUTE_FIELDS:
        if c not in observations:
            observations[c] = None
    return table, observations[["sim_id", *ATTRIBUTE_FIELDS]], report


def _canonical(field_name, value):
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return None
    text = str(value).strip()
    if text == "":
        return None
    if text.lower() == UNKNOWN:
        return UNKNOWN
    if field_name in ENUMS:
        text = text.lower()
        return text if text in ENUMS[field_name] else UNKNOWN
    if field_name == "age":
        try:
            age = float(text)
        except ValueError:
            return UNKNOWN
        if age != int(age) or not 0 <= age < 100:
            return UNKNOWN
        return str(int(age))
    return text


def normalize_attributes(observations) -> pd.DataFrame:
    """One attribute row per SIM; a field seen with two or more distinct values becomes unknown.

    ``unknown`` counts as a value of its own, so a known->unknown change also
    yields unknown. Accepts a DataFrame or an iterable of ``(sim_id, mapping)``.
    """
    if not isinstance(observations, pd.DataFrame):
        rows = [{"sim_id": sid, **{f: (attrs.get(f) if isinstance(attrs, dict) else getattr(attrs, f, None))
                                   for f in ATTRIBUTE_FIELDS}}
                for sid, attrs in observations]
        observations = pd.DataFrame(rows, columns=["sim_id", *ATTRIBUTE_FIELDS])
    if observations.empty:
        return pd.DataFrame(columns=list(ATTRIBUTE_FIELDS), index=pd.Index([], name="sim_id"))

    out = {}
    sim = observations["sim_id"].astype(str)
    for f in ATTRIBUTE_FIELDS:
        col = observations[f] if f in observations else pd.Series([None] * len(observations))
        canon = pd.Series([_canonical(f, v) for v in col.tolist()], index=observations.index, dtype=object)
        frame = pd.DataFrame({"sim_id": sim, "v": canon}).dropna()
        g = frame.groupby("sim_id")["v"]
        nunique = g.nunique()
        first = g.first()
        out[f] = first.where(nunique == 1, UNKNOWN)
    table = pd.DataFrame(out).reindex(sorted(sim.unique())).fillna(UNKNOWN)
    table.index.name = "sim_id"
    return table[list(ATTRIBUTE_FIELDS)]


def parse_cells(path, proj: Projection = DEFAULT_PROJECTION):
    """Cell reference table. Duplicate ids are fatal; out-of-box centroids are dropped."""
    path = Path(path)
    header = _header(path)
    _require(header, CELL_COLUMNS, path)
    report = ParseReport(rows=_count_rows(path))
    df = pd.read_csv(path, usecols=list(CELL_COLUMNS), dtype={"cell_id": str},
                     keep_default_na=False, na_values=[""], on_bad_lines="skip")
    dup = df["cell_id"].dropna()
    dup = dup[dup.duplicated()]
    if len(dup):
        raise IngestError(f"{path}: duplicate cell_id {', '.join(sorted(set(dup))[:5])}")
    num = df[list(CELL_COLUMNS[1:])].apply(pd.to_numeric, errors="coerce")
    ok = df["cell_id"].notna() & num.notna().all(axis=1)
    report.malformed = report.rows - len(df) + int((~ok).sum())
    df = pd.concat([df.loc[ok, ["cell_id"]], num[ok]], axis=1)
    inb = proj.in_bounds(df["centroid_lon"], df["centroid_lat"])
    report.dropped_out_of_bounds = int((~inb).sum())
    df = df[inb].sort_values("cell_id").reset_index(drop=True)
    report.records = len(df)
    return df, report


def parse_listings(path):
    """Estate listings with derived ``price_per_m2``; non-positive floor space rows are dropped."""
    path = Path(path)
    header = _header(path)
    _require(header, LISTING_COLUMNS, path)
    report = ParseReport(rows=_count_rows(path))
    df = pd.read_csv(path, usecols=list(LISTING_COLUMNS), dtype={"listing_id": str},
                     keep_default_na=False, na_values=[""], on_bad_lines="skip")
    num = df[list(LISTING_COLUMNS[1:])].apply(pd.to_numeric, errors="coerce")
    ok = df["listing_id"].notna() & num.notna().all(axis=1)
    report.malformed = report.rows - len(df) + int((~ok).sum())
    df = pd.concat([df.loc[ok, ["listing_id"]], num[ok]], axis=1)
    pos = df["floor_m2"] > 0
    report.dropped_nonpositive_floor = int((~pos).sum())
    df = df[pos].reset_index(drop=True)
    df["price_per_m2"] = df["price_huf"] / df["floor_m2"]
    report.records = len(df)
    return df, report
