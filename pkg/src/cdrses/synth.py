"""Deterministic synthetic city: cells, listings, admin regions and a CDR stream with planted anchors.

The city is a disc around a configured center. Cell density falls off with
radius, listing prices fall linearly from the center to the edge, and
workplaces concentrate near the center, so residents of cheap peripheral
cells commute furthest. Every SIM draws from its own random substream keyed
by ``(seed, sim index)``, which keeps generation order-independent.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .calendars import DEFAULT_HOLIDAYS, HolidayCalendar
from .spatial import Projection

PATTERNS = ("commuter", "night_owl", "home_worker", "stationary", "casual")

# relative activity per local hour
WORKDAY_PROFILE = np.array([1, 0.6, 0.4, 0.3, 0.3, 0.5, 1.5, 3, 5, 6, 6.5, 6.5,
                            6, 6.5, 6.5, 6, 5.5, 5, 4.5, 4, 3.5, 3, 2.2, 1.5])
HOLIDAY_PROFILE = np.array([1.5, 1, 0.6, 0.4, 0.3, 0.3, 0.5, 1, 2, 3, 4, 4.5,
                            4.5, 4.5, 4.5, 4.5, 4.5, 4.5, 4.5, 4, 3.5, 3, 2.5, 2])


@dataclass
class SynthConfig:
    seed: int = 20170401
    rng: str = "PCG64"
    n_cells: int = 300
    n_sims: int = 10_000
    start: dt.date = dt.date(2017, 4, 1)
    days: int = 30
    holidays: tuple = DEFAULT_HOLIDAYS
    tz_offset_hours: float = 2.0
    center_lon: float = 19.0402
    center_lat: float = 47.4979
    city_radius_km: float = 25.0
    district_radius_km: float = 12.0
    agglomeration_radius_km: float = 20.0
    cell_density_exponent: float = 0.75
    twin_cell_share: float = 0.05
    price_center: float = 1_200_000.0
    price_edge: float = 200_000.0
    price_noise: float = 0.05
    listings_per_cell: float = 40.0
    listing_spread_m: float = 400.0
    commuter_share: float = 0.78
    night_owl_share: float = 0.10
    stationary_share: float = 0.04
    casual_share: float = 0.0
    weekday_rate_median: float = 52.0
    rate_sigma: float = 0.2
    weekend_factor: float = 0.55
    casual_tail_alpha: float = 1.2
    day_presence: float = 0.97
    excursion: float = 0.08
    holiday_excursion: float = 0.25
    excursion_radius_km: float = 3.0
    work_scale_km: float = 5.0
    attr_change_share: float = 0.01
    unknown_age_share: float = 0.15
    census_noise: float = 0.0

    def __post_init__(self):
        shares = (self.commuter_share, self.night_owl_share, self.stationary_share, self.casual_share)
        if min(shares) < 0 or sum(shares) > 1 + 1e-12:
            raise ValueError("population shares must be non-negative and sum to at most 1")
        if self.n_cells <= 0 or self.n_sims <= 0 or self.days <= 0:
            raise ValueError("n_cells, n_sims and days must be positive")
        if isinstance(self.start, str):
            self.start = dt.date.fromisoformat(self.start)
        self.holidays = tuple(sorted(dt.date.fromisoformat(h) if isinstance(h, str) else h
                                     for h in self.holidays))

    @property
    def projection(self) -> Projection:
        return Projection(self.center_lon, self.center_lat)

    @property
    def calendar(self) -> HolidayCalendar:
        return HolidayCalendar(self.start, self.days, frozenset(self.holidays), tz_offset_hours=self.tz_offset_hours)

    def generator(self, *key) -> np.random.Generator:
        bitgen = getattr(np.random, self.rng)
        return np.random.Generator(bitgen(np.random.SeedSequence([self.seed, *key])))


@dataclass
class City:
    cells: pd.DataFrame
    listings: pd.DataFrame
    admin: dict
    boundary: dict
    xy: np.ndarray = field(repr=False)


def price_at(cfg: SynthConfig, r_km):
    r = np.clip(np.asarray(r_km, dtype=float) / cfg.city_radius_km, 0.0, 1.0)
    return cfg.price_center - (cfg.price_center - cfg.price_edge) * r


def _ring_sector(proj, r0, r1, a0, a1, steps=24):
    """Lon/lat ring for the annular wedge r0..r1 (km) x a0..a1 (radians)."""
    ang = np.linspace(a0, a1, steps + 1)
    outer = [(r1 * math.cos(a), r1 * math.sin(a)) for a in ang]
    if r0 > 0:
        inner = [(r0 * math.cos(a), r0 * math.sin(a)) for a in ang[::-1]]
    else:
        inner = [(0.0, 0.0)]
    pts = np.array(outer + inner + [outer[0]]) * 1000.0
    lon, lat = proj.inverse(pts[:, 0], pts[:, 1])
    return [[float(a), float(b)] for a, b in zip(np.round(lon, 9), np.round(lat, 9))]


def _admin_geojson(cfg: SynthConfig):
    proj = cfg.projection
    feats = []
    d = cfg.district_radius_km
    rings = [(0.0, d / 3, 5), (d / 3, 2 * d / 3, 8), (2 * d / 3, d, 10)]
    uid = 1
    for r0, r1, n in rings:
        for i in range(n):
            a0, a1 = 2 * math.pi * i / n, 2 * math.pi * (i + 1) / n
            feats.append({"type": "Feature",
                          "properties": {"unit_id": uid, "kind": "district", "name": f"District {uid}"},
                          "geometry": {"type": "Polygon", "coordinates": [_ring_sector(proj, r0, r1, a0, a1)]}})
            uid += 1
    for i in range(6):
        a0, a1 = 2 * math.pi * i / 6, 2 * math.pi * (i + 1) / 6
        feats.append({"type": "Feature",
                      "properties": {"unit_id": i + 1, "kind": "agglomeration_sector", "name": f"Sector {i + 1}"},
                      "geometry": {"type": "Polygon",
                                   "coordinates": [_ring_sector(proj, d, cfg.agglomeration_radius_km, a0, a1)]}})
    for i in range(6):
        a0, a1 = 2 * math.pi * i / 6, 2 * math.pi * (i + 1) / 6
        feats.append({"type": "Feature",
                      "properties": {"unit_id": 0, "kind": "outside", "name": "Outside"},
                      "geometry": {"type": "Polygon",
                                   "coordinates": [_ring_sector(proj, cfg.agglomeration_radius_km,
                                                                cfg.city_radius_km, a0, a1)]}})
    return {"type": "FeatureCollection", "features": feats}


def _boundary_geojson(cfg: SynthConfig):
    ring = _ring_sector(cfg.projection, 0.0, cfg.city_radius_km, 0.0, 2 * math.pi, steps=6 * 24)
    ring = ring[:-2] + [ring[0]]  # drop the apex used for wedges
    return {"type": "FeatureCollection", "features": [
        {"type": "Feature", "properties": {"name": "boundary"},
         "geometry": {"type": "Polygon", "coordinates": [ring]}}]}


def generate_city(cfg: SynthConfig) -> City:
    rng = cfg.generator(0)
    proj = cfg.projection
    R = cfg.city_radius_km * 1000.0
    n_twin = int(round(cfg.n_cells * cfg.twin_cell_share))
    n_base = cfg.n_cells - n_twin
    # density falls off with radius; kept inside 96% of the disc so polygons stay in the boundary
    r = 0.96 * R * rng.random(n_base) ** (1.0 / (2.0 * cfg.cell_density_exponent))
    a = rng.uniform(0, 2 * math.pi, n_base)
    xy = np.column_stack([r * np.cos(a), r * np.sin(a)])
    if n_twin:
        src = rng.choice(n_base, n_twin, replace=False)
        ang = rng.uniform(0, 2 * math.pi, n_twin)
        off = rng.uniform(30.0, 70.0, n_twin)
        twins = xy[src] + np.column_stack([off * np.cos(ang), off * np.sin(ang)])
        xy = np.vstack([xy, twins])
    lon, lat = proj.inverse(xy[:, 0], xy[:, 1])
    blon, blat = proj.inverse(xy[:, 0] + rng.normal(0, 150, len(xy)), xy[:, 1] + rng.normal(0, 150, len(xy)))
    width = max(4, len(str(cfg.n_cells)))
    cells = pd.DataFrame({
        "cell_id": [f"C{i:0{width}d}" for i in range(len(xy))],
        "centroid_lon": np.round(lon, 9), "centroid_lat": np.round(lat, 9),
        "base_lon": np.round(blon, 9), "base_lat": np.round(blat, 9),
        "area_m2": np.round(math.pi * (300 + np.hypot(xy[:, 0], xy[:, 1]) / 20) ** 2, 1),
    })
    # re-project the rounded coordinates so everything downstream agrees exactly
    cx, cy = proj.forward(cells["centroid_lon"], cells["centroid_lat"])
    xy = np.column_stack([cx, cy])

    per_cell = rng.poisson(cfg.listings_per_cell, len(xy))
    owner = np.repeat(np.arange(len(xy)), per_cell)
    pts = xy[owner] + rng.normal(0, cfg.listing_spread_m, (len(owner), 2))
    rr = np.hypot(pts[:, 0], pts[:, 1])
    inside = rr < 0.99 * R
    pts, rr = pts[inside], rr[inside]
    floor = np.round(rng.uniform(30, 120, len(pts)), 1)
    noise = 1.0 + cfg.price_noise * rng.standard_normal(len(pts)) if cfg.price_noise > 0 else 1.0
    llon, llat = proj.inverse(pts[:, 0], pts[:, 1])
    llon, llat = np.round(llon, 9), np.round(llat, 9)
    # price from the written coordinates, so it is an exact function of their radius
    lx, ly = proj.forward(llon, llat)
    ppm2 = price_at(cfg, np.hypot(lx, ly) / 1000.0) * noise
    listings = pd.DataFrame({
        "listing_id": [f"L{i:06d}" for i in range(len(pts))],
        "lon": llon, "lat": llat,
        "price_huf": ppm2 * floor,
        "floor_m2": floor,
    })
    return City(cells, listings, _admin_geojson(cfg), _boundary_geojson(cfg), xy)


def _assign_population(cfg: SynthConfig, city: City):
    rng = cfg.generator(1)
    n = cfg.n_sims
    shares = np.array([cfg.commuter_share, cfg.night_owl_share, 0.0, cfg.stationary_share, cfg.casual_share])
    shares[2] = max(0.0, 1.0 - shares.sum())
    pattern = rng.choice(len(PATTERNS), n, p=shares / shares.sum())
    C = len(city.xy)
    home = rng.integers(0, C, n)
    rc = np.hypot(city.xy[:, 0], city.xy[:, 1]) / 1000.0
    wp = np.exp(-rc / cfg.work_scale_km)
    work = rng.choice(C, n, p=wp / wp.sum())
    fixed = np.isin(pattern, [PATTERNS.index("home_worker"), PATTERNS.index("stationary")])
    work = np.where(fixed, home, work)
    return pattern, home, work


def _sim_records(cfg, i, pattern, home, work, nearby, hol_mask, day_start, C):
    """Timestamps, cell indices and planted active-day count for one SIM."""
    g = cfg.generator(2, i)
    name = PATTERNS[pattern]
    D = cfg.days
    if name == "casual":
        total = int(min(np.floor(g.pareto(cfg.casual_tail_alpha)) + 1, 5000))
        days = np.sort(g.integers(0, D, total))
        hours = g.choice(24, total, p=WORKDAY_PROFILE / WORKDAY_PROFILE.sum())
        loc = np.where(g.random(total) < 0.7, home, g.integers(0, C, total))
    else:
        present = g.random(D) < cfg.day_presence
        if not present.any():
            present[g.integers(0, D)] = True
        rate_w = cfg.weekday_rate_median * math.exp(cfg.rate_sigma * g.standard_normal())
        rate = np.where(hol_mask == 1, rate_w * cfg.weekend_factor, rate_w)
        per_day = np.where(present, 1 + g.poisson(np.maximum(rate - 1, 0)), 0)
        days = np.repeat(np.arange(D), per_day)
        total = len(days)
        hol = hol_mask[days] == 1
        wprof = WORKDAY_PROFILE / WORKDAY_PROFILE.sum()
        hprof = HOLIDAY_PROFILE / HOLIDAY_PROFILE.sum()
        if name == "night_owl":
            wprof, hprof = np.roll(wprof, 3), np.roll(hprof, 3)
        hours = np.where(hol, g.choice(24, total, p=hprof), g.choice(24, total, p=wprof))
        if name == "stationary":
            loc = np.full(total, home)
        else:
            work_hours = (hours >= 9) & (hours < 16)
            evening = (hours >= 16) & (hours < 22)
            at_work = ~hol & (work_hours | (evening & (g.random(total) < 0.35)))
            loc = np.where(at_work, work, home)
            exc_p = np.where(hol, cfg.holiday_excursion, cfg.excursion)
            exc = g.random(total) < exc_p
            if exc.any():
                base = np.where(at_work[exc], work, home)
                pick = g.random(exc.sum())
                loc[exc] = [nearby[b][int(p * len(nearby[b]))] for b, p in zip(base, pick)]
    secs = g.integers(0, 3600, total)
    ts = day_start[days] + hours.astype(np.int64) * 3600 + secs
    ts = ts - ts % 10
    order = np.argsort(ts, kind="stable")
    return ts[order], np.asarray(loc)[order], int(len(np.unique(days)))


def _attributes(cfg: SynthConfig, pattern):
    rng = cfg.generator(3)
    n = len(pattern)
    business = pattern == PATTERNS.index("stationary")
    age = rng.integers(18, 85, n).astype(object)
    age[rng.random(n) < cfg.unknown_age_share] = "unknown"
    return pd.DataFrame({
        "customer_type": np.where(business, "business", "consumer"),
        "subscription_type": np.where(rng.random(n) < 0.6, "postpaid", "prepaid"),
        "age": age.astype(str),
        "gender": np.where(rng.random(n) < 0.5, "male", "female"),
        "tac": [f"{t:08d}" for t in rng.integers(0, 10 ** 8, n)],
        "changes": rng.random(n) < cfg.attr_change_share,
    })


def generate_cdr(cfg: SynthConfig, city: City):
    """Returns ``(cdr_frame, truth_frame)``. Attributes ride on each SIM's first row."""
    pattern, home, work = _assign_population(cfg, city)
    C = len(city.xy)
    tree = cKDTree(city.xy)
    nearby = [sorted(set(tree.query_ball_point(p, cfg.excursion_radius_km * 1000.0)) - {j}) or [j]
              for j, p in enumerate(city.xy)]
    cal = cfg.calendar
    hol_mask = cal.holiday_mask()
    day_start = cal.start_ts() + 86400 * np.arange(cfg.days, dtype=np.int64)
    width = max(5, len(str(cfg.n_sims)))
    sim_names = np.array([f"S{i:0{width}d}" for i in range(cfg.n_sims)], dtype=object)

    sims, tss, locs, active = [], [], [], np.zeros(cfg.n_sims, dtype=np.int64)
    for i in range(cfg.n_sims):
        ts, loc, ad = _sim_records(cfg, i, pattern[i], home[i], work[i], nearby, hol_mask, day_start, C)
        sims.append(np.full(len(ts), i, dtype=np.int32))
        tss.append(ts)
        locs.append(loc)
        active[i] = ad
    sim = np.concatenate(sims)
    ts = np.concatenate(tss)
    loc = np.concatenate(locs).astype(np.int64)

    attrs = _attributes(cfg, pattern)
    cdr = pd.DataFrame({"sim_id": pd.Categorical.from_codes(sim, sim_names),
                        "timestamp": ts,
                        "cell_id": pd.Categorical.from_codes(loc, city.cells["cell_id"].to_numpy())})
    first = np.ones(len(sim), dtype=bool)
    first[1:] = sim[1:] != sim[:-1]
    starts = np.flatnonzero(first)
    counts = np.diff(np.append(starts, len(sim)))
    for col in ("customer_type", "subscription_type", "age", "gender", "tac"):
        vals = np.full(len(sim), "", dtype=object)
        vals[starts] = attrs[col].to_numpy()
        cdr[col] = vals
    # a few SIMs report a changed subscription type on their last record
    changed = attrs["changes"].to_numpy() & (counts > 1)
    last = starts + counts - 1
    flip = {"postpaid": "prepaid", "prepaid": "postpaid"}
    sub = cdr["subscription_type"].to_numpy()
    sub[last[changed]] = [flip[v] for v in attrs["subscription_type"].to_numpy()[changed]]
    cdr["subscription_type"] = sub

    truth = pd.DataFrame({
        "sim_id": sim_names,
        "home_cell": city.cells["cell_id"].to_numpy()[home],
        "work_cell": city.cells["cell_id"].to_numpy()[work],
        "pattern": np.array(PATTERNS, dtype=object)[pattern],
        "active_days": active,
        "customer_type": attrs["customer_type"],
        "age": attrs["age"],
        "records": counts,
    })
    return cdr, truth


def write_city(cfg: SynthConfig, outdir, write_cdr: bool = True):
    """Generate everything and write the standard input files into ``outdir``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    city = generate_city(cfg)
    city.cells.to_csv(out / "cells.csv", index=False)
    city.listings.to_csv(out / "listings.csv", index=False, float_format="%.6f")
    (out / "admin.geojson").write_text(json.dumps(city.admin))
    (out / "boundary.geojson").write_text(json.dumps(city.boundary))
    paths = {"cells": out / "cells.csv", "listings": out / "listings.csv",
             "admin": out / "admin.geojson", "boundary": out / "boundary.geojson"}
    if write_cdr:
        cdr, truth = generate_cdr(cfg, city)
        cdr.to_csv(out / "cdr.csv", index=False)
        truth.to_csv(out / "truth.csv", index=False)
        paths["cdr"] = out / "cdr.csv"
        paths["truth"] = out / "truth.csv"
        origin, age = census_from_truth(cfg, city, truth)
        origin.to_csv(out / "census_district.csv", index=False, float_format="%.6f")
        age.to_csv(out / "census_age.csv", index=False, float_format="%.6f")
        paths["census_district"] = out / "census_district.csv"
        paths["census_age"] = out / "census_age.csv"
    cfg_dump = {k: (v.isoformat() if isinstance(v, dt.date) else v) for k, v in asdict(cfg).items()}
    cfg_dump["holidays"] = [h.isoformat() for h in cfg.holidays]
    (out / "synth_config.json").write_text(json.dumps(cfg_dump, indent=2, sort_keys=True))
    return paths


def census_from_truth(cfg: SynthConfig, city: City, truth: pd.DataFrame):
    """Reference commuting tables from the planted anchors (optionally perturbed), raw-cell level."""
    from .ses import commuting_tables
    from .spatial import AdminRegion, MergedCell, assign_admin
    from shapely.geometry import shape

    regions = [AdminRegion(int(f["properties"]["unit_id"]), f["properties"]["kind"], shape(f["geometry"]))
               for f in city.admin["features"]]
    proj = cfg.projection
    cells = [MergedCell(cid, (cid,), lo, la, x, y)
             for cid, lo, la, (x, y) in zip(city.cells["cell_id"], city.cells["centroid_lon"],
                                            city.cells["centroid_lat"], city.xy)]
    labels = {m.merged_id: (m.admin_kind, m.admin_id) for m in assign_admin(cells, regions, proj)}
    anchors = truth.set_index("sim_id").rename(columns={"home_cell": "home_merged_id", "work_cell": "work_merged_id"})
    anchors = anchors[anchors["pattern"].isin(["commuter", "night_owl"])]
    table = commuting_tables(anchors, labels, anchors["age"].to_dict())
    out = []
    rng = cfg.generator(4)
    for df in (table.origin, table.age):
        df = df.copy()
        if cfg.census_noise > 0:
            cols = df.columns[1:]
            df[cols] = df[cols] + rng.normal(0, cfg.census_noise, (len(df), len(cols)))
        out.append(df)
    return out
