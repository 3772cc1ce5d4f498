"""Cell geometry: projection, near-duplicate merging, Voronoi coverage, price and admin joins.

All planar work happens in a local azimuthal-equidistant projection (meters)
about a configured city center. Merged cells are kept in a list sorted by
``merged_id``; that order is the canonical location order used everywhere
downstream (histogram summation, tie-breaks).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd
import shapely
from scipy.spatial import Delaunay, QhullError
from shapely.geometry import Polygon, shape
from sklearn.cluster import DBSCAN

EARTH_RADIUS_M = 6_371_000.0

ADMIN_KINDS = ("district", "agglomeration_sector", "outside")


class SpatialError(ValueError):
    pass


@dataclass(frozen=True)
class Projection:
    """Spherical azimuthal-equidistant projection about ``(center_lon, center_lat)``."""

    center_lon: float = 19.0402
    center_lat: float = 47.4979
    half_width_deg: float = 2.0
    half_height_deg: float = 1.5

    @property
    def bbox(self):
        return (
            self.center_lon - self.half_width_deg,
            self.center_lat - self.half_height_deg,
            self.center_lon + self.half_width_deg,
            self.center_lat + self.half_height_deg,
        )

    def in_bounds(self, lon, lat):
        lon = np.asarray(lon, dtype=float)
        lat = np.asarray(lat, dtype=float)
        x0, y0, x1, y1 = self.bbox
        return (lon >= x0) & (lon <= x1) & (lat >= y0) & (lat <= y1)

    def forward(self, lon, lat, check=True):
        lon = np.asarray(lon, dtype=float)
        lat = np.asarray(lat, dtype=float)
        if check and not np.all(self.in_bounds(lon, lat)):
            raise SpatialError("coordinate outside the configured bounding box")
        phi0 = math.radians(self.center_lat)
        phi = np.radians(lat)
        dlam = np.radians(lon - self.center_lon)
        cos_c = np.sin(phi0) * np.sin(phi) + np.cos(phi0) * np.cos(phi) * np.cos(dlam)
        c = np.arccos(np.clip(cos_c, -1.0, 1.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            kp = np.where(c > 1e-15, c / np.sin(c), 1.0)
        x = EARTH_RADIUS_M * kp * np.cos(phi) * np.sin(dlam)
        y = EARTH_RADIUS_M * kp * (np.cos(phi0) * np.sin(phi) - np.sin(phi0) * np.cos(phi) * np.cos(dlam))
        return x, y

    def inverse(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        phi0 = math.radians(self.center_lat)
        rho = np.hypot(x, y)
        c = rho / EARTH_RADIUS_M
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(rho > 0, y * np.sin(c) / rho, 0.0)
        phi = np.arcsin(np.cos(c) * np.sin(phi0) + ratio * np.cos(phi0))
        lam = np.arctan2(x * np.sin(c), rho * np.cos(phi0) * np.cos(c) - y * np.sin(phi0) * np.sin(c))
        return self.center_lon + np.degrees(lam), np.degrees(phi)


DEFAULT_PROJECTION = Projection()


def project(p, proj: Projection = DEFAULT_PROJECTION):
    """Project one ``(lon, lat)`` pair to planar meters."""
    x, y = proj.forward(p[0], p[1])
    return float(x), float(y)


def distance(a, b, proj: Projection = DEFAULT_PROJECTION) -> float:
    """Planar distance in km between two ``(lon, lat)`` points."""
    ax, ay = project(a, proj)
    bx, by = project(b, proj)
    return math.hypot(ax - bx, ay - by) / 1000.0


@dataclass
class MergedCell:
    merged_id: str
    member_cell_ids: tuple
    lon: float
    lat: float
    x: float
    y: float
    polygon: Polygon | None = None
    mean_price_per_m2: float | None = None
    listing_count: int = 0
    admin_kind: str = "outside"
    admin_id: int | None = None

    @property
    def xy(self):
        return (self.x, self.y)


@dataclass(frozen=True)
class AdminRegion:
    unit_id: int
    kind: str
    geometry: object
    name: str = ""

    def __post_init__(self):
        if self.kind not in ADMIN_KINDS:
            raise SpatialError(f"unknown admin kind {self.kind!r}")


def merge_cells(cells: pd.DataFrame, weights=None, eps: float = 100.0,
                proj: Projection = DEFAULT_PROJECTION) -> list[MergedCell]:
    """Collapse cells whose centroids lie within ``eps`` meters (DBSCAN, min size 1).

    ``weights`` maps cell_id to activity count; the merged centroid is the
    activity-weighted mean of member centroids in the plane, or the plain mean
    when every member weight is zero.
    """
    if eps <= 0:
        raise SpatialError("eps must be positive")
    if len(cells) == 0:
        return []
    cells = cells.sort_values("cell_id", kind="stable").reset_index(drop=True)
    ids = cells["cell_id"].astype(str).to_numpy()
    x, y = proj.forward(cells["centroid_lon"].to_numpy(), cells["centroid_lat"].to_numpy())
    if weights is None:
        w = np.zeros(len(cells))
    else:
        w = np.array([float(weights.get(c, 0.0)) for c in ids])
    if np.any(w < 0):
        raise SpatialError("cell weights must be non-negative")

    xy = np.column_stack([x, y])
    labels = DBSCAN(eps=eps, min_samples=1).fit(xy, sample_weight=w if w.sum() > 0 else None).labels_

    # clusters ranked by their smallest member id: independent of input order
    first_member = {}
    for i, lab in enumerate(labels):
        first_member.setdefault(lab, i)
    ranked = sorted(first_member, key=lambda lab: ids[first_member[lab]])
    width = max(4, len(str(len(ranked))))
    out = []
    for rank, lab in enumerate(ranked):
        idx = np.flatnonzero(labels == lab)
        ww = w[idx]
        if ww.sum() > 0:
            cx = float(np.dot(ww, x[idx]) / ww.sum())
            cy = float(np.dot(ww, y[idx]) / ww.sum())
        else:
            cx = float(x[idx].mean())
            cy = float(y[idx].mean())
        lon, lat = proj.inverse(cx, cy)
        out.append(MergedCell(
            merged_id=f"M{rank:0{width}d}",
            member_cell_ids=tuple(ids[idx]),
            lon=float(lon), lat=float(lat), x=cx, y=cy,
        ))
    return out


def cell_to_merged(merged: list[MergedCell]) -> dict:
    return {c: m.merged_id for m in merged for c in m.member_cell_ids}


def _half_plane(site, other, extent):
    """Polygon covering the side of the bisector of site/other that contains site."""
    sx, sy = site
    ox, oy = other
    mx, my = (sx + ox) / 2.0, (sy + oy) / 2.0
    nx, ny = sx - ox, sy - oy
    norm = math.hypot(nx, ny)
    nx, ny = nx / norm, ny / norm
    tx, ty = -ny, nx
    L = extent
    return Polygon([
        (mx + tx * L, my + ty * L),
        (mx + tx * L + nx * L, my + ty * L + ny * L),
        (mx - tx * L + nx * L, my - ty * L + ny * L),
        (mx - tx * L, my - ty * L),
    ])


def _neighbours(pts):
    n = len(pts)
    if n < 3:
        return [[j for j in range(n) if j != i] for i in range(n)]
    try:
        tri = Delaunay(pts)
    except QhullError:
        # collinear sites: every other site is a potential neighbour
        return [[j for j in range(n) if j != i] for i in range(n)]
    indptr, indices = tri.vertex_neighbor_vertices
    nbrs = [list(indices[indptr[i]:indptr[i + 1]]) for i in range(n)]
    if any(not nb for nb in nbrs):
        return [[j for j in range(n) if j != i] for i in range(n)]
    return nbrs


def build_voronoi(merged: list[MergedCell], boundary: Polygon) -> list[MergedCell]:
    """Assign each merged cell its Voronoi region clipped to ``boundary`` (projected meters)."""
    if not merged:
        raise SpatialError("at least one merged cell is required")
    pts = np.array([m.xy for m in merged], dtype=float)
    if len(np.unique(pts, axis=0)) != len(pts):
        raise SpatialError("duplicate merged-cell centroids")
    inside = shapely.intersects_xy(boundary, pts[:, 0], pts[:, 1])
    if not inside.all():
        raise SpatialError(f"{int((~inside).sum())} merged centroids lie outside the boundary")

    minx, miny, maxx, maxy = boundary.bounds
    extent = 4.0 * max(maxx - minx, maxy - miny, 1.0) + float(np.abs(pts).max())
    nbrs = _neighbours(pts)
    out = []
    for i, m in enumerate(merged):
        poly = boundary
        for j in nbrs[i]:
            poly = poly.intersection(_half_plane(pts[i], pts[j], extent))
        out.append(replace(m, polygon=_as_polygon(poly)))
    return out


def _as_polygon(geom):
    if geom.geom_type == "Polygon":
        return geom
    polys = [g for g in getattr(geom, "geoms", []) if g.geom_type == "Polygon" and g.area > 0]
    if len(polys) == 1:
        return polys[0]
    return shapely.MultiPolygon(polys) if polys else Polygon()


def attach_prices(merged: list[MergedCell], listings: pd.DataFrame, min_listings: int = 1,
                  proj: Projection = DEFAULT_PROJECTION):
    """Mean price/m² of listings falling in each polygon.

    Listings on a shared edge go to the polygon whose merged_id sorts first.
    Returns ``(merged, assignment)`` where ``assignment`` holds the merged_id
    (or ``None``) per listing, in input order.
    """
    if any(m.polygon is None for m in merged):
        raise SpatialError("build_voronoi must run before attach_prices")
    n = len(listings)
    owner = np.full(n, -1, dtype=np.int64)
    if n:
        lon = listings["lon"].to_numpy(dtype=float)
        lat = listings["lat"].to_numpy(dtype=float)
        ok = proj.in_bounds(lon, lat)
        x, y = proj.forward(np.where(ok, lon, proj.center_lon), np.where(ok, lat, proj.center_lat), check=False)
        tree = shapely.STRtree([m.polygon for m in merged])
        pt_idx, poly_idx = tree.query(shapely.points(x, y), predicate="intersects")
        keep = ok[pt_idx]
        pt_idx, poly_idx = pt_idx[keep], poly_idx[keep]
        # smallest polygon index (= smallest merged_id) wins
        order = np.lexsort((poly_idx, pt_idx))
        pt_idx, poly_idx = pt_idx[order], poly_idx[order]
        first = np.ones(len(pt_idx), dtype=bool)
        first[1:] = pt_idx[1:] != pt_idx[:-1]
        owner[pt_idx[first]] = poly_idx[first]

    prices = listings["price_per_m2"].to_numpy(dtype=float) if n else np.zeros(0)
    counts = np.bincount(owner[owner >= 0], minlength=len(merged))
    sums = np.bincount(owner[owner >= 0], weights=prices[owner >= 0], minlength=len(merged))
    out = []
    for i, m in enumerate(merged):
        c = int(counts[i])
        mean = float(sums[i] / c) if c >= max(min_listings, 1) else None
        out.append(replace(m, listing_count=c, mean_price_per_m2=mean))
    assignment = [merged[o].merged_id if o >= 0 else None for o in owner]
    return out, assignment


def project_geometry(geom, proj: Projection = DEFAULT_PROJECTION):
    def _fwd(coords):
        x, y = proj.forward(coords[:, 0], coords[:, 1], check=False)
        return np.column_stack([x, y])

    return shapely.transform(geom, _fwd)


def assign_admin(merged: list[MergedCell], regions, proj: Projection = DEFAULT_PROJECTION):
    """Label each merged cell with the admin region containing its centroid."""
    ordered = sorted(regions, key=lambda r: (ADMIN_KINDS.index(r.kind), r.unit_id))
    planar = [project_geometry(r.geometry, proj) for r in ordered]
    out = []
    for m in merged:
        kind, uid = "outside", None
        for r, g in zip(ordered, planar):
            if shapely.intersects_xy(g, m.x, m.y):
                kind, uid = r.kind, r.unit_id
                break
        out.append(replace(m, admin_kind=kind, admin_id=uid))
    return out


def load_regions(path) -> list[AdminRegion]:
    data = json.loads(Path(path).read_text())
    regions = []
    for feat in data.get("features", []):
        props = feat.get("properties") or {}
        geom = shape(feat["geometry"])
        if not geom.is_valid:
            raise SpatialError(f"admin region {props.get('unit_id')} has an invalid polygon")
        regions.append(AdminRegion(
            unit_id=int(props["unit_id"]),
            kind=str(props["kind"]),
            name=str(props.get("name", "")),
            geometry=geom,
        ))
    return regions


def load_boundary(path, proj: Projection = DEFAULT_PROJECTION):
    """Study-area boundary (GeoJSON, lon/lat) as a projected polygon."""
    data = json.loads(Path(path).read_text())
    if data.get("type") == "FeatureCollection":
        geoms = [shape(f["geometry"]) for f in data["features"]]
    elif data.get("type") == "Feature":
        geoms = [shape(data["geometry"])]
    else:
        geoms = [shape(data)]
    geom = shapely.union_all(geoms)
    return project_geometry(geom, proj)


MERGED_COLUMNS = ["merged_id", "lon", "lat", "x_m", "y_m", "listing_count", "mean_price_per_m2",
                  "admin_kind", "admin_id", "polygon_wkt"]


def merged_to_frame(merged: list[MergedCell]) -> pd.DataFrame:
    rows = []
    for m in merged:
        rows.append({
            "merged_id": m.merged_id,
            "lon": round(m.lon, 7),
            "lat": round(m.lat, 7),
            "x_m": m.x,
            "y_m": m.y,
            "listing_count": m.listing_count,
            "mean_price_per_m2": m.mean_price_per_m2,
            "admin_kind": m.admin_kind,
            "admin_id": m.admin_id,
            "polygon_wkt": shapely.to_wkt(m.polygon, rounding_precision=3) if m.polygon is not None else "",
        })
    df = pd.DataFrame(rows, columns=MERGED_COLUMNS)
    df["admin_id"] = df["admin_id"].astype("Int64")
    return df


def merged_from_frame(df: pd.DataFrame, members: pd.DataFrame,
                      proj: Projection = DEFAULT_PROJECTION) -> list[MergedCell]:
    """Rebuild merged cells from the stage CSVs (``merged_cells.csv`` + ``cell_map.csv``).

    Planar coordinates come from ``x_m``/``y_m`` when present, otherwise
    from re-projecting the rounded lon/lat.
    """
    groups = members.groupby("merged_id")["cell_id"].apply(lambda s: tuple(sorted(map(str, s))))
    out = []
    for row in df.sort_values("merged_id").itertuples(index=False):
        if "x_m" in df.columns:
            x, y = row.x_m, row.y_m
        else:
            x, y = proj.forward(row.lon, row.lat, check=False)
        price = row.mean_price_per_m2
        out.append(MergedCell(
            merged_id=str(row.merged_id),
            member_cell_ids=groups.get(row.merged_id, ()),
            lon=float(row.lon), lat=float(row.lat), x=float(x), y=float(y),
            polygon=shapely.from_wkt(row.polygon_wkt) if isinstance(row.polygon_wkt, str) and row.polygon_wkt else None,
            mean_price_per_m2=None if pd.isna(price) else float(price),
            listing_count=int(row.listing_count),
            admin_kind=str(row.admin_kind),
            admin_id=None if pd.isna(row.admin_id) else int(row.admin_id),
        ))
    return out


def nearest_site_agreement(merged: list[MergedCell], boundary, n_samples: int = 100_000, seed: int = 0):
    """Fraction of uniform boundary samples whose containing polygon is the nearest site's.

    Samples within 1e-6 m of a tie are excluded. Independent of how the
    polygons were built: relies only on point-in-polygon and a KD-tree.
    """
    from scipy.spatial import cKDTree

    rng = np.random.default_rng(seed)
    minx, miny, maxx, maxy = boundary.bounds
    pts = []
    while sum(len(p) for p in pts) < n_samples:
        cand = rng.uniform([minx, miny], [maxx, maxy], size=(n_samples, 2))
        pts.append(cand[shapely.contains_xy(boundary, cand[:, 0], cand[:, 1])])
    pts = np.concatenate(pts)[:n_samples]
    sites = np.array([m.xy for m in merged])
    k = min(2, len(sites))
    d, nearest = cKDTree(sites).query(pts, k=k)
    if k == 2:
        clear = (d[:, 1] - d[:, 0]) > 1e-6
        nearest = nearest[:, 0]
    else:
        clear = np.ones(len(pts), dtype=bool)
    tree = shapely.STRtree([m.polygon for m in merged])
    pi, gi = tree.query(shapely.points(pts[:, 0], pts[:, 1]), predicate="intersects")
    owner = np.full(len(pts), -1)
    order = np.lexsort((-gi, pi))
    owner[pi[order]] = gi[order]  # last write per point = smallest polygon index
    agree = owner[clear] == nearest[clear]
    return float(agree.mean()), int(clear.sum())
