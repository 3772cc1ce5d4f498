"""Socioeconomic stratification by home-cell housing price, and commuting tables."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

PRICE_MIN, PRICE_MAX, PRICE_STEP = 200_000.0, 1_200_000.0, 100_000.0
N_CATEGORIES = 10
QUARTILE_GROUPS = ("minQ1", "Q1Q3", "Q3max")
ORIGINS = ("same", "other_bp", "agglo", "outside")
AGE_BANDS = ("a20_29", "a30_39", "a40_49", "a50_59", "a60p")
STAT_NAMES = ("mean", "q1", "median", "q3", "min", "max")


class SesError(ValueError):
    pass


def price_category(v):
    """Decile-width bin 1..10 over [0.2M, 1.2M] HUF/m²; upper edge closed. ``None`` outside."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return None
    if v < PRICE_MIN or v > PRICE_MAX:
        return None
    if v == PRICE_MAX:
        return N_CATEGORIES
    return int((v - PRICE_MIN) // PRICE_STEP) + 1


def price_categories(values) -> np.ndarray:
    """Vectorized :func:`price_category`; 0 marks unassigned."""
    v = np.asarray(values, dtype=float)
    ok = np.isfinite(v) & (v >= PRICE_MIN) & (v <= PRICE_MAX)
    cat = np.floor((np.where(ok, v, PRICE_MIN) - PRICE_MIN) / PRICE_STEP).astype(np.int64) + 1
    cat = np.where(v == PRICE_MAX, N_CATEGORIES, cat)
    return np.where(ok, cat, 0)


def stratify_equal_sum(values, q: int = 10) -> dict:
    """Split SIMs, sorted by value (ties by id), into ``q`` contiguous classes of near-equal value sums.

    A class closes once the cumulative sum first reaches ``j * total / q``,
    so overshoot in one class is absorbed by the next and no class sum
    departs from ``total / q`` by more than the largest single value. A class
    also closes early when only enough SIMs remain to give each later class one.
    """
    items = sorted(((float(v), str(s)) for s, v in dict(values).items()), key=lambda t: (t[0], t[1]))
    n = len(items)
    if q < 1:
        raise SesError("q must be >= 1")
    if q > n:
        raise SesError(f"q={q} exceeds the number of SIMs ({n})")
    if any(v <= 0 for v, _ in items):
        raise SesError("socioeconomic values must be positive")
    total = math.fsum(v for v, _ in items)
    step = total / q
    out = {}
    i = 0
    cum = 0.0
    for stratum in range(1, q + 1):
        if stratum == q:
            for _, s in items[i:]:
                out[s] = q
            break
        target = stratum * step
        later = q - stratum
        while True:
            v, s = items[i]
            out[s] = stratum
            cum += v
            i += 1
            if cum >= target * (1 - 1e-12) or n - i == later:
                break
    return out


def quartile_groups(work_price, method: str = "linear") -> dict:
    """minQ1 / Q1Q3 / Q3max by work-cell price within one home category.

    Quartiles use ``np.percentile`` with ``method`` (default: linear
    interpolation between order statistics). Q1 and Q3 themselves fall in Q1Q3.
    """
    items = {str(k): float(v) for k, v in dict(work_price).items()}
    if len(items) < 4:
        return {s: "Q1Q3" for s in items}
    vals = np.array(list(items.values()))
    q1, q3 = np.percentile(vals, [25, 75], method=method)
    out = {}
    for s, v in items.items():
        out[s] = "minQ1" if v < q1 else ("Q3max" if v > q3 else "Q1Q3")
    return out


def assign_ses(anchors: pd.DataFrame, merged_prices: dict, q: int = 10, quantile_rule: str = "linear"):
    """SES table for SIMs with a priced home cell.

    Returns ``(table, excluded)``; ``excluded`` counts SIMs whose home cell is
    missing or has no price.
    """
    home = anchors["home_merged_id"]
    work = anchors["work_merged_id"]
    v = home.map(lambda m: merged_prices.get(m) if isinstance(m, str) else None).astype(float)
    wp = work.map(lambda m: merged_prices.get(m) if isinstance(m, str) else None).astype(float)
    ok = v.notna()
    table = pd.DataFrame({"v_ses": v[ok], "work_price": wp[ok]})
    table.index.name = "sim_id"
    cat = price_categories(table["v_ses"].to_numpy())
    table["home_price_category"] = pd.array(np.where(cat > 0, cat, pd.NA), dtype="Int64")
    strata = stratify_equal_sum(table["v_ses"].to_dict(), min(q, len(table))) if len(table) else {}
    table["stratum"] = pd.Series(strata, dtype="Int64").reindex(table.index)
    groups = pd.Series(pd.NA, index=table.index, dtype=object)
    for c, sub in table[table["home_price_category"].notna() & table["work_price"].notna()].groupby("home_price_category"):
        groups.update(pd.Series(quartile_groups(sub["work_price"].to_dict(), quantile_rule)))
    table["quartile_group"] = groups
    return table.sort_index(), int((~ok).sum())


def stationary_filter(profiles: pd.DataFrame, rg_col: str = "rg_km", hw_col: str = "home_work_km",
                      threshold_km: float = 1.0):
    """Drop rows with rg or home-work distance strictly below ``threshold_km``; missing values never drop."""
    rg = profiles[rg_col]
    hw = profiles[hw_col]
    drop = (rg.notna() & (rg < threshold_km)) | (hw.notna() & (hw < threshold_km))
    return profiles[~drop], list(profiles.index[drop])


def _describe(values: pd.Series) -> dict:
    v = values.dropna().to_numpy(dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75], method="linear")
    return {"n": len(v), "mean": v.mean(), "q1": q1, "median": med, "q3": q3, "min": v.min(), "max": v.max()}


def aggregate_by_category(indicators: pd.DataFrame, assignments: pd.DataFrame,
                          category_col: str = "home_price_category",
                          columns=("rg_km", "rg2_km", "entropy", "home_work_km")) -> pd.DataFrame:
    """Descriptive stats per (category, indicator, day_type); empty combinations are omitted.

    ``indicators`` is long format (``sim_id``, ``day_type`` + indicator
    columns); a column absent from it is looked up in ``assignments`` and
    reported under day type ``all``.
    """
    cats = assignments[category_col].dropna()
    rows = []
    ind = indicators[indicators["sim_id"].isin(cats.index)]
    ind = ind.assign(category=ind["sim_id"].map(cats))
    for col in columns:
        if col in ind.columns:
            for (cat, dt), sub in ind.groupby(["category", "day_type"]):
                if sub[col].notna().any():
                    rows.append({"category": int(cat), "indicator": col, "day_type": dt, **_describe(sub[col])})
        elif col in assignments.columns:
            a = assignments.loc[cats.index]
            for cat, sub in a.groupby(category_col):
                if sub[col].notna().any():
                    rows.append({"category": int(cat), "indicator": col, "day_type": "all", **_describe(sub[col])})
    out = pd.DataFrame(rows, columns=["category", "indicator", "day_type", "n", *STAT_NAMES])
    return out.sort_values(["indicator", "day_type", "category"], kind="stable").reset_index(drop=True)


@dataclass
class CommuteTable:
    origin: pd.DataFrame
    age: pd.DataFrame


def _age_band(age):
    if age is None or age == "unknown" or (isinstance(age, float) and math.isnan(age)):
        return None
    a = int(age)
    if 20 <= a < 30:
        return "a20_29"
    if 30 <= a < 40:
        return "a30_39"
    if 40 <= a < 50:
        return "a40_49"
    if 50 <= a < 60:
        return "a50_59"
    if 60 <= a < 100:
        return "a60p"
    return None


def commuting_tables(anchors: pd.DataFrame, labels: dict, ages: dict | None = None) -> CommuteTable:
    """Home-origin shares per central work district, and age shares per home agglomeration sector.

    ``labels`` maps merged_id to ``(admin_kind, admin_id)``; ``ages`` maps
    sim_id to age (or ``unknown``). Only SIMs working in a district count.
    Rows without SIMs are omitted; every other row sums to 100.
    """
    ages = ages or {}
    a = anchors.dropna(subset=["home_merged_id", "work_merged_id"])
    wl = a["work_merged_id"].map(labels)
    hl = a["home_merged_id"].map(labels)
    in_bp = wl.map(lambda t: isinstance(t, tuple) and t[0] == "district")
    a, wl, hl = a[in_bp], wl[in_bp], hl[in_bp]

    origin_counts = {}
    age_counts = {}
    for sim, w, h in zip(a.index, wl, hl):
        d = int(w[1])
        kind, uid = h if isinstance(h, tuple) else ("outside", None)
        if kind == "district":
            o = "same" if uid == d else "other_bp"
        elif kind == "agglomeration_sector":
            o = "agglo"
        else:
            o = "outside"
        origin_counts.setdefault(d, dict.fromkeys(ORIGINS, 0))[o] += 1
        if kind == "agglomeration_sector":
            band = _age_band(ages.get(sim))
            if band is not None:
                age_counts.setdefault(int(uid), dict.fromkeys(AGE_BANDS, 0))[band] += 1

    def _pct(counts, key, cols):
        rows = []
        for k in sorted(counts):
            c = counts[k]
            tot = sum(c.values())
            if tot:
                rows.append({key: k, **{col: 100.0 * c[col] / tot for col in cols}})
        return pd.DataFrame(rows, columns=[key, *cols])

    return CommuteTable(origin=_pct(origin_counts, "district", ORIGINS),
                        age=_pct(age_counts, "sector", AGE_BANDS))


def compare_to_census(cdr: pd.DataFrame, census) -> tuple[pd.DataFrame, float]:
    """Per-cell absolute and relative differences against a census table with the same keys.

    The key column is the first column of both tables. Returns the long-form
    difference table and the mean absolute difference.
    """
    ref = census if isinstance(census, pd.DataFrame) else pd.read_csv(Path(census))
    key = cdr.columns[0]
    if ref.columns[0] != key:
        raise SesError(f"census key column {ref.columns[0]!r} does not match {key!r}")
    cols = [c for c in cdr.columns[1:]]
    missing_cols = sorted(set(cols) ^ set(ref.columns[1:]))
    left = set(cdr[key].astype(int))
    right = set(ref[key].astype(int))
    if left != right or missing_cols:
        parts = []
        if left - right:
            parts.append(f"rows only in CDR table: {sorted(left - right)}")
        if right - left:
            parts.append(f"rows only in census: {sorted(right - left)}")
        if missing_cols:
            parts.append(f"unmatched columns: {missing_cols}")
        raise SesError("key mismatch; " + "; ".join(parts))
    a = cdr.set_index(cdr[key].astype(int))[cols]
    b = ref.set_index(ref[key].astype(int))[cols].loc[a.index]
    long = []
    for k in a.index:
        for c in cols:
            x, y = float(a.at[k, c]), float(b.at[k, c])
            long.append({key: k, "column": c, "cdr": x, "census": y, "abs_diff": abs(x - y),
                         "rel_diff": abs(x - y) / abs(y) if y != 0 else (0.0 if x == y else math.inf)})
    out = pd.DataFrame(long, columns=[key, "column", "cdr", "census", "abs_diff", "rel_diff"])
    return out, float(out["abs_diff"].mean()) if len(out) else 0.0
