"""Pipeline stages over a shared run directory.

Each stage reads what it needs from an in-memory context, falling back to
the previous stages' files in ``outdir``, and writes its own outputs. Running
stages one at a time or through :func:`run_pipeline` gives the same files.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from . import activity, anchors, indicators, ingest, pca, ses, spatial
from .config import RunConfig
from .traces import locate

log = logging.getLogger(__name__)

STAGES = ("ingest", "cells", "stats", "filter", "anchors", "indicators", "ses", "pca", "commute")


class StageError(RuntimeError):
    def __init__(self, stage, message, input_error=False):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.input_error = input_error


def _need(path: Path, stage: str) -> Path:
    if not path.exists():
        raise StageError(stage, f"missing input {path}", input_error=True)
    return path


def _write(df: pd.DataFrame, path: Path, index=False):
    df.to_csv(path, index=index, lineterminator="\n")


def _read(path: Path, **kw) -> pd.DataFrame:
    # exact float round trip, so resumed stages see the same values as in-memory ones
    return pd.read_csv(path, float_precision="round_trip", **kw)


def _write_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


class Context(dict):
    """Stage outputs kept in memory between stages of one process."""


def stage_ingest(cfg: RunConfig, ctx: Context):
    out = cfg.out
    cells, cell_rep = ingest.parse_cells(_need(Path(cfg.cells), "ingest"), cfg.projection)
    listings, list_rep = ingest.parse_listings(_need(Path(cfg.listings), "ingest"))
    table, obs, cdr_rep = ingest.parse_cdr(_need(Path(cfg.cdr), "ingest"), set(cells["cell_id"]))
    attrs = ingest.normalize_attributes(obs).reindex(table.sim_ids.astype(str)).fillna(ingest.UNKNOWN)
    attrs.index.name = "sim_id"
    table.save(out / "records.npz")
    _write(attrs, out / "attributes.csv", index=True)
    _write_json({"cdr": cdr_rep.to_dict(), "cells": cell_rep.to_dict(), "listings": list_rep.to_dict()},
                out / "ingest_report.json")
    ctx.update(table=table, cells=cells, listings=listings, attributes=attrs, cdr_report=cdr_rep)
    return cdr_rep


def _table(cfg, ctx, stage):
    if "table" not in ctx:
        ctx["table"] = ingest.CdrTable.load(_need(cfg.out / "records.npz", stage))
    return ctx["table"]


def _attributes(cfg, ctx, stage):
    if "attributes" not in ctx:
        ctx["attributes"] = pd.read_csv(_need(cfg.out / "attributes.csv", stage), dtype=str,
                                        keep_default_na=False).set_index("sim_id")
    return ctx["attributes"]


def stage_cells(cfg: RunConfig, ctx: Context):
    out = cfg.out
    table = _table(cfg, ctx, "cells")
    cells = ctx.get("cells")
    if cells is None:
        cells, _ = ingest.parse_cells(_need(Path(cfg.cells), "cells"), cfg.projection)
    listings = ctx.get("listings")
    if listings is None:
        listings, _ = ingest.parse_listings(_need(Path(cfg.listings), "cells"))
    boundary = spatial.load_boundary(_need(Path(cfg.boundary), "cells"), cfg.projection)
    regions = spatial.load_regions(_need(Path(cfg.admin), "cells"))

    merged = spatial.merge_cells(cells, table.cell_counts(), cfg.merge_eps_m, cfg.projection)
    merged = spatial.build_voronoi(merged, boundary)
    merged, assignment = spatial.attach_prices(merged, listings, cfg.min_listings, cfg.projection)
    merged = spatial.assign_admin(merged, regions, cfg.projection)

    _write(spatial.merged_to_frame(merged), out / "merged_cells.csv")
    cmap = pd.DataFrame(sorted(spatial.cell_to_merged(merged).items()), columns=["cell_id", "merged_id"])
    _write(cmap, out / "cell_map.csv")
    assigned = sum(a is not None for a in assignment)
    _write_json({"raw_cells": len(cells), "merged_cells": len(merged), "listings": len(listings),
                 "listings_assigned": assigned, "listings_unassigned": len(listings) - assigned,
                 "priced_cells": sum(m.mean_price_per_m2 is not None for m in merged)},
                out / "spatial_report.json")
    ctx["merged"] = merged
    return merged


def _merged(cfg, ctx, stage):
    if "merged" not in ctx:
        df = _read(_need(cfg.out / "merged_cells.csv", stage))
        cmap = pd.read_csv(_need(cfg.out / "cell_map.csv", stage), dtype=str)
        ctx["merged"] = spatial.merged_from_frame(df, cmap, cfg.projection)
    return ctx["merged"]


def stage_stats(cfg: RunConfig, ctx: Context):
    out = cfg.out
    table = _table(cfg, ctx, "stats")
    cal = cfg.calendar
    day, hour, _ = cal.classify(table.ts)
    stats = activity.compute_stats(table, cal, day=day)
    _write(stats, out / "activity_stats.csv", index=True)
    _write(activity.activity_categories(stats), out / "activity_categories.csv")
    _write(activity.active_days_histogram(stats), out / "active_days_histogram.csv")
    _write(activity.day_hour_matrix(table, cal, day=day, hour=hour), out / "day_hour_matrix.csv", index=True)
    ctx["stats"] = stats
    return stats


def stage_filter(cfg: RunConfig, ctx: Context):
    stats = ctx.get("stats")
    if stats is None:
        stats = _read(_need(cfg.out / "activity_stats.csv", "filter"), dtype={"sim_id": str}).set_index("sim_id")
    active = activity.select_active(stats, cfg.criteria)
    _write(pd.DataFrame({"sim_id": active}), cfg.out / "active_sims.csv")
    ctx["active"] = active
    return active


def _active(cfg, ctx, stage):
    if "active" not in ctx:
        ctx["active"] = pd.read_csv(_need(cfg.out / "active_sims.csv", stage), dtype=str)["sim_id"].tolist()
    return ctx["active"]


def _traces(cfg, ctx, stage):
    if "traces" not in ctx:
        tr = locate(_table(cfg, ctx, stage), _merged(cfg, ctx, stage), cfg.calendar)
        ctx["traces"] = tr.subset(_active(cfg, ctx, stage))
    return ctx["traces"]


def stage_anchors(cfg: RunConfig, ctx: Context):
    tr = _traces(cfg, ctx, "anchors")
    table = anchors.estimate_all(tr)
    _write(table, cfg.out / "anchors.csv", index=True)
    ctx["anchors"] = table
    return table


def _anchors(cfg, ctx, stage):
    if "anchors" not in ctx:
        ctx["anchors"] = _read(_need(cfg.out / "anchors.csv", stage), dtype={
            "sim_id": str, "home_merged_id": str, "work_merged_id": str}).set_index("sim_id")
    return ctx["anchors"]


def stage_indicators(cfg: RunConfig, ctx: Context):
    out = cfg.out
    tr = _traces(cfg, ctx, "indicators")
    ind = indicators.compute_indicators(tr, cfg.rg_k, cfg.diversity_k, cfg.directed, cfg.threads)
    daily = indicators.daily_series(tr, cfg.threads)
    _write(ind, out / "indicators.csv")
    _write(daily, out / "daily_indicators.csv")
    _write(indicators.daily_profile(daily), out / "daily_profile.csv")
    ctx["indicators"] = ind
    return ind


def _indicators(cfg, ctx, stage):
    if "indicators" not in ctx:
        ctx["indicators"] = _read(_need(cfg.out / "indicators.csv", stage), dtype={"sim_id": str})
    return ctx["indicators"]


def stage_ses(cfg: RunConfig, ctx: Context):
    out = cfg.out
    anc = _anchors(cfg, ctx, "ses")
    ind = _indicators(cfg, ctx, "ses")
    merged = _merged(cfg, ctx, "ses")

    work_rg = ind[ind["day_type"] == "workday"].set_index("sim_id")["rg_km"]
    profiles = anc.assign(rg_km=work_rg.reindex(anc.index))
    kept, removed = ses.stationary_filter(profiles, threshold_km=cfg.stationary_km)
    _write(pd.DataFrame({"sim_id": removed}), out / "stationary_removed.csv")

    prices = {m.merged_id: m.mean_price_per_m2 for m in merged if m.mean_price_per_m2 is not None}
    table, excluded = ses.assign_ses(kept, prices, cfg.strata_q, cfg.quantile_rule)
    table["home_work_km"] = kept["home_work_km"].reindex(table.index)
    _write(table, out / "ses_assignments.csv", index=True)
    cat_stats = ses.aggregate_by_category(ind[ind["sim_id"].isin(table.index)], table)
    _write(cat_stats, out / "category_stats.csv")
    strata = ses.aggregate_by_category(ind[ind["sim_id"].isin(table.index)], table, category_col="stratum")
    _write(strata, out / "stratum_stats.csv")
    _write_json({"profiles": len(profiles), "stationary_removed": len(removed),
                 "no_home_price": excluded, "with_ses": len(table),
                 "with_category": int(table["home_price_category"].notna().sum())},
                out / "ses_report.json")
    ctx["ses"] = table
    return table


def stage_pca(cfg: RunConfig, ctx: Context):
    out = cfg.out
    table = ctx.get("ses")
    if table is None:
        table = _read(_need(out / "ses_assignments.csv", "pca"), dtype={"sim_id": str}).set_index("sim_id")
        table["home_price_category"] = table["home_price_category"].astype("Int64")
    ind = _indicators(cfg, ctx, "pca")
    fm = pca.build_matrix(ind, table)
    res = pca.run_pca(fm)
    _write(fm.to_frame(), out / "feature_matrix.csv")
    _write(pca.loadings_table(res), out / "pca_loadings.csv")
    _write(pca.pareto(res), out / "pca_ratios.csv")
    _write(pca.scores_table(res, fm.keys), out / "pca_scores.csv")
    ctx["pca"] = res
    return res


def stage_commute(cfg: RunConfig, ctx: Context):
    out = cfg.out
    anc = _anchors(cfg, ctx, "commute")
    merged = _merged(cfg, ctx, "commute")
    attrs = _attributes(cfg, ctx, "commute")
    labels = {m.merged_id: (m.admin_kind, m.admin_id) for m in merged}
    tables = ses.commuting_tables(anc, labels, attrs["age"].to_dict())
    _write(tables.origin, out / "commute_district.csv")
    _write(tables.age, out / "commute_age.csv")
    summary = {}
    for name, df, ref in (("district", tables.origin, cfg.census_district), ("age", tables.age, cfg.census_age)):
        if ref:
            try:
                diff, mad = ses.compare_to_census(df, _need(Path(ref), "commute"))
            except ses.SesError as exc:
                raise StageError("commute", str(exc), input_error=True) from exc
            _write(diff, out / f"census_diff_{name}.csv")
            summary[name] = mad
    if summary:
        _write_json({"mean_abs_diff": summary}, out / "census_report.json")
    ctx["commute"] = tables
    return tables


RUNNERS = {
    "ingest": stage_ingest, "cells": stage_cells, "stats": stage_stats, "filter": stage_filter,
    "anchors": stage_anchors, "indicators": stage_indicators, "ses": stage_ses, "pca": stage_pca,
    "commute": stage_commute,
}


def run_stage(name: str, cfg: RunConfig, ctx: Context | None = None):
    ctx = Context() if ctx is None else ctx
    cfg.out.mkdir(parents=True, exist_ok=True)
    try:
        return RUNNERS[name](cfg, ctx)
    except StageError:
        raise
    except (FileNotFoundError, ingest.IngestError, spatial.SpatialError) as exc:
        raise StageError(name, str(exc), input_error=True) from exc
    except Exception as exc:
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc


def run_pipeline(cfg: RunConfig, stages=STAGES) -> Context:
    ctx = Context()
    for name in stages:
        log.info("stage %s", name)
        run_stage(name, cfg, ctx)
    return ctx


REPORT_FILES = ("ingest_report.json", "active_sims.csv", "ses_report.json", "category_stats.csv", "pca_ratios.csv")


def report(outdir) -> str:
    """Plain-text summary of a finished run. Reads only."""
    out = Path(outdir)
    missing = [f for f in REPORT_FILES if not (out / f).exists()]
    if missing:
        raise StageError("report", f"missing artifacts in {out}: {', '.join(missing)}", input_error=True)
    ing = json.loads((out / "ingest_report.json").read_text())
    sesr = json.loads((out / "ses_report.json").read_text())
    active = pd.read_csv(out / "active_sims.csv", dtype=str)
    n_sims = len(pd.read_csv(out / "attributes.csv", usecols=["sim_id"])) if (out / "attributes.csv").exists() else 0
    cats = pd.read_csv(out / "category_stats.csv")
    ratios = pd.read_csv(out / "pca_ratios.csv")

    lines = [
        f"records ingested      {ing['cdr']['records']}",
        f"records malformed     {ing['cdr']['malformed']}",
        f"records unknown cell  {ing['cdr']['dropped_unknown_cell']}",
        f"SIMs ingested         {n_sims}",
        f"SIMs active           {len(active)}",
        f"SIMs stationary       {sesr['stationary_removed']}",
        f"SIMs with SES         {sesr['with_ses']}",
        f"SIMs with category    {sesr['with_category']}",
        "",
        "home price category: SIMs, mean home-work km, mean workday rg km",
    ]
    hw = cats[(cats["indicator"] == "home_work_km")].set_index("category")
    rg = cats[(cats["indicator"] == "rg_km") & (cats["day_type"] == "workday")].set_index("category")
    for c in sorted(hw.index):
        rg_mean = f"{rg.at[c, 'mean']:.3f}" if c in rg.index else "-"
        lines.append(f"  {int(c):2d}  {int(hw.at[c, 'n']):6d}  {hw.at[c, 'mean']:8.3f}  {rg_mean:>8}")
    lines.append("")
    r = ratios["ratio"].to_numpy()
    lines.append(f"PCA explained variance PC1 {r[0]:.4f}  PC2 {r[1] if len(r) > 1 else 0.0:.4f}  "
                 f"cumulative {np.sum(r[:2]):.4f}")
    return "\n".join(lines) + "\n"
