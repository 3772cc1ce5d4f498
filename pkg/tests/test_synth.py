import hashlib

import numpy as np
import pandas as pd
import pytest

from cdrses import activity, anchors, indicators, spatial, synth
from cdrses.ingest import CdrTable
from cdrses.traces import locate


def small(**kw):
    base = dict(n_sims=150, n_cells=60, seed=3)
    base.update(kw)
    return synth.SynthConfig(**base)


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_same_seed_identical_files(tmp_path):
    cfg = small()
    a = synth.write_city(cfg, tmp_path / "a")
    b = synth.write_city(cfg, tmp_path / "b")
    for k in a:
        assert digest(a[k]) == digest(b[k]), k


def test_different_seed_differs():
    a, _ = synth.generate_cdr(small(), synth.generate_city(small()))
    b, _ = synth.generate_cdr(small(seed=4), synth.generate_city(small(seed=4)))
    assert not a["timestamp"].equals(b["timestamp"])


def test_zero_noise_prices_follow_radius():
    cfg = small(price_noise=0.0)
    city = synth.generate_city(cfg)
    x, y = cfg.projection.forward(city.listings["lon"].to_numpy(), city.listings["lat"].to_numpy())
    expected = synth.price_at(cfg, np.hypot(x, y) / 1000.0)
    np.testing.assert_allclose(city.listings["price_huf"] / city.listings["floor_m2"], expected, rtol=1e-9)


def test_single_cell_gets_all_listings():
    cfg = small(n_cells=1, twin_cell_share=0.0)
    city = synth.generate_city(cfg)
    from shapely.geometry import shape
    boundary = spatial.project_geometry(shape(city.boundary["features"][0]["geometry"]), cfg.projection)
    merged = spatial.build_voronoi(spatial.merge_cells(city.cells, proj=cfg.projection), boundary)
    listings = city.listings.assign(price_per_m2=city.listings["price_huf"] / city.listings["floor_m2"])
    merged, assign = spatial.attach_prices(merged, listings, proj=cfg.projection)
    assert merged[0].listing_count == len(listings) and None not in assign


def _traces(cfg):
    city = synth.generate_city(cfg)
    cdr, truth = synth.generate_cdr(cfg, city)
    table = CdrTable.from_frame(cdr, city.cells["cell_id"])
    merged = spatial.merge_cells(city.cells, table.cell_counts(), proj=cfg.projection)
    return locate(table, merged, cfg.calendar), truth, spatial.cell_to_merged(merged), table


def test_zero_excursion_top_work_cell_is_planted():
    tr, truth, cm, _ = _traces(small(excursion=0.0, holiday_excursion=0.0))
    est = anchors.estimate_all(tr)
    t = truth.set_index("sim_id")
    workers = t[t["pattern"].isin(["commuter", "night_owl"])].index
    assert (est.loc[workers, "work_merged_id"] == t.loc[workers, "work_cell"].map(cm)).all()


def test_stationary_sims_have_zero_rg():
    tr, truth, _, _ = _traces(small(commuter_share=0.5, stationary_share=0.3))
    ind = indicators.compute_indicators(tr)
    still = truth.loc[truth["pattern"] == "stationary", "sim_id"]
    assert len(still) > 0
    assert (ind[ind["sim_id"].isin(still)]["rg_km"] == 0).all()


def test_commuters_visit_more_places_on_workdays():
    tr, truth, _, _ = _traces(small(n_sims=300))
    daily = indicators.daily_series(tr)
    comm = daily[daily["sim_id"].isin(truth.loc[truth["pattern"] == "commuter", "sim_id"])]
    means = comm.groupby("day_type")["location_count"].mean()
    assert means["workday"] >= means["holiday"]


def test_truth_active_days_match_histogram():
    cfg = small(n_sims=300)
    tr, truth, _, table = _traces(cfg)
    stats = activity.compute_stats(table, cfg.calendar)
    hist = activity.active_days_histogram(stats).set_index("active_days")["sims"]
    planted = truth[truth["records"] > 0]["active_days"].value_counts()
    pd.testing.assert_series_equal(hist.sort_index(), planted.sort_index(), check_names=False,
                                   check_index_type=False)


def test_daytime_heavy_profile():
    cfg = small()
    _, _, _, table = _traces(cfg)
    m = activity.day_hour_matrix(table, cfg.calendar).to_numpy()
    assert m[:, 8:18].sum() > 0.5 * m.sum()


def test_heavy_tail_setting():
    cfg = small(n_sims=400, commuter_share=0.1, night_owl_share=0.0, stationary_share=0.0, casual_share=0.85)
    _, _, _, table = _traces(cfg)
    cat = activity.activity_categories(activity.compute_stats(table, cfg.calendar)).set_index("bucket")
    assert cat.at[">1000", "sim_share"] < 50 < cat.at[">1000", "activity_share"]


def test_config_validation():
    with pytest.raises(ValueError):
        synth.SynthConfig(commuter_share=0.9, night_owl_share=0.2)
    with pytest.raises(ValueError):
        synth.SynthConfig(n_sims=0)
