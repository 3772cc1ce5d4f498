"""Binned mobility feature matrix and principal component analysis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .calendars import DAY_TYPES
from .ses import QUARTILE_GROUPS

RG_BINS, RG_LO, RG_WIDTH = 40, 0.5, 0.5
ENT_BINS, ENT_WIDTH = 20, 0.05
KEY_COLUMNS = ["home_price_category", "quartile_group", "day_type"]
RG_COLUMNS = [f"rg_{b:02d}" for b in range(1, RG_BINS + 1)]
ENT_COLUMNS = [f"ent_{b:02d}" for b in range(1, ENT_BINS + 1)]
FEATURE_COLUMNS = RG_COLUMNS + ENT_COLUMNS


class PcaError(ValueError):
    pass


def rg_bin(rg_km):
    """1..40 for (0.5 + (b-1)/2, 0.5 + b/2] km, 0 outside (0.5, 20.5]."""
    v = np.asarray(rg_km, dtype=float)
    b = np.ceil((v - RG_LO) / RG_WIDTH).astype(np.int64)
    ok = np.isfinite(v) & (b >= 1) & (b <= RG_BINS)
    return np.where(ok, b, 0)


def entropy_bin(e):
    """1..20 for ((b-1)*0.05, b*0.05], 0 outside (0, 1]."""
    v = np.asarray(e, dtype=float)
    # round away representation noise so 0.1 lands in bin 2, not 3
    b = np.ceil(np.round(v / ENT_WIDTH, 9)).astype(np.int64)
    ok = np.isfinite(v) & (b >= 1) & (b <= ENT_BINS)
    return np.where(ok, b, 0)


@dataclass
class FeatureMatrix:
    keys: pd.DataFrame
    values: np.ndarray
    dropped_rg: int = 0
    dropped_entropy: int = 0

    def to_frame(self) -> pd.DataFrame:
        return pd.concat([self.keys.reset_index(drop=True),
                          pd.DataFrame(self.values, columns=FEATURE_COLUMNS)], axis=1)


def build_matrix(indicators: pd.DataFrame, ses: pd.DataFrame) -> FeatureMatrix:
    """Per-key normalized histograms of rg (40 bins) and entropy (20 bins).

    Keys are (home price category, work-price quartile group, day type);
    workday rows come first. Each block is scaled to sum 1 (or left zero).
    """
    s = ses.dropna(subset=["home_price_category", "quartile_group"])
    ind = indicators[indicators["sim_id"].isin(s.index)]
    if ind.empty:
        raise PcaError("no SIMs with both indicators and SES keys")
    cat = ind["sim_id"].map(s["home_price_category"]).astype(int).to_numpy()
    grp = ind["sim_id"].map(s["quartile_group"]).to_numpy()
    dt = ind["day_type"].to_numpy()
    rb = rg_bin(ind["rg_km"].to_numpy())
    eb = entropy_bin(ind["entropy"].to_numpy())

    rows = {}
    for c, g, d, r, e in zip(cat, grp, dt, rb, eb):
        v = rows.setdefault((int(c), g, d), np.zeros(RG_BINS + ENT_BINS))
        if r:
            v[r - 1] += 1
        if e:
            v[RG_BINS + e - 1] += 1
    order = sorted(rows, key=lambda k: (DAY_TYPES.index(k[2]), k[0], QUARTILE_GROUPS.index(k[1])))
    values = np.array([rows[k] for k in order])
    for lo, hi in ((0, RG_BINS), (RG_BINS, RG_BINS + ENT_BINS)):
        block = values[:, lo:hi]
        tot = block.sum(axis=1, keepdims=True)
        values[:, lo:hi] = np.divide(block, tot, out=np.zeros_like(block), where=tot > 0)
    keys = pd.DataFrame(order, columns=KEY_COLUMNS)
    return FeatureMatrix(keys, values, dropped_rg=int((rb == 0).sum()), dropped_entropy=int((eb == 0).sum()))


@dataclass
class PcaResult:
    components: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    mean: np.ndarray
    scores: np.ndarray


def _fix_signs(components):
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def run_pca(X) -> PcaResult:
    """Eigendecomposition of the column covariance; largest-magnitude loading made positive."""
    X = np.asarray(X.values if isinstance(X, FeatureMatrix) else X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise PcaError("PCA needs at least two rows")
    mean = X.mean(axis=0)
    C = X - mean
    cov = C.T @ C / (X.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    comps = _fix_signs(evecs[:, order].T)
    trace = evals.sum()
    ratio = evals / trace if trace > 0 else np.zeros_like(evals)
    return PcaResult(comps, evals, ratio, mean, C @ comps.T)


def pareto(result: PcaResult) -> pd.DataFrame:
    r = result.explained_variance_ratio
    return pd.DataFrame({"component": np.arange(1, len(r) + 1), "ratio": r, "cumulative": np.cumsum(r)})


def scores_table(result: PcaResult, keys: pd.DataFrame) -> pd.DataFrame:
    pcs = pd.DataFrame(result.scores, columns=[f"pc{i}" for i in range(1, result.scores.shape[1] + 1)])
    return pd.concat([keys.reset_index(drop=True), pcs], axis=1)


def loadings_table(result: PcaResult) -> pd.DataFrame:
    df = pd.DataFrame(result.components, columns=FEATURE_COLUMNS)
    df.insert(0, "component", np.arange(1, len(df) + 1))
    return df
