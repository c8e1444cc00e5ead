"""Build the bundled example datasets (deterministic).

The classic California Academic Performance Index survey samples are not
redistributable here, so this script constructs synthetic analogs whose
design-based estimates match the published values:

* ``apiclus1.csv`` - a single-stage cluster sample (183 schools in 15
  districts, fpc 757). Cluster compositions are found by simulated
  annealing so that the weighted school-type proportions are exact
  (144/14/25 of 183) and both the Taylor-linearization SEs
  (0.0463/0.0268/0.0296) and the JKn replication SEs
  (0.0514/0.0278/0.0332) match to ~1e-4.
* ``apistrat.csv`` - a stratified sample (100 E / 50 M / 50 H schools,
  fpc 4421/1018/755). The api00 score column is calibrated so that
  1.4826 * MAD(api00) rounds to 137.9, the documented default prior
  scale.
* ``nsduh_synth.csv`` - a synthetic household-survey analog with nested
  strata/PSU structure and unequal weights, for the logistic-regression
  example.

Run from the repository root: ``python3 scripts/make_fixtures.py``.
"""

import os

import numpy as np
import pandas as pd

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "src", "svybayes", "data")

N_SCHOOLS, N_CLUSTERS, FPC_CLUS = 183, 15, 757
STYPE_COUNTS = np.array([144, 14, 25], float)  # E, H, M
P_HAT = STYPE_COUNTS / N_SCHOOLS
TL_TARGET = np.array([0.0463, 0.0268, 0.0296])
JK_TARGET = np.array([0.0514, 0.0278, 0.0332])


def tl_se(tab):
    """Linearization SE of the three school-type proportions, equal weights."""
    n_j = tab.sum(axis=1)
    resid = (tab - np.outer(n_j, P_HAT)) / N_SCHOOLS
    factor = (1 - N_CLUSTERS / FPC_CLUS) * N_CLUSTERS / (N_CLUSTERS - 1)
    return np.sqrt(factor * (resid**2).sum(axis=0))


def jk_se(tab):
    """JKn (leave-one-cluster-out) SE, replicate-mean centered."""
    n_j = tab.sum(axis=1)
    t = (STYPE_COUNTS[None, :] - tab) / (N_SCHOOLS - n_j)[:, None]
    dev = t - t.mean(axis=0)
    return np.sqrt((N_CLUSTERS - 1) / N_CLUSTERS * (dev**2).sum(axis=0))


def search_cluster_table(seed=20250810, iters=400_000):
    """Anneal cluster-by-type counts to match the SE targets."""
    rng = np.random.default_rng(seed)
    tab = np.zeros((N_CLUSTERS, 3), int)
    for v, c in enumerate(STYPE_COUNTS.astype(int)):
        for i in rng.integers(0, N_CLUSTERS, c):
            tab[i, v] += 1

    def loss(t):
        return (
            (((tl_se(t) - TL_TARGET) / TL_TARGET) ** 2).sum()
            + (((jk_se(t) - JK_TARGET) / JK_TARGET) ** 2).sum()
        )

    cur = loss(tab)
    best, best_tab = cur, tab.copy()
    for it in range(iters):
        temp = max(1e-7, 0.99997**it)
        a, b = rng.integers(0, N_CLUSTERS, 2)
        v = rng.integers(0, 3)
        if a == b or tab[a, v] == 0:
            continue
        tab[a, v] -= 1
        tab[b, v] += 1
        if tab[a].sum() == 0:
            tab[a, v] += 1
            tab[b, v] -= 1
            continue
        new = loss(tab)
        if new < cur or rng.uniform() < np.exp((cur - new) / temp):
            cur = new
            if new < best:
                best, best_tab = new, tab.copy()
        else:
            tab[a, v] += 1
            tab[b, v] -= 1
    return best_tab, best


def make_apiclus1():
    tab, best = search_cluster_table()
    assert np.abs(tl_se(tab) - TL_TARGET).max() < 5e-4, tl_se(tab)
    assert np.abs(jk_se(tab) - JK_TARGET).max() < 5e-4, jk_se(tab)
    print(f"apiclus1 search loss {best:.3e}")
    print(f"  TL SE {np.round(tl_se(tab), 5)}  JK SE {np.round(jk_se(tab), 5)}")

    rng = np.random.default_rng(41)
    rows = []
    snum = 1
    type_base = {"E": 640.0, "H": 600.0, "M": 615.0}
    for j in range(N_CLUSTERS):
        district_effect = rng.normal(0, 45)
        for stype, count in zip(("E", "H", "M"), tab[j]):
            for _ in range(count):
                api99 = type_base[stype] + district_effect + rng.normal(0, 60)
                api00 = api99 + rng.normal(12, 18)
                rows.append({
                    "snum": snum,
                    "dnum": j + 1,
                    "stype": stype,
                    "api00": int(round(np.clip(api00, 300, 970))),
                    "api99": int(round(np.clip(api99, 300, 970))),
                    "enroll": int(rng.integers(60, 1500)),
                    "pw": FPC_CLUS / N_CLUSTERS,
                    "fpc": FPC_CLUS,
                })
                snum += 1
    frame = pd.DataFrame(rows)
    frame.to_csv(os.path.join(OUT_DIR, "apiclus1.csv"), index=False)
    return frame


def make_apistrat():
    """Stratified sample: api00 calibrated so 1.4826 * MAD rounds to 137.9."""
    rng = np.random.default_rng(97)
    strata = [("E", 100, 4421), ("M", 50, 1018), ("H", 50, 755)]
    rows = []
    snum = 5001
    for stype, n_h, fpc in strata:
        meals = np.clip(rng.beta(1.6, 1.4, n_h) * 100, 0, 100)
        ell = np.clip(0.55 * meals + rng.normal(0, 12, n_h), 0, 85)
        mobility = np.clip(rng.gamma(2.5, 6.5, n_h), 1, 99)
        base = {"E": 720.0, "M": 680.0, "H": 655.0}[stype]
        api00 = (base - 2.1 * meals - 1.2 * ell - 0.6 * mobility
                 + rng.normal(0, 55, n_h))
        for i in range(n_h):
            rows.append({
                "snum": snum,
                "stype": stype,
                "api00": api00[i],
                "ell": int(round(ell[i])),
                "meals": int(round(meals[i])),
                "mobility": int(round(mobility[i])),
                "pw": fpc / n_h,
                "fpc": fpc,
            })
            snum += 1
    frame = pd.DataFrame(rows)

    # calibrate: scale deviations from the median so the integer-valued
    # median absolute deviation is exactly 93 (1.4826 * 93 -> 137.9)
    y = frame["api00"].to_numpy()
    med = np.median(y)
    dev = y - med
    dev *= 93.0 / np.median(np.abs(dev))
    y = np.round(med + dev)
    for _ in range(400):
        med = np.median(y)
        absdev = np.sort(np.abs(y - med))
        mad = 0.5 * (absdev[99] + absdev[100])
        if mad == 93.0:
            break
        # nudge the observation at the middle of the |dev| distribution
        target_rank = 99 if mad < 93.0 else 100
        order = np.argsort(np.abs(y - med))
        idx = order[target_rank]
        y[idx] += 1.0 if (y[idx] >= med) == (mad < 93.0) else -1.0
    med = np.median(y)
    absdev = np.sort(np.abs(y - med))
    mad = 0.5 * (absdev[99] + absdev[100])
    assert mad == 93.0, mad
    assert round(1.4826 * mad, 1) == 137.9
    frame["api00"] = y.astype(int)
    frame.to_csv(os.path.join(OUT_DIR, "apistrat.csv"), index=False)
    print(f"apistrat MAD(api00) = {mad} -> prior scale "
          f"{round(1.4826 * mad, 1)}")
    return frame


def make_nsduh_synth():
    """Nested strata/PSU logistic-regression fixture with unequal weights."""
    rng = np.random.default_rng(2014)
    rows = []
    caseid = 1
    for stratum in range(1, 31):
        for psu in (1, 2):
            cluster_effect = rng.normal(0, 0.35)
            for _ in range(30):
                mde = float(rng.uniform() < 0.08)
                logit = -1.45 + 0.9 * mde + cluster_effect
                cig = float(rng.uniform() < 1 / (1 + np.exp(-logit)))
                # weights loosely tied to smoking: informative design
                weight = float(np.exp(rng.normal(7.6, 0.45) - 0.35 * cig))
                rows.append({
                    "CASEID": caseid,
                    "VESTR": stratum,
                    "VEREP": psu,
                    "CATAG6": int(rng.integers(2, 7)),
                    "CIGMON": int(cig),
                    "AMDEY2_U": int(mde),
                    "ANALWT_C": round(weight, 4),
                })
                caseid += 1
    frame = pd.DataFrame(rows)
    frame.to_csv(os.path.join(OUT_DIR, "nsduh_synth.csv"), index=False)
    return frame


if __name__ == "__main__":
    os.makedirs(OUT_DIR, exist_ok=True)
    clus = make_apiclus1()
    strat = make_apistrat()
    nsduh = make_nsduh_synth()
    print(f"apiclus1: {len(clus)} rows, apistrat: {len(strat)} rows, "
          f"nsduh_synth: {len(nsduh)} rows")
