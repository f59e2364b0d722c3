"""Acceptance suite: one PASS/FAIL line per criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they
arrive; they are also repeated in the terminal summary.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from elmv.cli import main
from elmv.data import MissingnessMask, load_iris, write_table
from elmv.ensemble import SimilarityWeights, combine_similarity, missingness_distances
from elmv.ensemble import feature_distances, overall_best, select_from_criteria, softmax, tbest
from elmv.features import rank_features, reports_from_registry
from elmv.learner import LearnerParams, cross_validate
from elmv.pipeline import ELMVConfig, qualified_subsets, train_registry
from elmv.simulation import SimulationConfig, expand, mask_random, run_trials, summarize
from elmv.subsets import brute_force_min, filter_qualified, generate_table

pytestmark = pytest.mark.slow

K3_ORACLE = [0.37763576447260117376, 0.454984713414809771, 0.16737952211258905524]
LOW, HIGH = (0.05, 0.10, 0.20), (0.60, 0.65, 0.70)
SEEDS = (0, 1, 2, 3, 4)


@pytest.fixture(scope="module")
def trials():
    """One five-seed run of every method at the six simulation rates."""
    cfg = SimulationConfig(missing_rates=LOW + HIGH, trial_seeds=SEEDS)
    seconds = {}
    results = []
    for group in (LOW, HIGH):
        t0 = time.perf_counter()
        results += run_trials(replace(cfg, missing_rates=group))
        seconds[group] = time.perf_counter() - t0
    return results, summarize(results), seconds


def mean_of(results, method, rate, metric="accuracy"):
    vals = [getattr(r.metrics, metric) for r in results
            if r.method == method and r.missing_rate == rate and r.metrics is not None]
    n_failed = sum(1 for r in results
                   if r.method == method and r.missing_rate == rate and r.metrics is None)
    return (float(np.mean(vals)) if vals else float("nan")), n_failed


def test_c01_iris_loocv(verdict):
    t0 = time.perf_counter()
    acc = cross_validate(load_iris(), LearnerParams(), scheme="loocv").accuracy
    dt = time.perf_counter() - t0
    ok = acc >= 0.93 and dt < 60
    assert verdict(1, ok, f"IRIS LOOCV accuracy {acc:.4f} (>= 0.93), {dt:.1f}s (< 60s)")


def test_c02_low_missingness(trials, verdict):
    # the compared methods are those of the accuracy table: base learner, mean
    # imputation and ELMV (MICE only when externally imputed tables are supplied);
    # the kNN vote is listed for information
    results, _, seconds = trials
    parts, ok = [], True
    for rate in LOW:
        for method in ("elmv", "base_no_impute", "mean_impute"):
            m, failed = mean_of(results, method, rate)
            ok &= failed == 0 and m >= 0.90
            parts.append(f"{method}@{rate:g}={m:.3f}" + (f"({failed} failed)" if failed else ""))
    knn = " ".join(f"{mean_of(results, 'knn_baseline', r)[0]:.3f}" for r in LOW)
    ok &= seconds[LOW] < 600
    assert verdict(2, ok, f"all >= 0.90: {' '.join(parts)}; {seconds[LOW]:.0f}s (< 600s); "
                          f"knn_baseline (not compared) {knn}")


def test_c03_high_missingness(trials, verdict):
    results, _, seconds = trials
    parts, ok = [], True
    for rate in HIGH:
        e, failed = mean_of(results, "elmv", rate)
        b, _ = mean_of(results, "base_no_impute", rate)
        m, _ = mean_of(results, "mean_impute", rate)
        ok &= failed == 0 and e >= 0.70 and e - b >= 0.03 and e - m >= 0.03
        parts.append(f"{rate:g}: elmv {e:.3f} ({failed} failed) base {b:.3f} mean {m:.3f}")
    ok &= seconds[HIGH] < 1800
    assert verdict(3, ok, f"elmv >= 0.70 and +0.03 over both; {'; '.join(parts)}; "
                          f"{seconds[HIGH]:.0f}s (< 1800s)")


def test_c04_metric_ordering(trials, verdict):
    results, _, _ = trials
    wins, cells = 0, []
    for rate in HIGH:
        for metric in ("precision", "recall", "f1"):
            e, _ = mean_of(results, "elmv", rate, metric)
            others = [mean_of(results, m, rate, metric)[0] for m in ("base_no_impute", "mean_impute")]
            best = not math.isnan(e) and e >= max(others)
            wins += best
            cells.append(f"{metric}@{rate:g}:{'elmv' if best else 'other'}")
    assert verdict(4, wins >= 8, f"elmv best in {wins}/9 cells (>= 8): {' '.join(cells)}")


def test_c05_knn_gap(trials, verdict):
    results, _, _ = trials
    e, _ = mean_of(results, "elmv", 0.60)
    k, _ = mean_of(results, "knn_baseline", 0.60)
    ok = k <= e - 0.10
    assert verdict(5, ok, f"at 60%: knn {k:.3f} <= elmv {e:.3f} - 0.10")


def test_c06_greedy_vs_oracle(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    below = equal = cells = 0
    for density in (0.1, 0.3, 0.5):
        for _ in range(100):
            n, m = rng.integers(1, 6, size=2)
            mask = MissingnessMask(rng.random((n, m)) < density)
            table = generate_table(mask, 1, 1)
            for i, j in table.defined_cells():
                opt = brute_force_min(mask, i, j)
                c = table.count(i, j)
                below += c < opt
                equal += c == opt
                cells += 1
    dt = time.perf_counter() - t0
    ok = below == 0 and dt < 120
    assert verdict(6, ok, f"{cells} cells, {below} below optimum, equality rate "
                          f"{equal / cells:.4f}, {dt:.1f}s (< 120s)")


def test_c07_dp_invariants(verdict):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    mono = recount = 0
    for _ in range(1000):
        n, m = rng.integers(1, 51), rng.integers(1, 21)
        bits = rng.random((n, m)) < rng.uniform(0, 0.6)
        table = generate_table(MissingnessMask(bits), 1, 1)
        c = table.counts
        # counts never grow when a row or column is removed
        a, b = c[1:, 1:], c[:-1, 1:]
        mono += int(np.sum((a >= 0) & (b >= 0) & (b > a)))
        a, b = c[1:, 1:], c[1:, :-1]
        mono += int(np.sum((a >= 0) & (b >= 0) & (b > a)))
        for i, j in table.defined_cells():
            rows, cols = table.members(i, j)
            if len(rows) != i or len(cols) != j or bits[np.ix_(rows, cols)].sum() != c[i, j]:
                recount += 1
    dt = time.perf_counter() - t0
    ok = mono == 0 and recount == 0 and dt < 120
    assert verdict(7, ok, f"1000 masks: {mono} monotonicity and {recount} recount violations, "
                          f"{dt:.1f}s (< 120s)")


def test_c08_scale(verdict):
    rng = np.random.default_rng(0)
    col_rates = np.sort(rng.beta(0.6, 2.0, size=78))
    row_scale = rng.uniform(0.5, 1.5, size=(202, 1))
    bits = rng.random((202, 78)) < np.clip(col_rates * row_scale, 0, 1)
    t0 = time.perf_counter()
    table = generate_table(MissingnessMask(bits))
    dt = time.perf_counter() - t0
    coll = filter_qualified(table, 0.20)
    ok = dt < 60 and len(coll) > 0
    assert verdict(8, ok, f"202x78 mask (rate {bits.mean():.2f}): {dt:.2f}s (< 60s), "
                          f"{len(coll)} qualified subsets at cap 0.20")


def test_c09_similarity(verdict):
    rng = np.random.default_rng(9)
    worst_soft = worst_sum = 0.0
    for _ in range(500):
        k, f = rng.integers(1, 30), rng.integers(1, 12)
        s = rng.normal(size=(k, f))
        s[rng.random(s.shape) < 0.3] = np.nan
        q = rng.normal(size=f)
        q[rng.random(f) < 0.3] = np.nan
        w = SimilarityWeights(*rng.uniform(0, 2, size=2) + [0, 1e-3])
        df, dm = feature_distances(q, s)[0], missingness_distances(q, s)[0]
        worst_soft = max(worst_soft, abs(softmax(-df).sum() - 1), abs(softmax(-dm).sum() - 1))
        worst_sum = max(worst_sum, abs(combine_similarity(df, dm, w).sum() - (w.w_f + w.w_m)))
    sim = combine_similarity([0, 1, 2], [2, 0, 1], SimilarityWeights(0.5, 0.5))
    zf = sum(math.exp(-d) for d in (0, 1, 2))
    zm = sum(math.exp(-d) for d in (2, 0, 1))
    scalar = [0.5 * math.exp(-a) / zf + 0.5 * math.exp(-b) / zm for a, b in zip((0, 1, 2), (2, 0, 1))]
    err = max(max(abs(a - b) for a, b in zip(sim, scalar)),
              max(abs(a - b) for a, b in zip(sim, K3_ORACLE)))
    ok = worst_soft <= 1e-9 and worst_sum <= 1e-9 and err <= 1e-12
    assert verdict(9, ok, f"softmax sum error {worst_soft:.1e}, Sim sum error {worst_sum:.1e} "
                          f"(<= 1e-9); k=3 example error {err:.1e} (<= 1e-12)")


def test_c10_selection_soundness(verdict):
    rng = np.random.default_rng(10)
    bad = 0
    for _ in range(1000):
        n, m = rng.integers(1, 10), rng.integers(1, 12)
        c = rng.integers(0, 5, size=(n, m)) / 4 if rng.random() < 0.5 else rng.random((n, m))
        sel = set(select_from_criteria(c).tolist())
        tb = tbest(c)
        sound = all(tb[:, j].any() for j in sel)
        bad += not sound or not set(overall_best(c).tolist()) <= sel
    assert verdict(10, bad == 0, f"1000 matrices, {bad} violations")


def test_c11_planted_features(verdict):
    iris = load_iris()
    planted = {f"{f}@0" for f in iris.feature_names}
    hits, tops = 0, []
    t0 = time.perf_counter()
    for seed in range(10):
        t = mask_random(expand(iris, seed=seed), 0.30, seed)
        cfg = ELMVConfig(seed=seed)
        records = train_registry(t, qualified_subsets(t, cfg), cfg, loocv=True)
        ranking = rank_features(reports_from_registry(records, k3=5), cfg.rate_bin_width, k4=8)
        found = planted & set(ranking.features)
        hits += len(found) == 4
        tops.append(len(found))
    dt = time.perf_counter() - t0
    ok = hits >= 8
    assert verdict(11, ok, f"all four zero-noise features in top-8 for {hits}/10 seeds (>= 8); "
                           f"planted found per seed {tops}; {dt:.0f}s")


def test_c12_run_all_determinism(tmp_path, verdict):
    iris = load_iris()
    write_table(mask_random(expand(iris, seed=0), 0.20, 0), tmp_path / "sim.csv")
    codes = []
    for name in ("a", "b"):
        codes.append(main(["run-all", "--input", str(tmp_path / "sim.csv"),
                           "--output-dir", str(tmp_path / name), "-q"]))
    same = {f: (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
            for f in ("predictions.tsv", "ranking.tsv")}
    ok = codes == [0, 0] and all(same.values())
    assert verdict(12, ok, f"exit codes {codes}; byte-identical {same}")
