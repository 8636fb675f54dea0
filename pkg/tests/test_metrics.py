import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chemrl.chem import fingerprint, parse, tanimoto
from chemrl.chem.tables import data_path
from chemrl.metrics import (
    EmptyHistory, HistoryRecord, NoValidMolecules, SchemaMismatch, checkpoints, diverse_topk, diverse_topk_auc,
    filtered_metrics, history_csv, read_history, records_from_rewards, run_metrics, sphere_exclusion_diversity,
    streaming_topk_auc, streaming_topk_auc_curve, summarize_runs, topk_auc, topk_auc_curve, topk_average,
    uniqueness_fraction, validity_fraction,
)
from chemrl.scoring import reference_stats_from_smiles

CORPUS = [l for l in data_path("toy_corpus.smi").read_text().splitlines() if l and not l.startswith("#")]


def keyed(rewards, keys=None):
    keys = keys or [f"m{i}" for i in range(len(rewards))]
    return [HistoryRecord(i + 1, k, float(r), False, key=k) for i, (k, r) in enumerate(zip(keys, rewards))]


def brute_topk(records, k):
    best = {}
    for r in records:
        best[r.key] = max(best.get(r.key, -1.0), r.reward)
    top = sorted(best.values(), reverse=True)[:k]
    return sum(top) / len(top)


def brute_auc(records, k, every):
    n = len(records)
    pts = list(range(every, n + 1, every))
    if not pts or pts[-1] != n:
        pts.append(n)
    total, prev = 0.0, 0
    for c in pts:
        total += (c - prev) * brute_topk(records[:c], k)
        prev = c
    return total / n


def test_topk_average_examples():
    assert topk_average(keyed([1.0, 0.5, 0.2]), 2) == 0.75
    assert topk_average(keyed([0.3, 0.9, 0.6], ["a", "a", "a"]), 2) == 0.9
    assert topk_average(keyed([0.3, 0.6]), 10) == pytest.approx(0.45)
    with pytest.raises(EmptyHistory):
        topk_average([], 3)


def test_auc_constant_reward():
    assert topk_auc(keyed([0.4] * 300), k=10) == pytest.approx(0.4, abs=1e-15)


@pytest.mark.parametrize("n", [1, 7, 100, 1000])
def test_auc_linear_ramp(n):
    recs = keyed([t / n for t in range(1, n + 1)])
    assert topk_auc(recs, k=1, report_every=1) == pytest.approx((n + 1) / (2 * n), abs=1e-12)


def test_checkpoints():
    assert checkpoints(250, 100) == [100, 200, 250]
    assert checkpoints(200, 100) == [100, 200]
    assert checkpoints(50, 100) == [50]


def test_auc_holds_last_value_for_short_history():
    recs = keyed([0.5] * 50)
    assert topk_auc(recs, k=1, report_every=10, budget=100) == pytest.approx(0.5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=400), st.integers(1, 15), st.integers(1, 60),
       st.integers(1, 30))
def test_streaming_equals_brute_force(rewards, k, every, n_keys):
    keys = [f"k{i % n_keys}" for i in range(len(rewards))]
    recs = keyed(rewards, keys)
    pts, stream_vals = streaming_topk_auc_curve(recs, k, every)
    pts2, scratch_vals = topk_auc_curve(recs, k, every)
    assert pts == pts2
    assert stream_vals == scratch_vals
    assert stream_vals == [brute_topk(recs[:c], k) for c in pts]
    assert streaming_topk_auc(recs, k, every) == topk_auc(recs, k, every) == brute_auc(recs, k, every)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=300), st.integers(1, 10))
def test_auc_bounded_by_final_average(rewards, k):
    recs = keyed(rewards)
    pts, vals = topk_auc_curve(recs, k, 20)
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    auc = topk_auc(recs, k, 20)
    final = topk_average(recs, k)
    assert auc <= final + 1e-12
    assert (abs(auc - final) < 1e-12) == (vals[0] == final)


def test_diverse_topk_examples():
    same = [HistoryRecord(i + 1, "CCO", 0.5, True) for i in range(5)]
    assert len(diverse_topk(same, 10)) == 1
    picks = diverse_topk(records_from_rewards(["CCCCCC", "c1ccccc1", "OCCO"], [0.2, 0.9, 0.5]), 2)
    assert [p.smiles for p in picks] == ["c1ccccc1", "OCCO"]
    # the runner-up is a near-copy of the best, so the third molecule takes its place
    recs = records_from_rewards(["CCCCCCCCO", "CCCCCCCCCO", "c1ccccc1"], [0.9, 0.8, 0.1])
    assert tanimoto(fingerprint(parse("CCCCCCCCO")), fingerprint(parse("CCCCCCCCCO"))) >= 0.35
    assert [p.smiles for p in diverse_topk(recs, 2)] == ["CCCCCCCCO", "c1ccccc1"]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 999), min_size=1, max_size=120), st.integers(1, 15))
def test_diverse_topk_pairwise_dissimilar(idx, k):
    rng = np.random.default_rng(len(idx))
    recs = records_from_rewards([CORPUS[i] for i in idx], rng.random(len(idx)))
    picks = diverse_topk(recs, k)
    assert len(picks) <= k
    fps = [fingerprint(parse(p.smiles)) for p in picks]
    for i in range(len(fps)):
        for j in range(i):
            assert tanimoto(fps[i], fps[j]) < 0.35


def test_sediv_examples():
    rng = np.random.default_rng(0)
    assert sphere_exclusion_diversity(["CCO"] * 1000, rng) == pytest.approx(1 / 1000)
    dissimilar = ["C", "O", "N", "S", "CC(=O)Nc1ccc(O)cc1"]
    assert sphere_exclusion_diversity(dissimilar, rng) == 1.0
    a = sphere_exclusion_diversity(CORPUS, np.random.default_rng(4), 300)
    b = sphere_exclusion_diversity(CORPUS, np.random.default_rng(4), 300)
    assert a == b
    with pytest.raises(NoValidMolecules):
        sphere_exclusion_diversity(["C(", "X"], rng)


def test_sediv_duplicate_invariance():
    sample = CORPUS[:200]
    once = sphere_exclusion_diversity(sample, np.random.default_rng(1), 1000)
    twice = sphere_exclusion_diversity(sample + sample, np.random.default_rng(1), 1000)
    # leaders unchanged, denominator doubles
    assert twice == pytest.approx(once / 2, abs=1e-15)


def test_validity_and_uniqueness():
    recs = records_from_rewards(["CCO", "OCC", "C(", "CN"], [0.1, 0.2, 0.0, 0.3])
    assert validity_fraction(recs) == 0.75
    assert uniqueness_fraction(recs) == 0.75
    assert [r.unique_so_far for r in recs] == [1, 1, 2, 3]


def test_filtered_metrics_examples():
    stats = reference_stats_from_smiles(CORPUS)
    nothing = records_from_rewards(["CCO", "C("], [0.9, 0.1])
    out = filtered_metrics(nothing, stats)
    assert out == {"cf_pass_fraction": 0.0, "cf_diverse_topk_avg": None, "cf_diverse_topk_auc": None,
                   "cf_sediv": None}
    good = [s for s in CORPUS[:40] if _passes(s, stats)][:6]
    recs = records_from_rewards(good, np.linspace(0.2, 0.9, len(good)))
    full = run_metrics(recs, k=3, report_every=2, stats=stats)
    assert full["cf_pass_fraction"] == 1.0
    assert full["cf_diverse_topk_avg"] == full["diverse_topk_avg"]
    assert full["cf_diverse_topk_auc"] == full["diverse_topk_auc"]


def _passes(smiles, stats):
    from chemrl.scoring import passes_both
    return passes_both(parse(smiles), stats)


def test_filtered_auc_not_above_unfiltered():
    # best molecule fails the basic filter (ethanol is too light), the second passes
    stats = reference_stats_from_smiles(CORPUS)
    second = next(s for s in CORPUS if _passes(s, stats))
    recs = records_from_rewards(["CCO", second], [0.9, 0.4])
    full = run_metrics(recs, k=1, report_every=1, stats=stats)
    assert full["cf_diverse_topk_auc"] <= full["diverse_topk_auc"]
    assert full["cf_diverse_topk_auc"] == pytest.approx(0.2)


def test_summarize_runs_examples():
    single = summarize_runs({"a": [{"x": 0.3}]})
    assert single["tasks"]["a"]["x"]["std"] == 0.0
    two = summarize_runs({"a": [{"x": 0.4}], "b": [{"x": 0.6}]})
    assert two["suite"]["x"]["sum"] == pytest.approx(1.0)
    same = summarize_runs({"a": [{"x": 0.5}] * 3})
    assert same["tasks"]["a"]["x"] == {"mean": 0.5, "std": 0.0, "n": 3}
    spread = summarize_runs({"a": [{"x": 0.2}, {"x": 0.4}], "b": [{"x": 0.1}, {"x": 0.5}]})
    assert spread["suite"]["x"]["std"] == pytest.approx(math.sqrt(0.1 ** 2 + 0.2 ** 2))
    absent = summarize_runs({"a": [{"x": None}]})
    assert absent["suite"]["x"]["sum"] is None


def test_history_csv_round_trip():
    recs = records_from_rewards(["CCO", "C(", "CN"], [0.1, 0.0, 1 / 3])
    text = history_csv(recs, "PPO", 7)
    back, meta = read_history(text)
    assert meta == {"algorithm": "PPO", "seed": "7"}
    assert [(r.smiles, r.reward, r.valid, r.unique_so_far, r.key) for r in back] == \
           [(r.smiles, r.reward, r.valid, r.unique_so_far, r.key) for r in recs]
    assert history_csv(back, "PPO", 7) == text


def test_read_history_errors():
    text = history_csv(records_from_rewards(["CCO", "CN"], [0.1, 0.2]), "A", 0)
    lines = text.splitlines()
    with pytest.raises(SchemaMismatch, match="row 3"):
        read_history("\n".join(lines[:2] + [lines[2].rsplit(",", 2)[0]]))
    with pytest.raises(SchemaMismatch, match="oracle_call"):
        read_history("\n".join([lines[0], lines[2]]))
    with pytest.raises(SchemaMismatch, match="reward"):
        read_history("\n".join([lines[0], lines[1].replace("0.1", "1.5")]))
    with pytest.raises(EmptyHistory):
        read_history("")
    with pytest.raises(EmptyHistory):
        read_history(lines[0] + "\n")
