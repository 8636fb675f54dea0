"""Run-level metrics over scored-molecule histories.

A history is the ordered list of scored molecules of one run. Molecules are
identified by canonical key (raw string when unparseable), so repeats count
once at their best reward.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .chem import Fingerprint, canonical_key, fingerprint, parse_or_none, tanimoto
from .scoring.filters import BasicFilterConfig, ReferenceStats, chemistry_filter_basic, chemistry_filter_target

HISTORY_COLUMNS = ("oracle_call", "smiles", "reward", "valid", "unique_so_far", "algorithm", "seed")
DIVERSE_THRESHOLD = 0.35
SEDIV_THRESHOLD = 0.65


class EmptyHistory(ValueError):
    pass


class NoValidMolecules(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


@dataclass
class HistoryRecord:
    oracle_call: int
    smiles: str
    reward: float
    valid: bool
    unique_so_far: int = 0
    key: str = ""

    def __post_init__(self):
        if not self.key:
            self.key = molecule_key(self.smiles)


def molecule_key(smiles: str) -> str:
    mol = parse_or_none(smiles)
    return smiles if mol is None else canonical_key(mol)


def records_from_rewards(smiles: Sequence[str], rewards: Sequence[float]) -> list[HistoryRecord]:
    """History built from parallel lists, numbering oracle calls from 1."""
    out, seen = [], set()
    for i, (s, r) in enumerate(zip(smiles, rewards), 1):
        rec = HistoryRecord(i, s, float(r), parse_or_none(s) is not None)
        seen.add(rec.key)
        rec.unique_so_far = len(seen)
        out.append(rec)
    return out


# ------------------------------------------------------------------ CSV

def history_csv(records: Sequence[HistoryRecord], algorithm: str, seed: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_COLUMNS)
    for r in records:
        w.writerow([r.oracle_call, r.smiles, repr(float(r.reward)), int(r.valid), r.unique_so_far, algorithm, seed])
    return buf.getvalue()


def read_history(text: str, source: str = "<history>") -> tuple[list[HistoryRecord], dict]:
    """Parse a history CSV; returns records and ``{"algorithm", "seed"}`` of the first row."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise EmptyHistory(f"{source}: file is empty")
    if tuple(header) != HISTORY_COLUMNS:
        raise SchemaMismatch(f"{source}: row 1: header {header} != {list(HISTORY_COLUMNS)}")
    records: list[HistoryRecord] = []
    meta: dict = {}
    for lineno, row in enumerate(reader, 2):
        if len(row) != len(HISTORY_COLUMNS):
            raise SchemaMismatch(f"{source}: row {lineno}: expected {len(HISTORY_COLUMNS)} fields, got {len(row)}")
        try:
            call, reward, valid, uniq = int(row[0]), float(row[2]), int(row[3]), int(row[4])
        except ValueError as exc:
            raise SchemaMismatch(f"{source}: row {lineno}: {exc}") from None
        if call != len(records) + 1:
            raise SchemaMismatch(f"{source}: row {lineno}: column oracle_call is {call}, expected {len(records) + 1}")
        if not 0.0 <= reward <= 1.0:
            raise SchemaMismatch(f"{source}: row {lineno}: column reward {reward} outside [0, 1]")
        if valid not in (0, 1):
            raise SchemaMismatch(f"{source}: row {lineno}: column valid must be 0 or 1")
        records.append(HistoryRecord(call, row[1], reward, bool(valid), uniq))
        meta.setdefault("algorithm", row[5])
        meta.setdefault("seed", row[6])
    if not records:
        raise EmptyHistory(f"{source}: no rows")
    return records, meta


# --------------------------------------------------------------- basics

def _require(records: Sequence[HistoryRecord]) -> None:
    if not records:
        raise EmptyHistory("history is empty")


def validity_fraction(records: Sequence[HistoryRecord]) -> float:
    _require(records)
    return sum(r.valid for r in records) / len(records)


def uniqueness_fraction(records: Sequence[HistoryRecord]) -> float:
    _require(records)
    return len({r.key for r in records}) / len(records)


def best_per_key(records: Iterable[HistoryRecord]) -> dict[str, float]:
    best: dict[str, float] = {}
    for r in records:
        if r.key not in best or r.reward > best[r.key]:
            best[r.key] = r.reward
    return best


def _mean_desc(values: Iterable[float]) -> float:
    vals = sorted(values, reverse=True)
    return sum(vals) / len(vals)


def topk_average(records: Sequence[HistoryRecord], k: int = 10) -> float:
    """Mean of the k best per-molecule rewards (all molecules if fewer than k)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    _require(records)
    return _mean_desc(sorted(best_per_key(records).values(), reverse=True)[:k])


def checkpoints(n: int, report_every: int) -> list[int]:
    """Oracle-call counts at which running metrics are evaluated: every ``report_every`` and ``n``."""
    if report_every < 1:
        raise ValueError("report_every must be >= 1")
    pts = list(range(report_every, n + 1, report_every))
    if not pts or pts[-1] != n:
        pts.append(n)
    return pts


def _integrate(points: Sequence[int], values: Sequence[float], budget: int) -> float:
    """Right-endpoint rectangles over [0, budget], holding the last value to the end."""
    total, prev = 0.0, 0
    for c, v in zip(points, values):
        total += (c - prev) * v
        prev = c
    if budget > prev:
        total += (budget - prev) * (values[-1] if values else 0.0)
    return total / budget


def _prefix_values(records: Sequence[HistoryRecord], points: Sequence[int], fn) -> list[float]:
    out, j, prefix = [], 0, []
    for c in points:
        while j < len(records) and records[j].oracle_call <= c:
            prefix.append(records[j])
            j += 1
        out.append(fn(prefix) if prefix else 0.0)
    return out


def topk_auc_curve(records: Sequence[HistoryRecord], k: int = 10, report_every: int = 100,
                   budget: int | None = None) -> tuple[list[int], list[float]]:
    """Checkpoint calls and top-k averages, recomputed from scratch at each checkpoint."""
    _require(records)
    n = budget or records[-1].oracle_call
    points = checkpoints(n, report_every)
    return points, _prefix_values(records, points, lambda pre: topk_average(pre, k))


def topk_auc(records: Sequence[HistoryRecord], k: int = 10, report_every: int = 100, budget: int | None = None) -> float:
    """Area under the running top-k average versus oracle calls, normalized by the budget."""
    points, values = topk_auc_curve(records, k, report_every, budget)
    return _integrate(points, values, points[-1])


class StreamingTopK:
    """Top-k average maintained one record at a time."""

    def __init__(self, k: int = 10):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.top: dict[str, float] = {}

    def add(self, key: str, reward: float) -> None:
        top = self.top
        if key in top:
            if reward > top[key]:
                top[key] = reward
            return
        if len(top) < self.k:
            top[key] = reward
            return
        worst = min(top, key=top.__getitem__)
        if reward > top[worst]:
            del top[worst]
            top[key] = reward

    def value(self) -> float:
        if not self.top:
            raise EmptyHistory("no records yet")
        return _mean_desc(self.top.values())


def streaming_topk_auc_curve(records: Sequence[HistoryRecord], k: int = 10, report_every: int = 100,
                             budget: int | None = None) -> tuple[list[int], list[float]]:
    _require(records)
    n = budget or records[-1].oracle_call
    points = checkpoints(n, report_every)
    acc = StreamingTopK(k)
    values, j = [], 0
    for c in points:
        while j < len(records) and records[j].oracle_call <= c:
            acc.add(records[j].key, records[j].reward)
            j += 1
        values.append(acc.value() if acc.top else 0.0)
    return points, values


def streaming_topk_auc(records: Sequence[HistoryRecord], k: int = 10, report_every: int = 100,
                       budget: int | None = None) -> float:
    points, values = streaming_topk_auc_curve(records, k, report_every, budget)
    return _integrate(points, values, points[-1])


# ------------------------------------------------------------- diversity

class _FingerprintCache:
    def __init__(self, radius: int = 2, width: int = 2048):
        self.radius, self.width = radius, width
        self._cache: dict[str, Fingerprint | None] = {}

    def __call__(self, smiles: str) -> Fingerprint | None:
        if smiles not in self._cache:
            mol = parse_or_none(smiles)
            self._cache[smiles] = None if mol is None else fingerprint(mol, self.radius, self.width)
        return self._cache[smiles]


def diverse_topk(records: Sequence[HistoryRecord], k: int = 10, threshold: float = DIVERSE_THRESHOLD,
                 fps: _FingerprintCache | None = None) -> list[HistoryRecord]:
    """Greedy selection in descending reward order of molecules less than ``threshold`` similar to all picks.

    Each molecule enters once at its best reward (earliest call on ties);
    unparseable strings are never selected.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    fps = fps or _FingerprintCache()
    best: dict[str, HistoryRecord] = {}
    for r in records:
        if not r.valid:
            continue
        cur = best.get(r.key)
        if cur is None or r.reward > cur.reward:
            best[r.key] = r
    ranked = sorted(best.values(), key=lambda r: (-r.reward, r.oracle_call))
    chosen: list[HistoryRecord] = []
    chosen_fps: list[Fingerprint] = []
    for r in ranked:
        fp = fps(r.smiles)
        if fp is None:
            continue
        if all(tanimoto(fp, other) < threshold for other in chosen_fps):
            chosen.append(r)
            chosen_fps.append(fp)
            if len(chosen) == k:
                break
    return chosen


def diverse_topk_average(records, k: int = 10, threshold: float = DIVERSE_THRESHOLD, fps=None) -> float | None:
    picks = diverse_topk(records, k, threshold, fps)
    return sum(r.reward for r in picks) / len(picks) if picks else None


def diverse_topk_auc(records, k: int = 10, threshold: float = DIVERSE_THRESHOLD, report_every: int = 100,
                     budget: int | None = None) -> float | None:
    _require(records)
    fps = _FingerprintCache()
    n = budget or records[-1].oracle_call
    points = checkpoints(n, report_every)
    values = _prefix_values(records, points, lambda pre: diverse_topk_average(pre, k, threshold, fps) or 0.0)
    return _integrate(points, values, points[-1])


def sphere_exclusion_leaders(fps: Sequence[Fingerprint], threshold: float, order: Sequence[int]) -> list[int]:
    """Indices that become leaders when ``fps`` are scanned in ``order``."""
    leaders: list[int] = []
    for i in order:
        if all(tanimoto(fps[i], fps[j]) < threshold for j in leaders):
            leaders.append(int(i))
    return leaders


def sphere_exclusion_diversity(smiles: Sequence[str], rng: np.random.Generator, sample_size: int = 1000,
                               threshold: float = SEDIV_THRESHOLD) -> float:
    """Leaders per sampled molecule under greedy sphere exclusion.

    Valid molecules are sampled without replacement (all when fewer than
    ``sample_size``). Leader selection runs over the distinct structures of
    the sample, sorted by key and then shuffled by ``rng``, so exact
    duplicates never change the leader set; the count is divided by the
    sample size including duplicates.
    """
    valid = [s for s in smiles if parse_or_none(s) is not None]
    if not valid:
        raise NoValidMolecules("no parseable molecules to sample")
    if len(valid) > sample_size:
        idx = np.sort(rng.choice(len(valid), size=sample_size, replace=False))
        sample = [valid[i] for i in idx]
    else:
        sample = list(valid)
    by_key: dict[str, str] = {}
    for s in sample:
        by_key.setdefault(molecule_key(s), s)
    keys = sorted(by_key)
    cache = _FingerprintCache()
    fps = [cache(by_key[k]) for k in keys]
    order = rng.permutation(len(keys))
    return len(sphere_exclusion_leaders(fps, threshold, order)) / len(sample)


# -------------------------------------------------------------- bundles

def filtered_records(records: Sequence[HistoryRecord], stats: ReferenceStats,
                     basic: BasicFilterConfig | None = None) -> list[HistoryRecord]:
    """Records whose molecule passes both chemistry filters; oracle-call numbers are kept."""
    verdict: dict[str, bool] = {}
    out = []
    for r in records:
        if r.key not in verdict:
            mol = parse_or_none(r.smiles)
            verdict[r.key] = mol is not None and bool(chemistry_filter_basic(mol, basic)) \
                and bool(chemistry_filter_target(mol, stats))
        if verdict[r.key]:
            out.append(r)
    return out


def filtered_metrics(records: Sequence[HistoryRecord], stats: ReferenceStats, k: int = 10,
                     basic: BasicFilterConfig | None = None, report_every: int = 100, budget: int | None = None,
                     rng: np.random.Generator | None = None, sample_size: int = 1000) -> dict:
    _require(records)
    kept = filtered_records(records, stats, basic)
    n = budget or records[-1].oracle_call
    out = {"cf_pass_fraction": len(kept) / len(records), "cf_diverse_topk_avg": None,
           "cf_diverse_topk_auc": None, "cf_sediv": None}
    if kept:
        out["cf_diverse_topk_avg"] = diverse_topk_average(kept, k)
        out["cf_diverse_topk_auc"] = diverse_topk_auc(kept, k, report_every=report_every, budget=n)
        out["cf_sediv"] = sphere_exclusion_diversity([r.smiles for r in kept], rng or np.random.default_rng(0),
                                                     sample_size)
    return out


METRIC_NAMES = ("valid", "unique", "topk_avg", "topk_auc", "diverse_topk_avg", "diverse_topk_auc", "sediv",
                "cf_pass_fraction", "cf_diverse_topk_avg", "cf_diverse_topk_auc", "cf_sediv")


def run_metrics(records: Sequence[HistoryRecord], k: int = 10, report_every: int = 100, budget: int | None = None,
                stats: ReferenceStats | None = None, basic: BasicFilterConfig | None = None,
                rng: np.random.Generator | None = None, sample_size: int = 1000) -> dict:
    """Every metric of one run; None marks a metric that cannot be computed."""
    _require(records)
    rng = rng or np.random.default_rng(0)
    valid_smiles = [r.smiles for r in records if r.valid]
    out = {
        "valid": validity_fraction(records),
        "unique": uniqueness_fraction(records),
        "topk_avg": topk_average(records, k),
        "topk_auc": topk_auc(records, k, report_every, budget),
        "diverse_topk_avg": diverse_topk_average(records, k),
        "diverse_topk_auc": diverse_topk_auc(records, k, report_every=report_every, budget=budget),
        "sediv": sphere_exclusion_diversity(valid_smiles, rng, sample_size) if valid_smiles else None,
    }
    if stats is not None:
        out.update(filtered_metrics(records, stats, k, basic, report_every, budget, rng, sample_size))
    else:
        out.update({m: None for m in METRIC_NAMES if m.startswith("cf_")})
    return out


def summarize_runs(per_task: dict[str, Sequence[dict]]) -> dict:
    """Mean and population std over seeds per task and metric, plus suite sums.

    Suite score is the sum of task means; suite std is the square root of the
    summed variances. Absent values are skipped; a metric absent everywhere
    stays None.
    """
    tasks: dict[str, dict] = {}
    suite: dict[str, dict] = {}
    for task, bundles in per_task.items():
        if not bundles:
            raise ValueError(f"task {task!r} has no runs")
        names = sorted({m for b in bundles for m in b})
        entry = {}
        for m in names:
            vals = [b[m] for b in bundles if b.get(m) is not None and not _isnan(b[m])]
            if vals:
                arr = np.asarray(vals, dtype=np.float64)
                entry[m] = {"mean": float(arr.mean()), "std": float(arr.std()), "n": len(vals)}
            else:
                entry[m] = {"mean": None, "std": None, "n": 0}
        tasks[task] = entry
    metrics = sorted({m for e in tasks.values() for m in e})
    for m in metrics:
        cells = [e[m] for e in tasks.values() if m in e and e[m]["mean"] is not None]
        if cells:
            suite[m] = {"sum": float(sum(c["mean"] for c in cells)),
                        "std": float(math.sqrt(sum(c["std"] ** 2 for c in cells))),
                        "tasks": len(cells)}
        else:
            suite[m] = {"sum": None, "std": None, "tasks": 0}
    return {"tasks": tasks, "suite": suite}


def _isnan(x) -> bool:
    return isinstance(x, float) and math.isnan(x)
