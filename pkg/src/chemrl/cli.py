"""Command-line entry point: pretrain, optimize, benchmark, evaluate, generate.

Exit codes: 0 success, 1 runtime failure, 2 configuration failure. Every
configuration problem is detected before any file is written.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .checkpoint import CheckpointError, atomic_write_text, load_checkpoint, save_checkpoint
from .config import (
    ALGO_KEYS,
    DIVERSITY_FIELDS,
    FILTER_KEYS,
    GENERATE_KEYS,
    MODEL_KEYS,
    PRETRAIN_KEYS,
    PROMPT_KEYS,
    RUN_KEYS,
    ConfigError,
    check_keys,
    convert,
    dataclass_from,
    dump_config,
    load_config,
    resolve_data_file,
    split_list,
    to_bool,
    to_int_list,
)
from .env import DE_NOVO, PREFIX, SCAFFOLD, PromptSpec, PromptTokenUnknown, rollout
from .metrics import (
    METRIC_NAMES,
    HistoryRecord,
    read_history,
    run_metrics,
    summarize_runs,
    topk_auc_curve,
)
from .pretrain import PretrainConfig, log_csv, pretrain_run
from .rl.config import AlgoConfig, preset
from .rl.config import ConfigError as AlgoConfigError
from .rl.trainer import train_loop
from .rng import stream
from .scoring.diversity import DiversitySettings
from .scoring.filters import BasicFilterConfig, ReferenceStats, reference_stats_from_smiles
from .scoring.tasks import ScoringTask, TaskError, make_oracle

REPORT_VERSION = 1
MARKER = "RUNNING"
DEFAULT_TASK = {"task.name": "target_similarity", "task.kind": "SimilarityToTarget",
                "task.target": "CC(=O)Nc1ccc(O)cc1"}
SEED_NOTE = ("component streams: numpy default_rng(little-endian u64 of "
             "blake2b('<seed>/<label>', digest_size=8)); labels: init, split, shuffle, validity, "
             "rollout, replay, ppo, sediv, generate")
SUITE_NOTE = "desk-scale stand-in suite; not the external benchmark task set"


# ------------------------------------------------------------- plumbing

def _read_text_list(path: Path) -> list[str]:
    out = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line.split()[0])
    return out


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _fmt(v) -> str:
    return "" if v is None else repr(float(v)) if isinstance(v, float) else str(v)


class RunMarker:
    """A marker file present while a run is in progress; left behind if the run dies."""

    def __init__(self, directory: Path):
        self.path = Path(directory) / MARKER

    def __enter__(self):
        atomic_write_text(self.path, "run in progress; artifacts in this directory may be incomplete\n")
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.path.unlink(missing_ok=True)
        return False


def _say(quiet: bool, *parts) -> None:
    if not quiet:
        print(*parts, file=sys.stderr)


def _seeds(values: dict) -> list[int]:
    seeds = convert(values, "run.seeds", to_int_list, [0])
    if not seeds:
        raise ConfigError("run.seeds", "at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("run.seeds", "seeds must be distinct")
    return seeds


def _positive(values: dict, key: str, fn, default, minimum=1):
    v = convert(values, key, fn, default)
    if v < minimum:
        raise ConfigError(key, f"must be >= {minimum}")
    return v


def _existing_file(values: dict, key: str, required: bool = True) -> Path | None:
    raw = values.get(key, "")
    if not raw:
        if required:
            raise ConfigError(key, "required")
        return None
    p = resolve_data_file(raw)
    if p is None:
        raise ConfigError(key, f"file not found: {raw}")
    return p


def _load_policy(values: dict, key: str):
    path = _existing_file(values, key)
    try:
        return load_checkpoint(path)
    except (CheckpointError, OSError) as exc:
        raise ConfigError(key, f"cannot load checkpoint {path}: {exc}") from None


@dataclass
class EvalSettings:
    k: int = 10
    report_every: int = 100
    sediv_sample: int = 1000
    stats: ReferenceStats | None = None
    basic: BasicFilterConfig = field(default_factory=BasicFilterConfig)


def _eval_settings(values: dict) -> EvalSettings:
    s = EvalSettings(
        k=_positive(values, "run.k", int, 10),
        report_every=_positive(values, "run.report_every", int, 100),
        sediv_sample=_positive(values, "run.sediv_sample", int, 1000),
    )
    ref = _existing_file(values, "filters.reference", required=False)
    if ref is not None:
        smiles = _read_text_list(ref)
        if not smiles:
            raise ConfigError("filters.reference", "reference corpus is empty")
        s.stats = reference_stats_from_smiles(smiles)
    basic = BasicFilterConfig()
    for name, fn in (("max_logp", float), ("max_rotatable", int), ("min_weight", float),
                     ("max_weight", float), ("alerts", to_bool)):
        key = f"filters.{name}"
        if key in values:
            setattr(basic, name, convert(values, key, fn))
    if "filters.allowed_elements" in values:
        basic.allowed_elements = frozenset(split_list(values["filters.allowed_elements"]))
    s.basic = basic
    return s


def run_bundle(records: Sequence[HistoryRecord], seed: int, ev: EvalSettings) -> dict:
    """The metric bundle of one run; identical for live runs and for re-evaluated histories."""
    return run_metrics(records, ev.k, ev.report_every, len(records), ev.stats, ev.basic,
                       stream(seed, "sediv"), ev.sediv_sample)


def _algo(values: dict, name: str | None = None) -> AlgoConfig:
    name = name or values.get("algo.name", "REINVENT")
    try:
        base = preset(name)
        cfg = dataclass_from(values, "algo", AlgoConfig, base)
        return cfg.validate()
    except AlgoConfigError as exc:
        key = "algo.name" if "preset" in str(exc) else str(exc).split(" ")[0]
        raise ConfigError(key, str(exc)) from None


def _task(values: dict, prefix: str, name: str, resolve=None) -> ScoringTask:
    params = {k[len(prefix) + 1:]: v for k, v in values.items() if k.startswith(prefix + ".")}
    kind = params.get("kind")
    if not kind:
        raise ConfigError(f"{prefix}.kind", "required")
    try:
        oracle = make_oracle(kind, params, resolve)
    except (TaskError, ValueError) as exc:
        raise ConfigError(f"{prefix}.kind", str(exc)) from None
    div = DiversitySettings()
    for f in DIVERSITY_FIELDS:
        key = f"{prefix}.diversity.{f}"
        if key in values:
            cast = to_bool if f == "enabled" else int if f == "occupancy" else float
            setattr(div, f, convert(values, key, cast))
    if not 0 < div.threshold < 1 or div.occupancy < 1:
        raise ConfigError(f"{prefix}.diversity", "threshold must lie in (0, 1) and occupancy be >= 1")
    return ScoringTask(name, oracle, kind, {k: v for k, v in params.items() if not k.startswith("diversity.")}, div)


def _prompt(values: dict, vocab) -> PromptSpec | None:
    mode = values.get("prompt.mode", DE_NOVO)
    # empty entries are kept: an attachment at the start of the template has an empty prompt
    prompts = [p.strip() for p in values["prompt.prompts"].split(";")] if "prompt.prompts" in values else []
    spec = PromptSpec(mode, values.get("prompt.prefix", ""), values.get("prompt.scaffold", ""), prompts)
    try:
        spec.validate(vocab)
    except (PromptTokenUnknown, ValueError) as exc:
        raise ConfigError("prompt.mode" if mode not in (DE_NOVO, PREFIX, SCAFFOLD) else
                          {PREFIX: "prompt.prefix", SCAFFOLD: "prompt.scaffold"}.get(mode, "prompt.mode"),
                          str(exc)) from None
    return None if mode == DE_NOVO else spec


def _write_run(directory: Path, result, bundle: dict, vocab, meta: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    atomic_write_text(directory / "history.csv", result.history_csv())
    save_checkpoint(result.agent, vocab, meta, directory / "agent.ckpt")
    atomic_write_text(directory / "metrics.json", _json(bundle))


def _metrics_table(columns: Sequence[str], bundles: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", *columns])
    for m in METRIC_NAMES:
        w.writerow([m, *(_fmt(b.get(m)) for b in bundles)])
    return buf.getvalue()


# ------------------------------------------------------------- commands

def cmd_pretrain(values: dict, dump: bool) -> int:
    check_keys(values, RUN_KEYS | MODEL_KEYS | PRETRAIN_KEYS)
    corpus = _existing_file(values, "pretrain.corpus")
    seeds = _seeds(values)
    if len(seeds) != 1:
        raise ConfigError("run.seeds", "pretrain takes exactly one seed")
    out = Path(values.get("run.out", "runs/pretrain"))
    cfg = dataclass_from(values, "pretrain", PretrainConfig)
    cfg.corpus, cfg.out_dir, cfg.seed = str(corpus), str(out), seeds[0]
    cfg.embedding_dim = _positive(values, "model.embedding_dim", int, cfg.embedding_dim)
    cfg.hidden_dim = _positive(values, "model.hidden_dim", int, cfg.hidden_dim)
    cfg.num_layers = _positive(values, "model.num_layers", int, cfg.num_layers)
    for key, ok in (("batch_size", cfg.batch_size >= 1), ("lr", cfg.lr > 0), ("epochs", cfg.epochs >= 0),
                    ("max_len", cfg.max_len >= 1), ("valid_fraction", 0 <= cfg.valid_fraction < 1),
                    ("validity_samples", cfg.validity_samples >= 0), ("clip", cfg.clip >= 0)):
        if not ok:
            raise ConfigError(f"pretrain.{key}", f"out of range: {getattr(cfg, key)!r}")
    quiet = convert(values, "run.quiet", to_bool, False)
    resolved = {**{f"pretrain.{k}": v for k, v in cfg.__dict__.items()
                   if k not in ("out_dir", "seed", "embedding_dim", "hidden_dim", "num_layers")},
                "model.embedding_dim": cfg.embedding_dim, "model.hidden_dim": cfg.hidden_dim,
                "model.num_layers": cfg.num_layers, "run.out": str(out), "run.seeds": seeds, "run.quiet": quiet}
    if dump:
        sys.stdout.write(dump_config(resolved))
        return 0
    with RunMarker(out):
        atomic_write_text(out / "config.resolved.txt", dump_config(resolved))
        _say(quiet, f"pretraining on {corpus}")
        result = pretrain_run(cfg)
        from .plotting import plot_training_curve
        plot_training_curve(result.log, out / "pretrain_curve.png")
    if not quiet:
        sys.stdout.write(log_csv(result.log))
    _say(quiet, f"best epoch {result.best_epoch}; checkpoint {result.checkpoint_path}")
    return 0


def _optimize_plan(values: dict):
    check_keys(values, RUN_KEYS | ALGO_KEYS | PROMPT_KEYS | FILTER_KEYS | {"prior.checkpoint"}, "single")
    prior, vocab, _ = _load_policy(values, "prior.checkpoint")
    if not any(k.startswith("task.") for k in values):
        values = {**values, **DEFAULT_TASK}
    task = _task(values, "task", values.get("task.name", "task"))
    algo = _algo(values)
    prompt = _prompt(values, vocab)
    if prior.config.vocab_size != len(vocab):
        raise ConfigError("prior.checkpoint", "vocabulary and network disagree")
    return prior, vocab, task, algo, prompt, _seeds(values), _eval_settings(values), values


def cmd_optimize(values: dict, dump: bool) -> int:
    prior, vocab, task, algo, prompt, seeds, ev, values = _optimize_plan(values)
    out = Path(values.get("run.out", "runs/optimize"))
    quiet = convert(values, "run.quiet", to_bool, False)
    label = values.get("algo.name", "REINVENT")
    resolved = {**{k: v for k, v in values.items() if k.startswith(("task.", "prompt.", "filters."))},
                **{f"algo.{k}": v for k, v in algo.to_dict().items()}, "algo.name": label,
                "prior.checkpoint": values["prior.checkpoint"], "run.out": str(out), "run.seeds": seeds,
                "run.k": ev.k, "run.report_every": ev.report_every, "run.sediv_sample": ev.sediv_sample,
                "run.quiet": quiet}
    if dump:
        sys.stdout.write(dump_config(resolved))
        return 0
    bundles, curves = {}, {}
    try:
        with RunMarker(out):
            atomic_write_text(out / "config.resolved.txt", dump_config(resolved))
            for seed in seeds:
                memory = task.new_memory()
                _say(quiet, f"optimize {label} on {task.name}, seed {seed}")
                result = train_loop(prior, vocab, task, algo, seed, prompt, memory, label=label,
                                    progress=None if quiet else _progress)
                bundle = run_bundle(result.records, seed, ev)
                meta = {"kind": "agent", "algorithm": label, "task": task.name, "seed": seed,
                        "algo": algo.to_dict()}
                _write_run(out / f"seed_{seed}", result, bundle, vocab, meta)
                bundles[seed] = bundle
                curves[f"seed {seed}"] = topk_auc_curve(result.records, ev.k, ev.report_every)
            summary = summarize_runs({task.name: list(bundles.values())})
            report = {"report_version": REPORT_VERSION, "package_version": __version__, "algorithm": label,
                      "task": task.name, "seeds": seeds, "seed_derivation": SEED_NOTE,
                      "runs": {str(s): b for s, b in bundles.items()}, "summary": summary["tasks"][task.name]}
            atomic_write_text(out / "report.json", _json(report))
            table = _metrics_table([f"seed_{s}" for s in seeds], [bundles[s] for s in seeds])
            atomic_write_text(out / "report.csv", table)
            from .plotting import plot_topk_curves
            plot_topk_curves(curves, out / "topk_curve.png", ev.k, f"{label} on {task.name}")
    finally:
        task.close()
    if not quiet:
        sys.stdout.write(table)
    return 0


def _progress(info: dict) -> None:
    print(f"  calls {info['oracle_calls']:>6}  mean reward {info['mean_reward']:.3f}  "
          f"max {info['max_reward']:.3f}", file=sys.stderr)


def _suite_plan(values: dict):
    check_keys(values, RUN_KEYS | ALGO_KEYS | PROMPT_KEYS | FILTER_KEYS
               | {"prior.checkpoint", "suite.file", "suite.tasks", "suite.algorithms", "suite.label"}, "suite")
    prior, vocab, _ = _load_policy(values, "prior.checkpoint")
    task_names = split_list(values.get("suite.tasks", ""))
    algos = split_list(values.get("suite.algorithms", ""))
    if not task_names:
        raise ConfigError("suite.tasks", "at least one task is required")
    if not algos:
        raise ConfigError("suite.algorithms", "at least one algorithm is required")
    if len(set(task_names)) != len(task_names):
        raise ConfigError("suite.tasks", "task names must be unique")
    configs = {a: _algo(values, a) for a in algos}
    built: dict[str, ScoringTask] = {}

    def resolve(name: str, stack=()):
        if name in stack:
            raise ConfigError(f"task.{name}.components", "circular composite")
        if name not in built:
            if f"task.{name}.kind" not in values:
                raise ConfigError(f"task.{name}.kind", "required")
            built[name] = _task(values, f"task.{name}", name, lambda n: resolve(n, (*stack, name)).oracle)
        return built[name]

    tasks = [resolve(n) for n in task_names]
    prompt = _prompt(values, vocab)
    return prior, vocab, tasks, configs, prompt, _seeds(values), _eval_settings(values)


def cmd_benchmark(values: dict, dump: bool) -> int:
    prior, vocab, tasks, configs, prompt, seeds, ev = _suite_plan(values)
    out = Path(values.get("run.out", "runs/benchmark"))
    quiet = convert(values, "run.quiet", to_bool, False)
    label = values.get("suite.label", SUITE_NOTE)
    resolved = {**{k: v for k, v in values.items() if k != "suite.file"}, "run.out": str(out), "run.seeds": seeds,
                "run.k": ev.k, "run.report_every": ev.report_every, "run.quiet": quiet}
    if dump:
        sys.stdout.write(dump_config(resolved))
        return 0
    cells: dict[str, dict[str, dict]] = {}
    try:
        with RunMarker(out):
            atomic_write_text(out / "config.resolved.txt", dump_config(resolved))
            for task in tasks:
                for name, algo in configs.items():
                    cell = {"runs": {}, "failed": {}}
                    for seed in seeds:
                        _say(quiet, f"benchmark {task.name} / {name} / seed {seed}")
                        run_dir = out / task.name / name / f"seed_{seed}"
                        try:
                            result = train_loop(prior, vocab, task, algo, seed, prompt, task.new_memory(), label=name)
                            bundle = run_bundle(result.records, seed, ev)
                            meta = {"kind": "agent", "algorithm": name, "task": task.name, "seed": seed,
                                    "algo": algo.to_dict()}
                            _write_run(run_dir, result, bundle, vocab, meta)
                            cell["runs"][str(seed)] = bundle
                        except Exception as exc:  # a failing cell must not abort the suite
                            cell["failed"][str(seed)] = f"{type(exc).__name__}: {exc}"
                            _say(quiet, f"  failed: {exc}")
                    cells.setdefault(task.name, {})[name] = cell
            report = suite_report(cells, list(configs), [t.name for t in tasks], seeds, label)
            atomic_write_text(out / "suite_report.json", _json(report))
            table = suite_table(report)
            atomic_write_text(out / "suite_report.csv", table)
            from .plotting import plot_suite
            plot_suite({t: {a: (c["summary"].get("topk_auc", {}).get("mean"), c["summary"].get("topk_auc", {}).get("std"))
                            for a, c in row.items()} for t, row in report["cells"].items()},
                       out / "suite_topk_auc.png", "top-k AUC")
    finally:
        for t in tasks:
            t.close()
    if not quiet:
        sys.stdout.write(table)
    failed = sum(len(c["failed"]) for row in cells.values() for c in row.values())
    _say(quiet, f"{failed} failed run(s)")
    return 0


def suite_report(cells: dict, algorithms: list[str], tasks: list[str], seeds: list[int], label: str) -> dict:
    """Aggregate per-run bundles; depends only on those bundles and the run layout."""
    out_cells: dict[str, dict] = {}
    per_algo: dict[str, dict[str, list]] = {a: {} for a in algorithms}
    for t in tasks:
        for a in algorithms:
            cell = cells[t][a]
            bundles = [cell["runs"][s] for s in sorted(cell["runs"], key=int)]
            summary = summarize_runs({t: bundles})["tasks"][t] if bundles else {}
            out_cells.setdefault(t, {})[a] = {
                "status": "ok" if not cell["failed"] else ("failed" if not bundles else "partial"),
                "failed_runs": cell["failed"], "runs": cell["runs"], "summary": summary,
            }
            if bundles:
                per_algo[a][t] = bundles
    suite = {a: summarize_runs(per)["suite"] if per else {} for a, per in per_algo.items()}
    return {"report_version": REPORT_VERSION, "package_version": __version__, "suite_label": label,
            "tasks": tasks, "algorithms": algorithms, "seeds": seeds, "seed_derivation": SEED_NOTE,
            "cells": out_cells, "suite": suite}


def suite_table(report: dict) -> str:
    """Metric rows by algorithm columns, first suite sums then one block per task."""
    algos = report["algorithms"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scope", "metric", *[c for a in algos for c in (a, f"{a}_std")]])
    for m in METRIC_NAMES:
        row = []
        for a in algos:
            agg = report["suite"].get(a, {}).get(m, {})
            row += [_fmt(agg.get("sum")), _fmt(agg.get("std"))]
        w.writerow(["suite", m, *row])
    for t in report["tasks"]:
        for m in METRIC_NAMES:
            row = []
            for a in algos:
                cell = report["cells"][t][a]
                agg = cell["summary"].get(m, {})
                row += ["failed", ""] if cell["status"] == "failed" else [_fmt(agg.get("mean")), _fmt(agg.get("std"))]
            w.writerow([t, m, *row])
    return buf.getvalue()


def cmd_evaluate(values: dict, histories: Sequence[str], dump: bool) -> int:
    check_keys(values, RUN_KEYS | FILTER_KEYS)
    if not histories:
        raise ConfigError("histories", "at least one history CSV is required")
    paths = []
    for h in histories:
        p = Path(h)
        if not p.is_file():
            raise ConfigError("histories", f"file not found: {h}")
        paths.append(p)
    ev = _eval_settings(values)
    out = values.get("run.out")
    quiet = convert(values, "run.quiet", to_bool, False)
    if dump:
        sys.stdout.write(dump_config({**values, "run.k": ev.k, "run.report_every": ev.report_every,
                                      "histories": [str(p) for p in paths]}))
        return 0
    bundles = {}
    for p in paths:
        records, meta = read_history(p.read_text(encoding="utf-8"), str(p))
        try:
            seed = int(meta["seed"])
        except ValueError:
            seed = 0
        bundles[str(p)] = run_bundle(records, seed, ev)
    table = _metrics_table(list(bundles), list(bundles.values()))
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        atomic_write_text(Path(out) / "metrics.json", _json(bundles))
        atomic_write_text(Path(out) / "metrics.csv", table)
    if not quiet:
        sys.stdout.write(table)
    return 0


def cmd_generate(values: dict, dump: bool) -> int:
    check_keys(values, RUN_KEYS | GENERATE_KEYS | PROMPT_KEYS)
    params, vocab, _ = _load_policy(values, "generate.checkpoint")
    count = _positive(values, "generate.count", int, 10)
    max_len = _positive(values, "generate.max_len", int, 100)
    report = convert(values, "generate.report_validity", to_bool, False)
    seeds = _seeds(values)
    if len(seeds) != 1:
        raise ConfigError("run.seeds", "generate takes exactly one seed")
    prompt = _prompt(values, vocab)
    if dump:
        sys.stdout.write(dump_config({**values, "generate.count": count, "generate.max_len": max_len,
                                      "run.seeds": seeds}))
        return 0
    from .chem import is_valid
    trajs = rollout(params, vocab, count, max_len, stream(seeds[0], "generate"), prompt)
    for tr in trajs:
        sys.stdout.write(tr.smiles + "\n")
    sys.stdout.flush()
    if report:
        valid = sum(1 for t in trajs if is_valid(t.smiles))
        print(f"valid_fraction={valid / len(trajs):.4f}", file=sys.stderr)
    return 0


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, action="append", help="run seed (repeatable)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--budget", type=int, help="oracle calls per run")
    common.add_argument("--algo", help="algorithm preset name")
    common.add_argument("--quiet", action="store_true", help="suppress progress and tables")
    common.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")

    parser = argparse.ArgumentParser(prog="chemrl", description="Chemical language model RL toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", parents=[common], help="train a prior on a SMILES corpus")
    p.add_argument("--corpus")

    p = sub.add_parser("optimize", parents=[common], help="fine-tune a prior against one scoring task")
    p.add_argument("--prior")
    p.add_argument("--reference", help="reference corpus for the target chemistry filter")

    p = sub.add_parser("benchmark", parents=[common], help="run a task x algorithm x seed suite")
    p.add_argument("--suite", help="suite file (key = value)")
    p.add_argument("--prior")
    p.add_argument("--reference")

    p = sub.add_parser("evaluate", parents=[common], help="recompute metrics from history CSVs")
    p.add_argument("histories", nargs="*")
    p.add_argument("--reference")

    p = sub.add_parser("generate", parents=[common], help="sample molecules from a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--count", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--mode", choices=[DE_NOVO, PREFIX, SCAFFOLD])
    p.add_argument("--prefix")
    p.add_argument("--scaffold")
    p.add_argument("--prompt", action="append", help="scaffold attachment prompt (repeatable)")
    p.add_argument("--report-validity", action="store_true")
    return parser


def resolve_values(args: argparse.Namespace) -> dict[str, str]:
    """Suite file, then --config, then flags; later sources win."""
    values: dict[str, str] = {}
    if getattr(args, "suite", None):
        p = resolve_data_file(args.suite)
        if p is None:
            raise ConfigError("suite.file", f"file not found: {args.suite}")
        values.update(load_config(p))
    if args.config:
        values.update(load_config(args.config))
    if values.get("suite.file") and not getattr(args, "suite", None):
        p = resolve_data_file(values["suite.file"])
        if p is None:
            raise ConfigError("suite.file", f"file not found: {values['suite.file']}")
        values = {**load_config(p), **values}
    flags = {
        "run.seeds": ", ".join(str(s) for s in args.seed) if args.seed else None,
        "run.out": args.out,
        "algo.budget": None if args.budget is None else str(args.budget),
        "algo.name": args.algo,
        "run.quiet": "true" if args.quiet else None,
        "pretrain.corpus": getattr(args, "corpus", None),
        "prior.checkpoint": getattr(args, "prior", None),
        "filters.reference": getattr(args, "reference", None),
        "generate.checkpoint": getattr(args, "checkpoint", None),
        "generate.count": None if getattr(args, "count", None) is None else str(args.count),
        "generate.max_len": None if getattr(args, "max_len", None) is None else str(args.max_len),
        "generate.report_validity": "true" if getattr(args, "report_validity", False) else None,
        "prompt.mode": getattr(args, "mode", None),
        "prompt.prefix": getattr(args, "prefix", None),
        "prompt.scaffold": getattr(args, "scaffold", None),
        "prompt.prompts": ";".join(args.prompt) if getattr(args, "prompt", None) is not None else None,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    for item in args.set:
        if "=" not in item:
            raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    if args.command == "generate" and values.get("prompt.prefix") and "prompt.mode" not in values:
        values["prompt.mode"] = PREFIX
    values.pop("suite.file", None)
    return values


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        values = resolve_values(args)
        dump = args.dump_config
        if args.command == "pretrain":
            return cmd_pretrain(values, dump)
        if args.command == "optimize":
            return cmd_optimize(values, dump)
        if args.command == "benchmark":
            return cmd_benchmark(values, dump)
        if args.command == "evaluate":
            return cmd_evaluate(values, args.histories, dump)
        return cmd_generate(values, dump)
    except ConfigError as exc:
        print(f"chemrl: configuration error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("chemrl: interrupted", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"chemrl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
