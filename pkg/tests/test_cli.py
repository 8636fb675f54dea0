import json
import sys

import pytest

from chemrl import cli
from chemrl.checkpoint import load_checkpoint
from chemrl.metrics import history_csv, read_history, records_from_rewards

PRETRAIN = ["--set", "model.embedding_dim=8", "--set", "model.hidden_dim=16", "--set", "pretrain.epochs=2",
            "--set", "pretrain.validity_samples=10", "--quiet"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def prior(tmp_path_factory):
    out = tmp_path_factory.mktemp("prior")
    assert run("pretrain", "--corpus", "toy_corpus.smi", "--out", out, "--seed", 0, *PRETRAIN) == 0
    return out / "prior.ckpt"


def test_pretrain_missing_corpus(tmp_path, capsys):
    assert run("pretrain", "--corpus", tmp_path / "nope.smi", "--out", tmp_path / "o") == 2
    assert "pretrain.corpus" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_pretrain_checkpoint_reloads_and_repeats(prior, tmp_path):
    params, vocab, meta = load_checkpoint(prior)
    assert params.config.hidden_dim == 16
    assert (prior.parent / "pretrain_curve.png").stat().st_size > 0
    assert not (prior.parent / cli.MARKER).exists()
    assert run("pretrain", "--corpus", "toy_corpus.smi", "--out", prior.parent, "--seed", 0, *PRETRAIN) == 0
    assert (prior.parent / "prior.ckpt").read_bytes() == prior.read_bytes()


def test_unknown_key_and_bad_values_rejected(prior, tmp_path, capsys):
    out = tmp_path / "o"
    assert run("optimize", "--prior", prior, "--out", out, "--set", "algo.sigmaa=3") == 2
    assert "algo.sigmaa" in capsys.readouterr().err
    assert run("optimize", "--prior", prior, "--out", out, "--budget", 10, "--set", "algo.batch_size=20") == 2
    assert run("optimize", "--prior", prior, "--out", out, "--algo", "NOPE") == 2
    assert run("optimize", "--prior", prior, "--out", out, "--seed", 1, "--seed", 1) == 2
    assert not out.exists()


def test_dump_config_precedence(prior, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("algo.sigma = 10\nalgo.budget = 300\n")
    assert run("optimize", "--prior", prior, "--config", cfg, "--budget", 200, "--set", "algo.budget=100",
               "--dump-config") == 0
    text = capsys.readouterr().out
    assert "algo.sigma = 10" in text
    assert "algo.budget = 100" in text


def _optimize(prior, out, algo, *extra):
    return run("optimize", "--prior", prior, "--out", out, "--algo", algo, "--budget", 200,
               "--set", "algo.batch_size=20", "--set", "run.report_every=50", "--quiet", *extra)


def test_optimize_two_seeds_accounting(prior, tmp_path):
    out = tmp_path / "opt"
    assert _optimize(prior, out, "REINVENT", "--seed", 0, "--seed", 1) == 0
    for s in (0, 1):
        records, meta = read_history((out / f"seed_{s}" / "history.csv").read_text())
        assert len(records) == 200
        assert meta["seed"] == str(s)
        load_checkpoint(out / f"seed_{s}" / "agent.ckpt")
    report = json.loads((out / "report.json").read_text())
    assert set(report["runs"]) == {"0", "1"}
    assert (out / "topk_curve.png").exists()
    assert not (out / cli.MARKER).exists()


def test_ahc_full_fraction_matches_reinvent(prior, tmp_path):
    assert _optimize(prior, tmp_path / "a", "AHC", "--set", "algo.topk_fraction=1", "--set", "algo.penalty_coef=5000") == 0
    assert _optimize(prior, tmp_path / "b", "REINVENT") == 0
    a = (tmp_path / "a/seed_0/history.csv").read_text().replace(",AHC,", ",X,")
    b = (tmp_path / "b/seed_0/history.csv").read_text().replace(",REINVENT,", ",X,")
    assert a == b
    pa, _, _ = load_checkpoint(tmp_path / "a/seed_0/agent.ckpt")
    pb, _, _ = load_checkpoint(tmp_path / "b/seed_0/agent.ckpt")
    assert all((pa.numpy()[k] == v).all() for k, v in pb.numpy().items())


def test_interrupted_run_leaves_marker(prior, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise KeyboardInterrupt
    monkeypatch.setattr(cli, "train_loop", boom)
    out = tmp_path / "int"
    assert _optimize(prior, out, "REINVENT") == 1
    assert (out / cli.MARKER).exists()
    assert not (out / "seed_0" / "agent.ckpt").exists()
    assert not any(p.name.endswith(".tmp") for p in out.rglob("*"))


SUITE = """\
suite.tasks = sim, broken
suite.algorithms = REINFORCE, REINVENT
task.sim.kind = SimilarityToTarget
task.sim.target = CC(=O)Nc1ccc(O)cc1
task.broken.kind = ExternalProcess
task.broken.command = false
algo.budget = 60
algo.batch_size = 20
run.seeds = 0, 1
run.report_every = 20
"""


def test_benchmark_with_failing_cell(prior, tmp_path):
    suite = tmp_path / "suite.cfg"
    suite.write_text(SUITE)
    out = tmp_path / "bench"
    assert run("benchmark", "--suite", suite, "--prior", prior, "--out", out, "--quiet") == 0
    report = json.loads((out / "suite_report.json").read_text())
    cells = report["cells"]
    assert {t: set(c) for t, c in cells.items()} == {"sim": {"REINFORCE", "REINVENT"},
                                                    "broken": {"REINFORCE", "REINVENT"}}
    assert all(c["status"] == "ok" and len(c["runs"]) == 2 for c in cells["sim"].values())
    assert all(c["status"] == "failed" and len(c["failed_runs"]) == 2 for c in cells["broken"].values())
    assert len(list(out.rglob("history.csv"))) == 4
    table = (out / "suite_report.csv").read_text()
    assert table.splitlines()[0] == "scope,metric,REINFORCE,REINFORCE_std,REINVENT,REINVENT_std"
    first = (out / "suite_report.json").read_bytes()
    assert run("benchmark", "--suite", suite, "--prior", prior, "--out", out, "--quiet") == 0
    assert (out / "suite_report.json").read_bytes() == first


def test_suite_report_is_function_of_run_bundles(prior, tmp_path):
    suite = tmp_path / "suite.cfg"
    suite.write_text(SUITE.replace("sim, broken", "sim"))
    out = tmp_path / "bench"
    assert run("benchmark", "--suite", suite, "--prior", prior, "--out", out, "--quiet") == 0
    report = json.loads((out / "suite_report.json").read_text())
    cells = {"sim": {a: {"runs": {s: json.loads((out / "sim" / a / f"seed_{s}" / "metrics.json").read_text())
                                  for s in ("0", "1")}, "failed": {}} for a in ("REINFORCE", "REINVENT")}}
    rebuilt = cli.suite_report(cells, report["algorithms"], report["tasks"], report["seeds"], report["suite_label"])
    assert json.loads(cli._json(rebuilt)) == report


def test_evaluate_reproduces_bundle(prior, tmp_path):
    out = tmp_path / "opt"
    assert _optimize(prior, out, "REINFORCE", "--reference", "toy_corpus.smi") == 0
    history = out / "seed_0" / "history.csv"
    ev = tmp_path / "ev"
    assert run("evaluate", history, "--reference", "toy_corpus.smi", "--set", "run.report_every=50",
               "--out", ev, "--quiet") == 0
    bundle = json.loads((ev / "metrics.json").read_text())[str(history)]
    assert bundle == json.loads((out / "seed_0" / "metrics.json").read_text())


def test_evaluate_errors(tmp_path, capsys):
    good = history_csv(records_from_rewards(["CCO", "CN", "CCC"], [0.5, 0.2, 0.1]), "X", 0).splitlines()
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(good[:3] + [good[3].rsplit(",", 3)[0]]) + "\n")
    assert run("evaluate", bad) == 1
    err = capsys.readouterr().err
    assert "SchemaMismatch" in err and "row 4" in err
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run("evaluate", empty) == 1
    assert "EmptyHistory" in capsys.readouterr().err
    assert run("evaluate", tmp_path / "missing.csv") == 2


def test_generate(prior, capsys):
    assert run("generate", "--checkpoint", prior, "--count", 10, "--seed", 3) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 10
    assert run("generate", "--checkpoint", prior, "--count", 10, "--seed", 3) == 0
    assert capsys.readouterr().out.splitlines() == lines
    assert run("generate", "--checkpoint", prior, "--count", 8, "--prefix", "c1ccccc1", "--report-validity") == 0
    captured = capsys.readouterr()
    out = captured.out.splitlines()
    assert len(out) == 8 and all(s.startswith("c1ccccc1") for s in out)
    assert "valid_fraction=" in captured.err


def test_generate_scaffold(prior, capsys):
    assert run("generate", "--checkpoint", prior, "--mode", "scaffold", "--scaffold", "*c1ccccc1*",
               "--prompt", "", "--prompt", "{0}c1ccccc1", "--count", 6, "--seed", 2) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 6 and all("c1ccccc1" in s for s in lines)
    assert run("generate", "--checkpoint", prior, "--mode", "scaffold", "--scaffold", "*c1ccccc1*") == 2
    assert "prompt.scaffold" in capsys.readouterr().err


def test_generate_bad_prompt(prior, capsys):
    assert run("generate", "--checkpoint", prior, "--prefix", "c1cc[Xe]") == 2
    assert "prompt.prefix" in capsys.readouterr().err


def test_module_entry_point():
    import subprocess
    r = subprocess.run([sys.executable, "-m", "chemrl.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
