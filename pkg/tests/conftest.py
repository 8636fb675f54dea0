import time

import numpy as np
import pytest
import torch

from chemrl import policy as P
from chemrl.chem.tables import data_path
from chemrl.vocab import build_vocabulary

SMALL_CORPUS = ["CCO", "c1ccccc1", "CC(=O)N", "CCN", "OCCO", "C1CCCCC1", "CC(C)O", "CCCl", "CS", "C=CC"]


@pytest.fixture(scope="session")
def toy_corpus_path():
    return data_path("toy_corpus.smi")


@pytest.fixture()
def small_vocab():
    return build_vocabulary(SMALL_CORPUS)


def make_policy(vocab, embedding=8, hidden=8, layers=1, seed=0, critic=False, scale=0.5):
    cfg = P.PolicyConfig(len(vocab), embedding, hidden, layers, critic=critic, masked_ids=(vocab.go, vocab.pad))
    params = P.init_params(cfg, np.random.default_rng(seed), scale=scale)
    if critic:
        with torch.no_grad():
            params["critic.W"].copy_(torch.tensor(np.random.default_rng(seed + 1).uniform(-0.5, 0.5, (1, hidden))))
    return params


@pytest.fixture()
def small_policy(small_vocab):
    return make_policy(small_vocab)


# Pretraining settings used for every test that needs a working prior. The
# library defaults (10 epochs at lr 1e-3) are tuned for speed, not validity.
PRIOR_SETTINGS = dict(embedding_dim=64, hidden_dim=128, epochs=30, lr=5e-3, batch_size=32, seed=0)


@pytest.fixture(scope="session")
def toy_prior(tmp_path_factory, toy_corpus_path):
    from chemrl.pretrain import PretrainConfig, pretrain_run
    out = tmp_path_factory.mktemp("prior")
    start = time.perf_counter()
    result = pretrain_run(PretrainConfig(corpus=str(toy_corpus_path), out_dir=str(out), **PRIOR_SETTINGS))
    result.seconds = time.perf_counter() - start
    return result


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import summary_lines
    lines = summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
