"""Teacher-forced maximum-likelihood training of the prior policy."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import policy as P
from .checkpoint import atomic_write_text, save_checkpoint
from .chem import is_valid
from .env import rollout
from .rng import stream
from .vocab import TokenizeError, Vocabulary, build_vocabulary, tokenize

LOG_COLUMNS = ("epoch", "train_nll", "valid_nll", "sampled_validity")


class EmptyAfterFiltering(ValueError):
    pass


@dataclass
class Corpus:
    sequences: list[list[int]]  # encoded tokens, no specials
    smiles: list[str]
    source: str
    vocab: Vocabulary
    train_idx: np.ndarray
    valid_idx: np.ndarray
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.sequences)

    def subset(self, idx: Sequence[int]) -> list[list[int]]:
        return [self.sequences[i] for i in idx]


def split_indices(n: int, valid_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint train/validation indices covering ``range(n)``; validation non-empty once n >= 2."""
    perm = rng.permutation(n)
    n_valid = int(round(n * valid_fraction))
    if valid_fraction > 0 and n >= 2:
        n_valid = min(max(n_valid, 1), n - 1)
    else:
        n_valid = 0
    return np.sort(perm[n_valid:]), np.sort(perm[:n_valid])


def load_corpus(
    path: str | os.PathLike,
    vocab: Vocabulary | None = None,
    max_len: int = 100,
    valid_fraction: float = 0.1,
    seed: int = 0,
) -> Corpus:
    """Read one SMILES per line, skipping '#' comments and blank lines.

    Lines that fail to tokenize, exceed ``max_len`` tokens or (with a supplied
    vocabulary) use unknown tokens are skipped and counted.
    """
    kept_tokens: list[list[str]] = []
    kept_smiles: list[str] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            smi = line.split()[0]
            try:
                toks = tokenize(smi)
            except TokenizeError:
                skipped += 1
                continue
            if len(toks) > max_len or (vocab is not None and any(t not in vocab for t in toks)):
                skipped += 1
                continue
            kept_tokens.append(toks)
            kept_smiles.append(smi)
    if not kept_tokens:
        raise EmptyAfterFiltering(f"no usable lines in {path} ({skipped} skipped)")
    if vocab is None:
        vocab = build_vocabulary(kept_smiles)
    seqs = [vocab.encode(t) for t in kept_tokens]
    train, valid = split_indices(len(seqs), valid_fraction, stream(seed, "split"))
    return Corpus(seqs, kept_smiles, str(path), vocab, train, valid, skipped)


@dataclass
class TokenBatch:
    inputs: torch.Tensor  # [B, T]: GO followed by the sequence
    targets: torch.Tensor  # [B, T]: the sequence followed by EOS
    mask: torch.Tensor  # [B, T]: False on padding


def encode_batch(sequences: Sequence[Sequence[int]], vocab: Vocabulary) -> TokenBatch:
    T = max(len(s) for s in sequences) + 1
    B = len(sequences)
    inputs = np.full((B, T), vocab.pad, dtype=np.int64)
    targets = np.full((B, T), vocab.pad, dtype=np.int64)
    mask = np.zeros((B, T), dtype=bool)
    for i, s in enumerate(sequences):
        n = len(s)
        inputs[i, 0] = vocab.go
        inputs[i, 1:n + 1] = s
        targets[i, :n] = s
        targets[i, n] = vocab.eos
        mask[i, :n + 1] = True
    return TokenBatch(torch.from_numpy(inputs), torch.from_numpy(targets), torch.from_numpy(mask))


def teacher_forced_loss(params: P.PolicyParams, batch: TokenBatch) -> torch.Tensor:
    """Mean per-token negative log-likelihood over unpadded positions."""
    logits, _, _ = P.forward(params, batch.inputs)
    logp = P.log_softmax(logits).gather(-1, batch.targets.unsqueeze(-1)).squeeze(-1)
    m = batch.mask.to(logp.dtype)
    return -(logp * m).sum() / m.sum()


def dataset_nll(params: P.PolicyParams, sequences: Sequence[Sequence[int]], vocab: Vocabulary,
                batch_size: int = 256) -> float:
    """Token-weighted mean NLL of ``sequences``."""
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(sequences), batch_size):
            batch = encode_batch(sequences[start:start + batch_size], vocab)
            n = int(batch.mask.sum())
            total += float(teacher_forced_loss(params, batch)) * n
            count += n
    return total / count if count else float("nan")


def sampled_validity(params: P.PolicyParams, vocab: Vocabulary, n: int, max_len: int,
                     rng: np.random.Generator, batch_size: int = 128) -> float:
    """Fraction of ``n`` sampled strings that parse (truncated samples count as invalid)."""
    valid = 0
    done = 0
    while done < n:
        b = min(batch_size, n - done)
        for tr in rollout(params, vocab, b, max_len, rng):
            valid += (not tr.truncated) and is_valid(tr.smiles)
        done += b
    return valid / n if n else float("nan")


@dataclass
class PretrainConfig:
    corpus: str = ""
    out_dir: str = "pretrain_out"
    embedding_dim: int = 64
    hidden_dim: int = 128
    num_layers: int = 1
    batch_size: int = 64
    lr: float = 1e-3
    epochs: int = 10
    max_len: int = 100
    valid_fraction: float = 0.1
    validity_samples: int = 100
    clip: float = 5.0
    seed: int = 0


@dataclass
class PretrainResult:
    params: P.PolicyParams
    vocab: Vocabulary
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    checkpoint_path: str = ""
    corpus: Corpus | None = None


def log_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for r in rows:
        w.writerow([r["epoch"], _fmt(r["train_nll"]), _fmt(r["valid_nll"]), _fmt(r["sampled_validity"])])
    return buf.getvalue()


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def pretrain_run(cfg: PretrainConfig, corpus: Corpus | None = None, write: bool = True) -> PretrainResult:
    """Shuffled minibatch Adam on the teacher-forced loss.

    Epoch 0 evaluates the freshly initialised model. The parameters with the
    lowest validation NLL are kept (training NLL when there is no validation
    split) and written to ``out_dir/prior.ckpt`` with the log CSV.
    """
    if corpus is None:
        corpus = load_corpus(cfg.corpus, max_len=cfg.max_len, valid_fraction=cfg.valid_fraction, seed=cfg.seed)
    vocab = corpus.vocab
    pconf = P.PolicyConfig(len(vocab), cfg.embedding_dim, cfg.hidden_dim, cfg.num_layers,
                           masked_ids=(vocab.go, vocab.pad))
    params = P.init_params(pconf, stream(cfg.seed, "init"))
    opt = P.AdamState(lr=cfg.lr)
    shuffle_rng = stream(cfg.seed, "shuffle")
    sample_rng = stream(cfg.seed, "validity")
    train = corpus.subset(corpus.train_idx)
    valid = corpus.subset(corpus.valid_idx)

    def evaluate(epoch: int, train_nll: float) -> dict:
        v = dataset_nll(params, valid, vocab) if valid else float("nan")
        sv = sampled_validity(params, vocab, cfg.validity_samples, cfg.max_len, sample_rng)
        return {"epoch": epoch, "train_nll": train_nll, "valid_nll": v, "sampled_validity": sv}

    log = [evaluate(0, dataset_nll(params, train, vocab))]
    best_key = _selection_key(log[0])
    best = params.clone(requires_grad=False)
    best_epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train))
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = encode_batch([train[i] for i in order[start:start + cfg.batch_size]], vocab)
            params.requires_grad_(True)
            loss = teacher_forced_loss(params, batch)
            grads = P.backward(params, loss, clip=cfg.clip)
            params.requires_grad_(False)
            P.adam_step(params, grads, opt)
            n = int(batch.mask.sum())
            total += float(loss.detach()) * n
            count += n
        row = evaluate(epoch, total / count)
        log.append(row)
        key = _selection_key(row)
        if key < best_key:
            best_key, best, best_epoch = key, params.clone(requires_grad=False), epoch
    result = PretrainResult(best, vocab, log, best_epoch, corpus=corpus)
    if write:
        out = Path(cfg.out_dir)
        meta = {"kind": "prior", "config": asdict(cfg), "best_epoch": best_epoch, "corpus_skipped": corpus.skipped}
        result.checkpoint_path = str(out / "prior.ckpt")
        save_checkpoint(best, vocab, meta, result.checkpoint_path)
        atomic_write_text(out / "pretrain_log.csv", log_csv(log))
    return result


def _selection_key(row: dict) -> float:
    v = row["valid_nll"]
    return row["train_nll"] if math.isnan(v) else v
