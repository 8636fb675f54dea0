"""Packing trajectories into padded tensors and re-evaluating them under a policy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from . import policy as P
from .env import Trajectory
from .vocab import Vocabulary


@dataclass
class SegmentBatch:
    inputs: torch.Tensor  # [S, T] GO + tokens[:-1], PAD beyond length
    targets: torch.Tensor  # [S, T] tokens, PAD beyond length
    mask: torch.Tensor  # [S, T] actionable and within length
    owner: torch.Tensor  # [S] trajectory index of each segment
    num_trajectories: int

    @property
    def step_owner(self) -> torch.Tensor:
        return self.owner[:, None].expand_as(self.mask)


def pack(trajectories: Sequence[Trajectory], vocab: Vocabulary) -> SegmentBatch:
    segs: list[tuple[np.ndarray, np.ndarray, int]] = []
    for k, tr in enumerate(trajectories):
        for seg in tr.segments():
            segs.append((seg.tokens, seg.actionable, k))
    T = max((len(s[0]) for s in segs), default=0)
    S = len(segs)
    inputs = np.full((S, T), vocab.pad, dtype=np.int64)
    targets = np.full((S, T), vocab.pad, dtype=np.int64)
    mask = np.zeros((S, T), dtype=bool)
    owner = np.zeros(S, dtype=np.int64)
    for i, (tok, act, k) in enumerate(segs):
        n = len(tok)
        if n:
            inputs[i, 0] = vocab.go
            inputs[i, 1:n] = tok[:-1]
            targets[i, :n] = tok
            mask[i, :n] = act
        owner[i] = k
    return SegmentBatch(
        torch.from_numpy(inputs), torch.from_numpy(targets), torch.from_numpy(mask),
        torch.from_numpy(owner), len(trajectories),
    )


@dataclass
class Evaluation:
    logits: torch.Tensor  # [S, T, V]
    hidden: torch.Tensor  # [S, T, H]
    step_log_probs: torch.Tensor  # [S, T], log pi(target | prefix), 0 where masked


def evaluate(params: P.PolicyParams, batch: SegmentBatch) -> Evaluation:
    logits, hidden, _ = P.forward(params, batch.inputs)
    logp = P.log_softmax(logits)
    step = logp.gather(-1, batch.targets.unsqueeze(-1)).squeeze(-1)
    step = torch.where(batch.mask, step, torch.zeros_like(step))
    return Evaluation(logits, hidden, step)


def sequence_log_probs(ev: Evaluation, batch: SegmentBatch) -> torch.Tensor:
    """Summed actionable log-probability per trajectory, [N]."""
    per_segment = ev.step_log_probs.sum(1)
    out = torch.zeros(batch.num_trajectories, dtype=per_segment.dtype)
    return out.index_add(0, batch.owner, per_segment)


def sequence_log_prob(params: P.PolicyParams, trajectory: Trajectory, vocab: Vocabulary) -> float:
    """log P(trajectory) under ``params``, summing actionable steps only."""
    batch = pack([trajectory], vocab)
    with torch.no_grad():
        return float(sequence_log_probs(evaluate(params, batch), batch)[0])


def step_log_probs_numpy(params: P.PolicyParams, trajectory: Trajectory, vocab: Vocabulary) -> list[np.ndarray]:
    """Per-token log-probabilities of each segment, for consistency checks."""
    out = []
    for seg in trajectory.segments():
        single = Trajectory(seg.tokens, seg.log_probs, np.ones_like(seg.actionable), seg.smiles, seg.truncated)
        batch = pack([single], vocab)
        with torch.no_grad():
            ev = evaluate(params, batch)
        out.append(ev.step_log_probs[0, : len(seg.tokens)].numpy().copy())
    return out
