"""Budgeted fine-tuning loop shared by every algorithm."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .. import policy as P
from ..batch import SegmentBatch, evaluate, pack, sequence_log_probs
from ..chem import canonical_key, parse_or_none
from ..env import PromptSpec, Trajectory, rollout
from ..metrics import HistoryRecord, history_csv
from ..rng import stream
from ..vocab import Vocabulary
from . import losses as L
from .config import AlgoConfig
from .replay import ReplayBuffer

Scorer = Callable[[Sequence[str]], Sequence[float]]


@dataclass
class RunResult:
    records: list[HistoryRecord]
    agent: P.PolicyParams
    vocab: Vocabulary
    algo: AlgoConfig
    seed: int
    label: str
    iterations: list[dict] = field(default_factory=list)
    buffer: ReplayBuffer | None = None

    def history_csv(self) -> str:
        return history_csv(self.records, self.label, self.seed)


def _step_returns(batch: SegmentBatch, rewards: torch.Tensor) -> torch.Tensor:
    return rewards[batch.owner][:, None].expand_as(batch.mask)


def _rewards(trajs: Sequence[Trajectory]) -> torch.Tensor:
    return torch.tensor([float(t.reward) for t in trajs], dtype=P.DTYPE)


def sequence_loss(
    agent: P.PolicyParams,
    prior: P.PolicyParams | None,
    vocab: Vocabulary,
    algo: AlgoConfig,
    trajs: Sequence[Trajectory],
    baseline: float = 0.0,
) -> torch.Tensor:
    """Loss of the sequence-level family (REINFORCE, REINVENT, AHC) on a ready batch.

    AHC selection and replay augmentation happen before this call, so AHC and
    REINVENT share this code path exactly.
    """
    batch = pack(trajs, vocab)
    rewards = _rewards(trajs)
    ev = evaluate(agent, batch)
    agent_logp = sequence_log_probs(ev, batch)
    if algo.algorithm == "REINFORCE":
        loss = L.reinforce_loss(agent_logp, rewards, baseline)
    else:
        with torch.no_grad():
            prior_logp = sequence_log_probs(evaluate(prior, batch), batch)
        loss = L.reinvent_loss(agent_logp, prior_logp, rewards, algo.sigma)
    if algo.penalty_coef > 0:
        loss = loss + L.likelihood_penalty(agent_logp, algo.penalty_coef)
    if algo.kl_coef > 0:
        with torch.no_grad():
            prior_logits = evaluate(prior, batch).logits
        loss = loss + algo.kl_coef * L.kl_to_prior(ev.logits, prior_logits, batch.mask)
    return loss


def a2c_batch_loss(
    agent: P.PolicyParams,
    prior: P.PolicyParams | None,
    vocab: Vocabulary,
    algo: AlgoConfig,
    trajs: Sequence[Trajectory],
) -> torch.Tensor:
    batch = pack(trajs, vocab)
    ev = evaluate(agent, batch)
    values = P.value_estimate(agent, ev.hidden.detach())
    returns = _step_returns(batch, _rewards(trajs))
    loss = L.a2c_loss(ev.step_log_probs, values, returns, batch.mask,
                      P.entropy(ev.logits), algo.value_coef, algo.entropy_coef)
    if algo.kl_coef > 0:
        with torch.no_grad():
            prior_logits = evaluate(prior, batch).logits
        loss = loss + algo.kl_coef * L.kl_to_prior(ev.logits, prior_logits, batch.mask)
    return loss


@dataclass
class PPOCollection:
    """Quantities frozen at collection time for a packed batch."""
    batch: SegmentBatch
    old_step_logp: torch.Tensor
    advantages: torch.Tensor
    returns: torch.Tensor
    prior_logits: torch.Tensor | None


def ppo_collect(agent, prior, vocab, algo: AlgoConfig, trajs) -> PPOCollection:
    batch = pack(trajs, vocab)
    with torch.no_grad():
        ev = evaluate(agent, batch)
        values = P.value_estimate(agent, ev.hidden)
        returns = _step_returns(batch, _rewards(trajs))
        prior_logits = evaluate(prior, batch).logits if algo.kl_coef > 0 else None
    return PPOCollection(batch, ev.step_log_probs, returns - values, returns, prior_logits)


def ppo_minibatch_loss(agent, algo: AlgoConfig, col: PPOCollection, rows: torch.Tensor) -> torch.Tensor:
    b = col.batch
    sub = SegmentBatch(b.inputs[rows], b.targets[rows], b.mask[rows], b.owner[rows], b.num_trajectories)
    ev = evaluate(agent, sub)
    values = P.value_estimate(agent, ev.hidden.detach())
    loss = L.ppo_loss(ev.step_log_probs, col.old_step_logp[rows], col.advantages[rows], values,
                      col.returns[rows], sub.mask, algo.clip_eps, P.entropy(ev.logits),
                      algo.value_coef, algo.entropy_coef)
    if col.prior_logits is not None:
        loss = loss + algo.kl_coef * L.kl_to_prior(ev.logits, col.prior_logits[rows], sub.mask)
    return loss


def _apply(agent: P.PolicyParams, loss: torch.Tensor, algo: AlgoConfig, opt: P.AdamState) -> float:
    grads = P.backward(agent, loss, clip=algo.grad_clip or None)
    P.adam_step(agent, grads, opt)
    return float(loss.detach())


def train_loop(
    prior: P.PolicyParams,
    vocab: Vocabulary,
    scorer: Scorer,
    algo: AlgoConfig,
    seed: int,
    prompt: PromptSpec | None = None,
    diversity=None,
    label: str | None = None,
    progress: Callable[[dict], None] | None = None,
) -> RunResult:
    """Fine-tune a copy of ``prior`` until exactly ``algo.budget`` molecules are scored.

    Every generated string costs one oracle call, duplicates and invalid
    strings included. ``diversity`` (if given) must expose
    ``apply(smiles, score) -> score`` and is fed in oracle-call order.
    """
    algo.validate()
    agent = prior.clone(requires_grad=True)
    if algo.uses_critic:
        agent = agent.with_critic().requires_grad_(True)
    frozen = prior.clone(requires_grad=False)
    opt = P.AdamState(lr=algo.lr)
    rollout_rng = stream(seed, "rollout")
    replay_rng = stream(seed, "replay")
    ppo_rng = stream(seed, "ppo")
    buffer = ReplayBuffer(algo.replay_capacity) if algo.replay else None
    records: list[HistoryRecord] = []
    seen: set[str] = set()
    iterations: list[dict] = []
    baseline: float | None = None
    used = 0
    while used < algo.budget:
        n = min(algo.batch_size, algo.budget - used)
        with torch.no_grad():
            trajs = rollout(agent, vocab, n, algo.max_len, rollout_rng, prompt)
        smiles = [t.smiles for t in trajs]
        raw = list(scorer(smiles))
        if len(raw) != n:
            raise RuntimeError(f"scorer returned {len(raw)} scores for {n} molecules")
        for tr, s, r in zip(trajs, smiles, raw):
            r = float(min(max(r, 0.0), 1.0))
            if diversity is not None:
                r = float(diversity.apply(s, r))
            tr.assign_reward(r)
            used += 1
            mol = parse_or_none(s)
            key = s if mol is None else canonical_key(mol)
            seen.add(key)
            records.append(HistoryRecord(used, s, r, mol is not None, len(seen), key))
        replayed = buffer.sample(algo.replay_sample, replay_rng) if buffer is not None else []
        on_policy = trajs
        if algo.algorithm == "AHC":
            on_policy = [trajs[i] for i in L.ahc_filter([t.reward for t in trajs], algo.topk_fraction)]
        batch = list(on_policy) + replayed
        losses = []
        if algo.algorithm in ("REINFORCE", "REINVENT", "AHC"):
            if algo.algorithm == "REINFORCE" and algo.baseline and baseline is None:
                baseline = float(np.mean([t.reward for t in trajs]))
            loss = sequence_loss(agent, frozen, vocab, algo, batch, baseline or 0.0)
            losses.append(_apply(agent, loss, algo, opt))
            if algo.baseline and baseline is not None:
                d = algo.baseline_decay
                baseline = d * baseline + (1 - d) * float(np.mean([t.reward for t in trajs]))
        elif algo.algorithm == "A2C":
            losses.append(_apply(agent, a2c_batch_loss(agent, frozen, vocab, algo, batch), algo, opt))
        else:
            col = ppo_collect(agent, frozen, vocab, algo, batch)
            for _ in range(algo.ppo_epochs):
                perm = ppo_rng.permutation(len(batch))
                for chunk in np.array_split(perm, min(algo.ppo_minibatches, len(batch))):
                    if len(chunk) == 0:
                        continue
                    rows = torch.isin(col.batch.owner, torch.from_numpy(np.sort(chunk)))
                    losses.append(_apply(agent, ppo_minibatch_loss(agent, algo, col, rows), algo, opt))
        if buffer is not None:
            buffer.extend(t for t in trajs if not t.truncated)
        info = {
            "iteration": len(iterations) + 1,
            "oracle_calls": used,
            "mean_reward": float(np.mean([t.reward for t in trajs])),
            "max_reward": float(max(t.reward for t in trajs)),
            "loss": float(np.mean(losses)) if losses else math.nan,
        }
        iterations.append(info)
        if progress is not None:
            progress(info)
    assert used == algo.budget and len(records) == algo.budget, "oracle budget overrun"
    agent.requires_grad_(False)
    return RunResult(records, agent, vocab, algo, seed, label or algo.algorithm, iterations, buffer)
