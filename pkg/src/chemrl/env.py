"""Token-level generation episodes: de novo, prefix-prompted and scaffold decoration.

An episode starts from GO, teacher-forces any prompt tokens (recorded but not
actionable), then samples until EOS or ``max_len`` sampled actions. Rewards
are terminal only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from . import policy as P
from .vocab import TokenizeError, Vocabulary, tokenize

DE_NOVO, PREFIX, SCAFFOLD = "denovo", "prefix", "scaffold"
MARKER = "*"


class PromptTokenUnknown(ValueError):
    pass


class SpliceProducesUntokenizableString(ValueError):
    pass


@dataclass
class Trajectory:
    tokens: np.ndarray  # prompt + sampled action ids (EOS included if emitted)
    log_probs: np.ndarray  # agent log-probability of each token
    actionable: np.ndarray  # False for teacher-forced prompt tokens
    smiles: str
    truncated: bool
    reward: float | None = None
    prior_log_probs: np.ndarray | None = None
    earlier: list["Trajectory"] = field(default_factory=list)
    prompts: list[str] = field(default_factory=list)
    empty_completion: bool = False

    def segments(self) -> list["Trajectory"]:
        return [*self.earlier, self]

    @property
    def log_prob(self) -> float:
        return float(sum(s.log_probs[s.actionable].sum() for s in self.segments()))

    @property
    def num_actions(self) -> int:
        return int(sum(s.actionable.sum() for s in self.segments()))

    def assign_reward(self, reward: float) -> None:
        if self.reward is not None:
            raise RuntimeError("reward already assigned")
        self.reward = float(reward)


@dataclass
class PromptSpec:
    mode: str = DE_NOVO
    prefix: str = ""
    scaffold: str = ""
    prompts: list[str] = field(default_factory=list)

    def validate(self, vocab: Vocabulary) -> None:
        if self.mode == DE_NOVO:
            return
        if self.mode == PREFIX:
            _encode_prompt(vocab, self.prefix)
            return
        if self.mode == SCAFFOLD:
            markers = self.scaffold.count(MARKER)
            if markers < 1:
                raise ValueError("scaffold template needs at least one '*' attachment marker")
            if len(self.prompts) != markers:
                raise ValueError(f"{markers} attachment markers but {len(self.prompts)} prompts")
            return
        raise ValueError(f"unknown prompt mode {self.mode!r}")


def _encode_prompt(vocab: Vocabulary, text: str) -> list[int]:
    try:
        toks = tokenize(text)
    except TokenizeError as exc:
        raise PromptTokenUnknown(str(exc)) from None
    missing = [t for t in toks if t not in vocab]
    if missing:
        raise PromptTokenUnknown(f"prompt tokens not in vocabulary: {missing}")
    return vocab.encode(toks)


def _categorical(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    idx = (cdf < (u * cdf[:, -1])[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def sample_batch(
    params: P.PolicyParams,
    vocab: Vocabulary,
    prompts: Sequence[Sequence[int]],
    max_len: int,
    rng: np.random.Generator,
) -> list[Trajectory]:
    """Lock-step sampling of ``len(prompts)`` episodes, one prompt per row."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if params.config.vocab_size != len(vocab):
        raise P.ShapeMismatch("policy and vocabulary disagree on the token count")
    B = len(prompts)
    if B == 0:
        return []
    eos = vocab.eos
    tokens: list[list[int]] = [[] for _ in range(B)]
    logps: list[list[float]] = [[] for _ in range(B)]
    acts: list[list[bool]] = [[] for _ in range(B)]
    done = np.zeros(B, dtype=bool)
    truncated = np.zeros(B, dtype=bool)
    sampled = np.zeros(B, dtype=int)
    inp = torch.full((B,), vocab.go, dtype=torch.long)
    state = P.initial_state(params, B)
    t = 0
    with torch.no_grad():
        while not done.all():
            logits, state = P.step(params, inp, state)
            logp = P.log_softmax(logits).numpy()
            u = rng.random(B)
            draws = _categorical(np.exp(logp), u)
            nxt = np.full(B, vocab.pad, dtype=np.int64)
            for row in range(B):
                if done[row]:
                    continue
                forced = t < len(prompts[row])
                a = int(prompts[row][t]) if forced else int(draws[row])
                tokens[row].append(a)
                logps[row].append(float(logp[row, a]))
                acts[row].append(not forced)
                nxt[row] = a
                if not forced:
                    sampled[row] += 1
                    if a == eos:
                        done[row] = True
                    elif sampled[row] >= max_len:
                        done[row] = True
                        truncated[row] = True
            inp = torch.from_numpy(nxt)
            t += 1
    out = []
    for row in range(B):
        ids = np.asarray(tokens[row], dtype=np.int64)
        out.append(Trajectory(
            tokens=ids,
            log_probs=np.asarray(logps[row], dtype=np.float64),
            actionable=np.asarray(acts[row], dtype=bool),
            smiles=vocab.decode(ids),
            truncated=bool(truncated[row]),
        ))
    return out


def rollout(
    params: P.PolicyParams,
    vocab: Vocabulary,
    batch_size: int,
    max_len: int,
    rng: np.random.Generator,
    prompt: PromptSpec | None = None,
) -> list[Trajectory]:
    prompt = prompt or PromptSpec()
    prompt.validate(vocab)
    if prompt.mode == SCAFFOLD:
        return decorate_scaffold(params, vocab, prompt, batch_size, max_len, rng)
    ids = _encode_prompt(vocab, prompt.prefix) if prompt.mode == PREFIX else []
    trajs = sample_batch(params, vocab, [ids] * batch_size, max_len, rng)
    if prompt.mode == PREFIX:
        for tr in trajs:
            tr.prompts = [prompt.prefix]
    return trajs


def splice(template: str, completions: Sequence[str]) -> str:
    """Replace the ``*`` markers of ``template`` left to right."""
    parts = template.split(MARKER)
    if len(parts) - 1 != len(completions):
        raise ValueError("marker/completion count mismatch")
    out = [parts[0]]
    for comp, rest in zip(completions, parts[1:]):
        out.append(comp)
        out.append(rest)
    return "".join(out)


def _fill_prompt(prompt: str, done: Sequence[str]) -> str:
    for j, comp in enumerate(done):
        prompt = prompt.replace("{" + str(j) + "}", comp)
    return prompt


def decorate_scaffold(
    params: P.PolicyParams,
    vocab: Vocabulary,
    spec: PromptSpec,
    samples: int,
    max_len: int,
    rng: np.random.Generator,
) -> list[Trajectory]:
    """Iteratively complete each attachment point of a scaffold template.

    ``spec.prompts[i]`` is the SMILES prefix that ends at attachment ``i``;
    ``{j}`` placeholders in it are replaced by the completion already sampled
    for attachment ``j < i``. Each completion is spliced into the template.
    """
    if spec.mode != SCAFFOLD:
        raise ValueError("decorate_scaffold needs a scaffold-mode PromptSpec")
    spec.validate(vocab)
    completions: list[list[str]] = [[] for _ in range(samples)]
    segments: list[list[Trajectory]] = [[] for _ in range(samples)]
    used_prompts: list[list[str]] = [[] for _ in range(samples)]
    for prompt in spec.prompts:
        texts = [_fill_prompt(prompt, completions[s]) for s in range(samples)]
        ids = [_encode_prompt(vocab, t) for t in texts]
        batch = sample_batch(params, vocab, ids, max_len, rng)
        for s, tr in enumerate(batch):
            sampled = tr.tokens[tr.actionable]
            completions[s].append(vocab.decode(sampled))
            segments[s].append(tr)
            used_prompts[s].append(texts[s])
    out = []
    for s in range(samples):
        assembled = splice(spec.scaffold, completions[s])
        try:
            tokenize(assembled)
        except TokenizeError as exc:
            raise SpliceProducesUntokenizableString(f"{assembled!r}: {exc}") from None
        *earlier, last = segments[s]
        out.append(Trajectory(
            tokens=last.tokens,
            log_probs=last.log_probs,
            actionable=last.actionable,
            smiles=assembled,
            truncated=any(seg.truncated for seg in segments[s]),
            earlier=earlier,
            prompts=used_prompts[s],
            empty_completion=any(c == "" for c in completions[s]),
        ))
    return out
