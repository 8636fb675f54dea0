"""Loss terms of the fine-tuning algorithms, written over torch tensors.

Sequence-level terms take per-trajectory log-probabilities ``[N]``; step-level
terms take ``[S, T]`` tensors together with a boolean mask of actionable steps.
Quantities that must not carry gradient (advantages, old log-probs, prior
log-probs) are detached here so callers cannot leak gradient through them.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import torch

from ..policy import DTYPE, ShapeMismatch

RATIO_MIN, RATIO_MAX = 1e-4, 1e4


class MissingPriorLogProb(ValueError):
    pass


class DegenerateCertainSequence(ValueError):
    pass


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.detach().to(DTYPE)
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=DTYPE)


def _masked_mean(x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    m = mask.to(x.dtype)
    n = m.sum()
    if float(n) == 0:
        return (x * 0).sum()
    return (x * m).sum() / n


def reinforce_loss(agent_logp: torch.Tensor, rewards, baseline: float = 0.0) -> torch.Tensor:
    """mean of -(R - b) * log P_agent."""
    adv = _as_tensor(rewards) - baseline
    return -(adv * agent_logp).mean()


def reinvent_loss(agent_logp: torch.Tensor, prior_logp, rewards, sigma: float) -> torch.Tensor:
    """Squared gap between agent log-likelihood and the augmented prior likelihood."""
    if prior_logp is None:
        raise MissingPriorLogProb("prior log-probabilities are required")
    target = _as_tensor(prior_logp) + sigma * _as_tensor(rewards)
    return ((target - agent_logp) ** 2).mean()


def ahc_filter(rewards: Sequence[float], rho: float) -> list[int]:
    """Indices of the ceil(rho*B) best rewards, returned in batch order.

    A stable sort keeps the earliest index among equal rewards.
    """
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    r = np.asarray(rewards, dtype=np.float64)
    keep = math.ceil(rho * len(r) - 1e-12)
    order = np.argsort(-r, kind="stable")[:keep]
    return sorted(int(i) for i in order)


def likelihood_penalty(agent_logp: torch.Tensor, kappa: float) -> torch.Tensor:
    """mean of -kappa / log P_agent; grows as sequences become likelier."""
    if kappa == 0:
        return (agent_logp * 0).sum()
    if bool((agent_logp.detach() >= 0).any()):
        raise DegenerateCertainSequence("a sequence has log-probability 0")
    return (-kappa / agent_logp).mean()


def policy_gradient_term(step_logp: torch.Tensor, advantages, mask: torch.Tensor) -> torch.Tensor:
    """-mean over actionable steps of A_t * log pi(a_t | s_t)."""
    return -_masked_mean(_as_tensor(advantages) * step_logp, mask)


def value_term(values: torch.Tensor, returns, mask: torch.Tensor) -> torch.Tensor:
    """mean over actionable steps of (R - V)^2."""
    return _masked_mean((_as_tensor(returns) - values) ** 2, mask)


def a2c_loss(
    step_logp: torch.Tensor,
    values: torch.Tensor,
    returns,
    mask: torch.Tensor,
    entropies: torch.Tensor | None = None,
    value_coef: float = 0.5,
    entropy_coef: float = 0.0,
) -> torch.Tensor:
    """Advantage actor-critic with terminal reward and no discounting.

    ``values`` should come from the critic applied to detached hidden states so
    the value term only trains the critic; the advantage is detached in the
    policy term.
    """
    if step_logp.shape != values.shape or step_logp.shape != mask.shape:
        raise ShapeMismatch("step tensors must share one shape")
    ret = _as_tensor(returns)
    adv = ret - values.detach()
    loss = policy_gradient_term(step_logp, adv, mask) + value_coef * value_term(values, ret, mask)
    if entropies is not None and entropy_coef:
        loss = loss - entropy_coef * _masked_mean(entropies, mask)
    return loss


def ppo_surrogate(step_logp: torch.Tensor, old_step_logp, advantages, mask: torch.Tensor, eps: float) -> torch.Tensor:
    """-mean over steps of min(r A, clip(r, 1-eps, 1+eps) A), r = exp(new - old).

    The ratio is clamped to [1e-4, 1e4] before use, which only matters for
    replayed data far from the current policy.
    """
    ratio = torch.exp(step_logp - _as_tensor(old_step_logp)).clamp(RATIO_MIN, RATIO_MAX)
    adv = _as_tensor(advantages)
    unclipped = ratio * adv
    clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv
    return -_masked_mean(torch.minimum(unclipped, clipped), mask)


def ppo_loss(
    step_logp: torch.Tensor,
    old_step_logp,
    advantages,
    values: torch.Tensor | None,
    returns,
    mask: torch.Tensor,
    eps: float,
    entropies: torch.Tensor | None = None,
    value_coef: float = 0.5,
    entropy_coef: float = 0.0,
) -> torch.Tensor:
    loss = ppo_surrogate(step_logp, old_step_logp, advantages, mask, eps)
    if values is not None and value_coef:
        loss = loss + value_coef * value_term(values, returns, mask)
    if entropies is not None and entropy_coef:
        loss = loss - entropy_coef * _masked_mean(entropies, mask)
    return loss


class _CategoricalKL(torch.autograd.Function):
    # Explicit backward p * (log p - log q - KL): exactly zero when the two
    # distributions coincide, which autograd through log_softmax is not.

    @staticmethod
    def forward(ctx, agent_logits, prior_logits):
        lp = torch.log_softmax(agent_logits, dim=-1)
        lq = torch.log_softmax(prior_logits, dim=-1)
        p = lp.exp()
        diff = torch.where(p > 0, lp - lq, torch.zeros_like(lp))
        kl = (p * diff).sum(-1)
        ctx.save_for_backward(p, diff, kl)
        return kl

    @staticmethod
    def backward(ctx, grad):
        p, diff, kl = ctx.saved_tensors
        return grad.unsqueeze(-1) * p * (diff - kl.unsqueeze(-1)), None


def kl_to_prior(agent_logits: torch.Tensor, prior_logits: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean over actionable steps of KL(agent || prior) in nats."""
    if agent_logits.shape != prior_logits.shape or agent_logits.shape[:-1] != mask.shape:
        raise ShapeMismatch("agent logits, prior logits and mask disagree in shape")
    kl = _CategoricalKL.apply(agent_logits, prior_logits.detach())
    return _masked_mean(kl, mask)
