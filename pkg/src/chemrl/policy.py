"""Embedding + GRU + projection policy (with optional critic head).

Parameters live in a flat, ordered name -> tensor mapping so they can be
written to the checkpoint format verbatim. Tensors are float64; reverse-mode
gradients come from torch autograd over the explicit GRU recurrence below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
import torch

DTYPE = torch.float64
MASKED_LOGIT = -1e30
GATES = ("z", "r", "n")


class ShapeMismatch(ValueError):
    pass


class CriticAbsent(RuntimeError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    vocab_size: int
    embedding_dim: int = 64
    hidden_dim: int = 128
    num_layers: int = 1
    critic: bool = False
    # ids that are never legal actions (GO, PAD)
    masked_ids: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "embedding_dim": self.embedding_dim,
            "hidden_dim": self.hidden_dim,
            "num_layers": self.num_layers,
            "critic": self.critic,
            "masked_ids": list(self.masked_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        return cls(
            vocab_size=int(d["vocab_size"]),
            embedding_dim=int(d["embedding_dim"]),
            hidden_dim=int(d["hidden_dim"]),
            num_layers=int(d["num_layers"]),
            critic=bool(d["critic"]),
            masked_ids=tuple(int(x) for x in d.get("masked_ids", ())),
        )

    @property
    def num_actions(self) -> int:
        return self.vocab_size - len(self.masked_ids)


def tensor_shapes(config: PolicyConfig) -> dict[str, tuple[int, ...]]:
    """Ordered manifest of parameter names and shapes."""
    V, E, H = config.vocab_size, config.embedding_dim, config.hidden_dim
    shapes: dict[str, tuple[int, ...]] = {"embedding": (V, E)}
    for layer in range(config.num_layers):
        width = E if layer == 0 else H
        for g in GATES:
            shapes[f"gru{layer}.W_{g}"] = (H, width)
        for g in GATES:
            shapes[f"gru{layer}.U_{g}"] = (H, H)
        for g in GATES:
            shapes[f"gru{layer}.b_{g}"] = (H,)
    shapes["proj.W"] = (V, H)
    shapes["proj.b"] = (V,)
    if config.critic:
        shapes["critic.W"] = (1, H)
        shapes["critic.b"] = (1,)
    return shapes


@dataclass
class PolicyParams:
    config: PolicyConfig
    tensors: dict[str, torch.Tensor]
    _mask: torch.Tensor = field(init=False, repr=False)

    def __post_init__(self):
        expected = tensor_shapes(self.config)
        if list(self.tensors) != list(expected):
            raise ShapeMismatch(f"tensor names {list(self.tensors)} != {list(expected)}")
        for name, shape in expected.items():
            if tuple(self.tensors[name].shape) != shape:
                raise ShapeMismatch(f"{name}: {tuple(self.tensors[name].shape)} != {shape}")
        mask = torch.zeros(self.config.vocab_size, dtype=torch.bool)
        if self.config.masked_ids:
            mask[list(self.config.masked_ids)] = True
        self._mask = mask

    def __getitem__(self, name: str) -> torch.Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    @property
    def action_mask(self) -> torch.Tensor:
        return self._mask

    def clone(self, requires_grad: bool | None = None) -> "PolicyParams":
        out = {}
        for k, v in self.tensors.items():
            t = v.detach().clone()
            t.requires_grad_(v.requires_grad if requires_grad is None else requires_grad)
            out[k] = t
        return PolicyParams(self.config, out)

    def requires_grad_(self, flag: bool = True) -> "PolicyParams":
        for v in self.tensors.values():
            v.requires_grad_(flag)
        return self

    def zero_grad(self) -> None:
        for v in self.tensors.values():
            v.grad = None

    def with_critic(self) -> "PolicyParams":
        """Copy with a zero-initialized critic head added (if absent)."""
        if self.config.critic:
            return self.clone()
        cfg = PolicyConfig(**{**self.config.__dict__, "critic": True})
        tensors = {k: v.detach().clone() for k, v in self.tensors.items()}
        H = cfg.hidden_dim
        tensors["critic.W"] = torch.zeros((1, H), dtype=DTYPE)
        tensors["critic.b"] = torch.zeros((1,), dtype=DTYPE)
        out = PolicyParams(cfg, tensors)
        return out.requires_grad_(any(v.requires_grad for v in self.tensors.values()))

    def numpy(self) -> dict[str, np.ndarray]:
        return {k: v.detach().cpu().numpy().copy() for k, v in self.tensors.items()}


def init_params(config: PolicyConfig, rng: np.random.Generator, scale: float | None = None) -> PolicyParams:
    """Uniform(-s, s) initialization with s = 1/sqrt(H); biases zero."""
    s = scale if scale is not None else 1.0 / math.sqrt(config.hidden_dim)
    tensors = {}
    for name, shape in tensor_shapes(config).items():
        if name.startswith("critic"):
            arr = np.zeros(shape)
        elif name.rsplit(".", 1)[-1].startswith("b"):
            arr = np.zeros(shape)
        else:
            arr = rng.uniform(-s, s, size=shape)
        tensors[name] = torch.tensor(arr, dtype=DTYPE)
    return PolicyParams(config, tensors).requires_grad_(True)


def zero_params(config: PolicyConfig) -> PolicyParams:
    tensors = {n: torch.zeros(s, dtype=DTYPE) for n, s in tensor_shapes(config).items()}
    return PolicyParams(config, tensors).requires_grad_(True)


# ------------------------------------------------------------------ forward

def _layer_weights(params: PolicyParams, layer: int):
    p = f"gru{layer}."
    W = torch.cat([params[p + "W_" + g] for g in GATES], 0)
    U = torch.cat([params[p + "U_" + g] for g in GATES], 0)
    b = torch.cat([params[p + "b_" + g] for g in GATES], 0)
    return W, U, b


def _gru_cell(xw: torch.Tensor, h: torch.Tensor, U: torch.Tensor, H: int) -> torch.Tensor:
    # xw already holds x @ W^T + b for the three gates
    hu = h @ U.T
    z = torch.sigmoid(xw[:, :H] + hu[:, :H])
    r = torch.sigmoid(xw[:, H:2 * H] + hu[:, H:2 * H])
    n = torch.tanh(xw[:, 2 * H:] + r * hu[:, 2 * H:])
    return (1.0 - z) * n + z * h


def initial_state(params: PolicyParams, batch: int) -> list[torch.Tensor]:
    H = params.config.hidden_dim
    return [torch.zeros((batch, H), dtype=DTYPE) for _ in range(params.config.num_layers)]


def _masked(params: PolicyParams, logits: torch.Tensor) -> torch.Tensor:
    if not params.config.masked_ids:
        return logits
    return logits.masked_fill(params.action_mask, MASKED_LOGIT)


def forward(
    params: PolicyParams,
    ids: torch.Tensor,
    mask: torch.Tensor | None = None,
    state: list[torch.Tensor] | None = None,
) -> tuple[torch.Tensor, torch.Tensor, list[torch.Tensor]]:
    """Run the network over ``ids`` [B, T].

    Returns ``(logits [B, T, V], top-layer hidden states [B, T, H], final
    per-layer state)``. ``mask`` is accepted for interface symmetry with the
    losses; the recurrence is causal so masked positions need no special
    handling.
    """
    if ids.dim() != 2:
        raise ShapeMismatch(f"ids must be [B, T], got {tuple(ids.shape)}")
    if mask is not None and mask.shape != ids.shape:
        raise ShapeMismatch(f"mask {tuple(mask.shape)} != ids {tuple(ids.shape)}")
    if ids.numel() and (int(ids.max()) >= params.config.vocab_size or int(ids.min()) < 0):
        raise ShapeMismatch("token id out of range")
    B, T = ids.shape
    H = params.config.hidden_dim
    h = list(state) if state is not None else initial_state(params, B)
    x = params["embedding"][ids]  # [B, T, E]
    for layer in range(params.config.num_layers):
        W, U, b = _layer_weights(params, layer)
        xw = x @ W.T + b  # [B, T, 3H]
        outs = []
        hl = h[layer]
        for t in range(T):
            hl = _gru_cell(xw[:, t], hl, U, H)
            outs.append(hl)
        h[layer] = hl
        x = torch.stack(outs, 1) if outs else torch.zeros((B, 0, H), dtype=DTYPE)
    logits = x @ params["proj.W"].T + params["proj.b"]
    return _masked(params, logits), x, h


def step(params: PolicyParams, ids: torch.Tensor, state: list[torch.Tensor]) -> tuple[torch.Tensor, list[torch.Tensor]]:
    """One recurrence step for ``ids`` [B]; returns masked logits [B, V]."""
    logits, _, new_state = forward(params, ids.view(-1, 1), state=state)
    return logits[:, 0], new_state


def log_softmax(logits: torch.Tensor) -> torch.Tensor:
    return torch.log_softmax(logits, dim=-1)


def entropy(logits: torch.Tensor) -> torch.Tensor:
    logp = log_softmax(logits)
    return -(logp.exp() * logp).sum(-1)


def value_estimate(params: PolicyParams, hidden: torch.Tensor) -> torch.Tensor:
    """Per-step state values [B, T] from hidden states [B, T, H]."""
    if not params.config.critic:
        raise CriticAbsent("policy has no critic head")
    return (hidden @ params["critic.W"].T + params["critic.b"])[..., 0]


# -------------------------------------------------------------- gradients

def global_norm(grads: dict[str, torch.Tensor]) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads.values()))


def backward(params: PolicyParams, loss: torch.Tensor, clip: float | None = None) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of scalar ``loss`` w.r.t. every parameter tensor.

    Tensors the loss does not depend on get exact zeros. With ``clip`` the
    gradients are rescaled so their global norm is at most ``clip``.
    """
    if loss.dim() != 0:
        raise ShapeMismatch("loss must be a scalar")
    if not torch.isfinite(loss):
        raise NonFiniteLoss(f"loss is {float(loss)}")
    names = [n for n, t in params.items() if t.requires_grad]
    grads_list = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
    grads = {}
    for name, tensor in params.items():
        g = None
        if name in names:
            g = grads_list[names.index(name)]
        grads[name] = torch.zeros_like(tensor) if g is None else g.detach()
    if clip is not None and clip > 0:
        norm = global_norm(grads)
        if not math.isfinite(norm):
            raise NonFiniteLoss("non-finite gradient norm")
        if norm > clip:
            scale = clip / (norm + 1e-12)
            grads = {k: g * scale for k, g in grads.items()}
    return grads


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)


def adam_step(params: PolicyParams, grads: dict[str, torch.Tensor], state: AdamState) -> tuple[PolicyParams, AdamState]:
    """In-place Adam update with bias correction."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeMismatch(f"gradient shape for {name}")
            m = state.m.get(name)
            if m is None:
                m = torch.zeros_like(p)
                state.v[name] = torch.zeros_like(p)
            v = state.v[name]
            m = state.beta1 * m + (1.0 - state.beta1) * g
            v = state.beta2 * v + (1.0 - state.beta2) * g * g
            state.m[name], state.v[name] = m, v
            p -= state.lr * (m / c1) / (torch.sqrt(v / c2) + state.eps)
    return params, state
