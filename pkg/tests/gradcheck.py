"""Central finite differences against autograd, coordinate by coordinate."""

import numpy as np
import torch

from chemrl import policy as P

STEP = 1e-5
# Central differences in float64 carry roundoff of about eps * |loss| / STEP
# (~1e-11). Denominators are floored well above that so near-zero gradient
# coordinates are judged on an absolute scale instead of amplifying noise.
FLOOR = 1e-4


def max_relative_error(params: P.PolicyParams, loss_fn, names=None, distort: float = 1.0) -> float:
    """Largest |analytic - numeric| / max(|analytic|, |numeric|, FLOOR * max(1, |loss|)).

    ``distort`` scales the analytic gradient, only to confirm the check can fail.
    """
    params.requires_grad_(True)
    loss = loss_fn(params)
    floor = FLOOR * max(1.0, abs(float(loss)))
    grads = P.backward(params, loss)
    worst = 0.0
    with torch.no_grad():
        for name, tensor in params.items():
            if names is not None and name not in names:
                continue
            flat = tensor.view(-1)
            g = grads[name].reshape(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + STEP
                up = float(loss_fn(params))
                flat[i] = orig - STEP
                down = float(loss_fn(params))
                flat[i] = orig
                numeric = (up - down) / (2 * STEP)
                analytic = float(g[i]) * distort
                denom = max(abs(analytic), abs(numeric), floor)
                worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def random_net(rng: np.random.Generator, vocab_size=5, width=None, critic=False, masked=()):
    width = width or int(rng.integers(2, 9))
    cfg = P.PolicyConfig(vocab_size, width, width, 1, critic=critic, masked_ids=tuple(masked))
    params = P.init_params(cfg, rng, scale=0.8)
    with torch.no_grad():
        for name, t in params.items():
            t.copy_(torch.tensor(rng.uniform(-0.8, 0.8, tuple(t.shape))))
    return params
