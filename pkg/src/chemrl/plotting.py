"""Report figures rendered to PNG files with the non-interactive backend."""

from __future__ import annotations

import io
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .checkpoint import atomic_write_bytes  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=110, metadata=_META)
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def plot_training_curve(log: Sequence[Mapping], path) -> None:
    """Train/validation NLL per epoch with sampled validity on a second axis."""
    epochs = [r["epoch"] for r in log]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [r["train_nll"] for r in log], marker="o", label="train NLL")
    ax.plot(epochs, [r["valid_nll"] for r in log], marker="s", label="validation NLL")
    ax.set_xlabel("epoch")
    ax.set_ylabel("NLL per token (nats)")
    ax2 = ax.twinx()
    ax2.plot(epochs, [r["sampled_validity"] for r in log], color="tab:green", ls="--", label="sampled validity")
    ax2.set_ylim(0, 1.05)
    ax2.set_ylabel("valid fraction")
    lines = ax.get_lines() + ax2.get_lines()
    ax.legend(lines, [ln.get_label() for ln in lines], loc="center right")
    fig.tight_layout()
    _save(fig, path)


def plot_topk_curves(curves: Mapping[str, tuple[Sequence[int], Sequence[float]]], path, k: int = 10,
                     title: str = "") -> None:
    """Running top-k average against oracle calls, one line per run."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (calls, values) in curves.items():
        ax.step(calls, values, where="post", label=label)
    ax.set_xlabel("oracle calls")
    ax.set_ylabel(f"top-{k} average score")
    ax.set_ylim(0, 1.02)
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)


def plot_suite(cells: Mapping[str, Mapping[str, tuple[float | None, float | None]]], path, metric: str) -> None:
    """Grouped bars: ``cells[task][algorithm] = (mean, std)``; absent cells are left empty."""
    tasks = list(cells)
    algos = sorted({a for row in cells.values() for a in row})
    fig, ax = plt.subplots(figsize=(max(5, 1.6 * len(tasks) + 2), 4))
    width = 0.8 / max(len(algos), 1)
    x = np.arange(len(tasks))
    for j, algo in enumerate(algos):
        means = [cells[t].get(algo, (None, None))[0] for t in tasks]
        stds = [cells[t].get(algo, (None, None))[1] for t in tasks]
        m = np.array([np.nan if v is None else v for v in means])
        s = np.array([0.0 if v is None else v for v in stds])
        ax.bar(x + (j - (len(algos) - 1) / 2) * width, m, width, yerr=s, capsize=3, label=algo)
    ax.set_xticks(x, tasks, rotation=20, ha="right")
    ax.set_ylabel(metric)
    ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)
