"""Scoring tasks: string in, score in [0, 1] out.

Unparseable strings score 0 for every kind. Batch scoring keeps request order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..chem import MolGraph, fingerprint, molecular_weight, parse, parse_or_none, tanimoto
from ..vocab import TokenizeError, tokenize
from .diversity import DiversityMemory, DiversitySettings
from .external import DEFAULT_TIMEOUT, ExternalScorer

KINDS = ("SimilarityToTarget", "MolWeightTarget", "ValidityOnly", "TokenPattern", "Composite", "ExternalProcess")


class TaskError(ValueError):
    pass


def clamp01(x: float) -> float:
    if math.isnan(x):
        return 0.0
    return min(max(float(x), 0.0), 1.0)


class Oracle:
    """Scores parsed molecules; subclasses override ``score_one`` or ``score_many``."""

    def score_one(self, mol: MolGraph, smiles: str) -> float:
        raise NotImplementedError

    def score_many(self, mols: Sequence[MolGraph], smiles: Sequence[str]) -> list[float]:
        return [self.score_one(m, s) for m, s in zip(mols, smiles)]

    def close(self) -> None:
        pass


class SimilarityToTarget(Oracle):
    def __init__(self, target: str, radius: int = 2, width: int = 2048):
        self.target = target
        self.radius, self.width = radius, width
        self._fp = fingerprint(parse(target), radius, width)

    def score_one(self, mol, smiles):
        return tanimoto(fingerprint(mol, self.radius, self.width), self._fp)


class MolWeightTarget(Oracle):
    """Gaussian kernel on molecular weight, peak 1 at ``target``."""

    def __init__(self, target: float, width: float = 50.0):
        if width <= 0:
            raise TaskError("MolWeightTarget width must be > 0")
        self.target, self.width = float(target), float(width)

    def score_one(self, mol, smiles):
        d = molecular_weight(mol) - self.target
        return math.exp(-d * d / (2.0 * self.width * self.width))


class ValidityOnly(Oracle):
    def score_one(self, mol, smiles):
        return 1.0


class TokenPattern(Oracle):
    """Longest contiguous run of pattern tokens found in the candidate, over the pattern length.

    1.0 when the whole token pattern occurs in the candidate's token string.
    """

    def __init__(self, pattern: str):
        try:
            self.tokens = tokenize(pattern)
        except TokenizeError as exc:
            raise TaskError(f"TokenPattern pattern does not tokenize: {exc}") from None
        if not self.tokens:
            raise TaskError("TokenPattern pattern is empty")

    def score_one(self, mol, smiles):
        cand = tokenize(smiles)
        pat = self.tokens
        best = 0
        # longest common substring over tokens, O(len(cand) * len(pat))
        prev = [0] * (len(pat) + 1)
        for c in cand:
            cur = [0] * (len(pat) + 1)
            for j, p in enumerate(pat, 1):
                if c == p:
                    cur[j] = prev[j - 1] + 1
                    best = max(best, cur[j])
            prev = cur
        return best / len(pat)


class Composite(Oracle):
    def __init__(self, parts: Sequence[Oracle], weights: Sequence[float] | None = None, mean: str = "arithmetic"):
        if not parts:
            raise TaskError("Composite needs at least one component")
        w = np.ones(len(parts)) if weights is None else np.asarray(weights, dtype=float)
        if len(w) != len(parts) or (w < 0).any() or w.sum() <= 0:
            raise TaskError("Composite weights must be non-negative, one per component, not all zero")
        if mean not in ("arithmetic", "geometric"):
            raise TaskError("Composite mean must be 'arithmetic' or 'geometric'")
        self.parts, self.weights, self.mean = list(parts), w / w.sum(), mean

    def score_many(self, mols, smiles):
        cols = np.array([[clamp01(v) for v in p.score_many(mols, smiles)] for p in self.parts])
        if cols.size == 0:
            return []
        if self.mean == "arithmetic":
            return list(self.weights @ cols)
        with np.errstate(divide="ignore"):
            logs = np.log(cols)
        out = np.exp(np.where(self.weights[:, None] > 0, self.weights[:, None] * logs, 0.0).sum(0))
        return list(out)

    def close(self):
        for p in self.parts:
            p.close()


class ExternalProcess(Oracle):
    def __init__(self, command: Sequence[str], timeout: float = DEFAULT_TIMEOUT):
        self.scorer = ExternalScorer(command, timeout)

    def score_many(self, mols, smiles):
        return self.scorer.score(list(smiles))

    def close(self):
        self.scorer.close()


@dataclass
class ScoringTask:
    name: str
    oracle: Oracle
    kind: str = ""
    params: dict = field(default_factory=dict)
    diversity: DiversitySettings = field(default_factory=DiversitySettings)
    budget: int = 10000

    def score(self, smiles: str) -> float:
        return self.score_batch([smiles])[0]

    def score_batch(self, smiles: Sequence[str]) -> list[float]:
        out = [0.0] * len(smiles)
        mols, texts, where = [], [], []
        for i, s in enumerate(smiles):
            mol = parse_or_none(s)
            if mol is not None:
                mols.append(mol)
                texts.append(s)
                where.append(i)
        if mols:
            for i, v in zip(where, self.oracle.score_many(mols, texts)):
                out[i] = clamp01(v)
        return out

    __call__ = score_batch

    def new_memory(self) -> DiversityMemory | None:
        return DiversityMemory.from_settings(self.diversity) if self.diversity.enabled else None

    def close(self) -> None:
        self.oracle.close()


def score(task: ScoringTask, smiles: str) -> float:
    return task.score(smiles)


def apply_diversity_filter(memory: DiversityMemory, smiles: str, raw_score: float) -> float:
    return memory.apply(smiles, raw_score)


def make_oracle(kind: str, params: dict, resolve=None) -> Oracle:
    """Build an oracle from string-valued parameters.

    ``resolve(name)`` returns the oracle of another task; Composite uses it for
    its ``components``.
    """
    try:
        if kind == "SimilarityToTarget":
            return SimilarityToTarget(params["target"], int(params.get("radius", 2)), int(params.get("width", 2048)))
        if kind == "MolWeightTarget":
            return MolWeightTarget(float(params["target"]), float(params.get("width", 50.0)))
        if kind == "ValidityOnly":
            return ValidityOnly()
        if kind == "TokenPattern":
            return TokenPattern(params["pattern"])
        if kind == "Composite":
            names = _split(params["components"])
            if resolve is None:
                raise TaskError("Composite components cannot be resolved here")
            weights = [float(w) for w in _split(params["weights"])] if "weights" in params else None
            return Composite([resolve(n) for n in names], weights, params.get("mean", "arithmetic"))
        if kind == "ExternalProcess":
            cmd = params["command"]
            return ExternalProcess(cmd.split() if isinstance(cmd, str) else list(cmd),
                                   float(params.get("timeout", DEFAULT_TIMEOUT)))
    except KeyError as exc:
        raise TaskError(f"{kind} needs parameter {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, TaskError):
            raise
        raise TaskError(f"{kind}: {exc}") from None
    raise TaskError(f"unknown oracle kind {kind!r}; choose from {', '.join(KINDS)}")


def _split(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        return [str(t) for t in text]
    return [t.strip() for t in str(text).split(",") if t.strip()]
