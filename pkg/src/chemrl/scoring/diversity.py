"""Scoring-time memory that zeroes rewards of over-visited chemotypes."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..chem import Fingerprint, fingerprint, parse_or_none, tanimoto


@dataclass
class DiversitySettings:
    enabled: bool = False
    threshold: float = 0.35
    occupancy: int = 25
    min_score: float = 0.5


@dataclass
class DiversityMemory:
    """Buckets of (representative fingerprint, hit count).

    A candidate scoring above ``min_score`` joins the first bucket whose
    representative is more than ``threshold`` similar; once that bucket holds
    ``occupancy`` members, further members score 0. Dissimilar candidates open
    a new bucket. Low scorers and unparseable strings pass through untouched.
    """

    threshold: float = 0.35
    occupancy: int = 25
    min_score: float = 0.5
    radius: int = 2
    width: int = 2048
    buckets: list[list] = field(default_factory=list)

    @classmethod
    def from_settings(cls, s: DiversitySettings) -> "DiversityMemory":
        return cls(threshold=s.threshold, occupancy=s.occupancy, min_score=s.min_score)

    def apply(self, smiles: str, score: float) -> float:
        if score <= self.min_score:
            return score
        mol = parse_or_none(smiles)
        if mol is None:
            return score
        fp = fingerprint(mol, self.radius, self.width)
        for bucket in self.buckets:
            rep: Fingerprint = bucket[0]
            if tanimoto(rep, fp) > self.threshold:
                if bucket[1] >= self.occupancy:
                    return 0.0
                bucket[1] += 1
                return score
        self.buckets.append([fp, 1])
        return score
