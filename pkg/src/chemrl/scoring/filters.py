"""Property-threshold chemistry filters.

The basic filter applies fixed drug-likeness thresholds and substructure
alerts. The target filter compares a molecule to descriptor statistics and the
fingerprint bit universe of a reference corpus.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from ..chem import (
    MolGraph,
    fingerprint,
    has_substructure,
    logp_estimate,
    molecular_weight,
    novel_bits_fraction,
    parse,
    parse_or_none,
    rotatable_bond_count,
)
from ..chem.tables import alert_patterns

DEFAULT_ELEMENTS = frozenset({"C", "S", "O", "N", "H", "F", "Cl", "Br"})


class MissingReferenceStats(ValueError):
    pass


@dataclass
class FilterResult:
    passed: bool
    reasons: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.passed


@dataclass
class BasicFilterConfig:
    max_logp: float = 4.5
    max_rotatable: int = 7
    min_weight: float = 150.0
    max_weight: float = 650.0
    allowed_elements: frozenset = DEFAULT_ELEMENTS
    alerts: bool = True


@lru_cache(maxsize=None)
def _compiled_alerts(patterns: tuple[tuple[str, str], ...]) -> tuple[tuple[str, MolGraph], ...]:
    return tuple((name, parse(smi)) for name, smi in patterns)


def matched_alerts(mol: MolGraph) -> list[str]:
    return [name for name, pat in _compiled_alerts(alert_patterns()) if has_substructure(mol, pat)]


def chemistry_filter_basic(mol: MolGraph, config: BasicFilterConfig | None = None) -> FilterResult:
    """All basic conditions at once; ``reasons`` lists every failed clause."""
    cfg = config or BasicFilterConfig()
    reasons = []
    if logp_estimate(mol) > cfg.max_logp:
        reasons.append("logp")
    if rotatable_bond_count(mol) > cfg.max_rotatable:
        reasons.append("rotatable_bonds")
    mw = molecular_weight(mol)
    if not cfg.min_weight <= mw <= cfg.max_weight:
        reasons.append("molecular_weight")
    present = {a.element for a in mol.atoms}
    if any(mol.total_hydrogens(i) for i in range(mol.num_atoms)):
        present.add("H")
    if not present <= set(cfg.allowed_elements):
        reasons.append("atom_set")
    if cfg.alerts:
        reasons.extend(f"alert:{name}" for name in matched_alerts(mol))
    return FilterResult(not reasons, reasons)


@dataclass
class ReferenceStats:
    mw_mean: float
    mw_std: float
    logp_mean: float
    logp_std: float
    bit_universe: frozenset
    size: int
    n_sigma: float = 4.0
    max_novel_fraction: float = 0.10
    radius: int = 2
    width: int = 2048

    def to_dict(self) -> dict:
        return {
            "mw_mean": self.mw_mean, "mw_std": self.mw_std,
            "logp_mean": self.logp_mean, "logp_std": self.logp_std,
            "size": self.size, "n_sigma": self.n_sigma,
            "max_novel_fraction": self.max_novel_fraction,
            "universe_bits": len(self.bit_universe),
        }


def reference_stats(mols: Sequence[MolGraph], radius: int = 2, width: int = 2048, **limits) -> ReferenceStats:
    """Population (ddof=0) statistics and the union of fingerprint bits of ``mols``."""
    if not mols:
        raise MissingReferenceStats("reference corpus is empty")
    mw = np.array([molecular_weight(m) for m in mols])
    lp = np.array([logp_estimate(m) for m in mols])
    bits: set[int] = set()
    for m in mols:
        bits |= fingerprint(m, radius, width).bits
    return ReferenceStats(float(mw.mean()), float(mw.std()), float(lp.mean()), float(lp.std()),
                          frozenset(bits), len(mols), radius=radius, width=width, **limits)


def reference_stats_from_smiles(smiles: Iterable[str], **kw) -> ReferenceStats:
    mols = [m for m in (parse_or_none(s) for s in smiles) if m is not None]
    return reference_stats(mols, **kw)


def _within(x: float, mean: float, std: float, n_sigma: float) -> bool:
    # small slack absorbs rounding in the mean when the spread is zero
    slack = 1e-9 * max(1.0, abs(mean))
    return abs(x - mean) <= n_sigma * std + slack


def chemistry_filter_target(mol: MolGraph, stats: ReferenceStats | None) -> FilterResult:
    if stats is None:
        raise MissingReferenceStats("target filter needs reference statistics")
    reasons = []
    if not _within(molecular_weight(mol), stats.mw_mean, stats.mw_std, stats.n_sigma):
        reasons.append("molecular_weight_distribution")
    if not _within(logp_estimate(mol), stats.logp_mean, stats.logp_std, stats.n_sigma):
        reasons.append("logp_distribution")
    fp = fingerprint(mol, stats.radius, stats.width)
    if novel_bits_fraction(fp, stats.bit_universe) > stats.max_novel_fraction:
        reasons.append("novel_bits")
    return FilterResult(not reasons, reasons)


def passes_both(mol: MolGraph, stats: ReferenceStats, basic: BasicFilterConfig | None = None) -> bool:
    return bool(chemistry_filter_basic(mol, basic)) and bool(chemistry_filter_target(mol, stats))
