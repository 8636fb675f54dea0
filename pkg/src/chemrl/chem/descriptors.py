"""Molecular descriptors: weight, rotatable bonds, atom-contribution logP."""

from __future__ import annotations

import warnings
from collections import Counter
from typing import Mapping

from .smiles import MolGraph
from .tables import atomic_weights, logp_table

HYDROGEN_WEIGHT = 1.008


class UnknownAtomTypeWarning(UserWarning):
    """An atom matched no row of the logP contribution table (counted as 0)."""


def molecular_weight(mol: MolGraph, weights: Mapping[str, float] | None = None) -> float:
    weights = atomic_weights() if weights is None else weights
    h = weights.get("H", HYDROGEN_WEIGHT)
    return sum(weights[a.element] + a.hcount * h for a in mol.atoms)


def rotatable_bond_count(mol: MolGraph) -> int:
    """Acyclic, non-aromatic single bonds between heavy atoms of heavy degree >= 2."""
    count = 0
    for bond, in_ring in zip(mol.bonds, mol.ring_bond_flags):
        if in_ring or bond.aromatic or bond.order != 1:
            continue
        a, b = bond.a, bond.b
        if mol.atoms[a].element == "H" or mol.atoms[b].element == "H":
            continue
        if mol.heavy_degree(a) >= 2 and mol.heavy_degree(b) >= 2:
            count += 1
    return count


def _multiple_bond_partners(mol: MolGraph, i: int) -> list[str]:
    out = []
    for nb, bi in mol.neighbors[i]:
        bond = mol.bonds[bi]
        if not bond.aromatic and bond.order >= 2:
            out.append(mol.atoms[nb].element)
    return out


def logp_atom_type(mol: MolGraph, i: int) -> str | None:
    """Contribution-table row name for atom ``i``; None if no row applies."""
    atom = mol.atoms[i]
    el = atom.element
    multi = _multiple_bond_partners(mol, i)
    if el == "C":
        if atom.aromatic:
            return "C_aromatic"
        if any(p in ("O", "N", "S") for p in multi):
            return "C_carbonyl"
        if multi:
            return "C_unsaturated"
        return "C_aliphatic"
    if el == "N":
        if atom.charge:
            return "N_charged"
        if atom.aromatic:
            return "N_aromatic"
        return "N_unsaturated" if multi else "N_amine"
    if el == "O":
        if atom.charge:
            return "O_charged"
        if atom.aromatic:
            return "O_aromatic"
        if multi:
            return "O_carbonyl"
        hs = mol.total_hydrogens(i)
        if hs == 2 and mol.heavy_degree(i) == 0:
            return "O_water"
        return "O_hydroxyl" if hs else "O_ether"
    if el == "S":
        if atom.aromatic:
            return "S_aromatic"
        if "O" in multi:
            return "S_oxidized"
        return "S_aliphatic"
    if el in ("F", "Cl", "Br", "I", "P", "B"):
        return el
    if el == "H":
        nbs = [mol.atoms[j].element for j, _ in mol.neighbors[i]]
        if nbs == ["C"]:
            return "H_carbon"  # folded into the carbon entry
        if nbs and nbs[0] != "H":
            return "H_polar"
        return None
    return None


def logp_type_counts(mol: MolGraph) -> tuple[Counter, list[int]]:
    """Counts of table rows used by ``mol`` and the atoms that matched none."""
    counts: Counter = Counter()
    unmatched = []
    for i, atom in enumerate(mol.atoms):
        kind = logp_atom_type(mol, i)
        if kind is None:
            unmatched.append(i)
            continue
        if kind != "H_carbon":
            counts[kind] += 1
        if atom.element not in ("C", "H") and atom.hcount:
            counts["H_polar"] += atom.hcount
    return counts, unmatched


def logp_estimate(mol: MolGraph, table: Mapping[str, float] | None = None) -> float:
    """Sum of per-atom contributions from ``table`` (the shipped CSV by default).

    Rows absent from ``table`` contribute 0 and raise an
    :class:`UnknownAtomTypeWarning`.
    """
    table = logp_table() if table is None else table
    counts, unmatched = logp_type_counts(mol)
    total = 0.0
    missing = list(unmatched)
    for kind in sorted(counts):
        if kind in table:
            total += counts[kind] * table[kind]
        else:
            missing.append(kind)
    if missing:
        warnings.warn(f"no logP contribution for {missing}", UnknownAtomTypeWarning, stacklevel=2)
    return total
