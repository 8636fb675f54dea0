"""Molecule parsing, descriptors and fingerprints."""

from .descriptors import (
    UnknownAtomTypeWarning,
    logp_atom_type,
    logp_estimate,
    logp_type_counts,
    molecular_weight,
    rotatable_bond_count,
)
from .fingerprints import (
    Fingerprint,
    WidthMismatch,
    canonical_key,
    fingerprint,
    has_substructure,
    novel_bits_fraction,
    tanimoto,
)
from .smiles import Atom, Bond, MolGraph, ParseError, is_valid, parse, parse_or_none, permute, to_smiles

__all__ = [
    "Atom", "Bond", "Fingerprint", "MolGraph", "ParseError", "UnknownAtomTypeWarning",
    "WidthMismatch", "canonical_key", "fingerprint", "has_substructure", "is_valid",
    "logp_atom_type", "logp_estimate", "logp_type_counts", "molecular_weight",
    "novel_bits_fraction", "parse", "parse_or_none", "permute", "rotatable_bond_count",
    "tanimoto", "to_smiles",
]
