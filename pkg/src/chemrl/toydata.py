"""Deterministic generator of small drug-like SMILES for desk-scale pretraining.

Molecules are assembled from ring templates, substituents and linkers, then
kept only if they parse. ``data/toy_corpus.smi`` is ``generate_corpus(1000, 0)``.
"""

from __future__ import annotations

import numpy as np

from .chem import parse_or_none

# ring atoms; True marks positions that may carry a substituent
RINGS = {
    "benzene": [("c", True)] * 6,
    "pyridine": [("c", True), ("c", True), ("n", False), ("c", True), ("c", True), ("c", True)],
    "pyrimidine": [("c", True), ("n", False), ("c", True), ("n", False), ("c", True), ("c", True)],
    "thiophene": [("c", True), ("c", True), ("s", False), ("c", True), ("c", True)],
    "furan": [("c", True), ("c", True), ("o", False), ("c", True), ("c", True)],
    "cyclohexane": [("C", True)] * 6,
    "cyclopentane": [("C", True)] * 5,
    "piperidine": [("C", True), ("C", True), ("N", True), ("C", True), ("C", True), ("C", True)],
    "morpholine": [("C", True), ("C", True), ("O", False), ("C", True), ("C", True), ("N", True)],
}
RING_WEIGHTS = {"benzene": 5, "pyridine": 2, "pyrimidine": 1, "thiophene": 1, "furan": 1,
                "cyclohexane": 2, "cyclopentane": 1, "piperidine": 2, "morpholine": 1}

# attached through their first atom
RIGHT_GROUPS = ["C", "CC", "O", "OC", "N", "F", "Cl", "Br", "C(=O)O", "C(=O)N", "C#N",
                "CO", "C(C)C", "OCC", "NC(C)=O", "C(F)(F)F", "CN", "CCO", "N(C)C",
                "S(C)(=O)=O", "CCC", "C(=O)OC"]
# attached through their last atom
LEFT_GROUPS = ["C", "CC", "O", "CO", "N", "F", "Cl", "Br", "N#C", "CC(C)", "O=C(O)",
               "NC(=O)", "CC(=O)N", "FC(F)(F)", "CCN(C)", "CCO", "COC(=O)", "CS(=O)(=O)"]
LINKERS = ["", "C", "CC", "N", "O", "C(=O)N", "NC(=O)", "CO", "OC", "CNC(=O)", "S(=O)(=O)N"]
CHAIN_ATOMS = ["C", "C", "C", "C", "N", "O"]


def _ring(rng: np.random.Generator, digit: int, max_subs: int, tail: str = "") -> str:
    names = list(RING_WEIGHTS)
    weights = np.array([RING_WEIGHTS[n] for n in names], dtype=float)
    name = names[rng.choice(len(names), p=weights / weights.sum())]
    atoms = RINGS[name]
    n = len(atoms)
    slots = [i for i in range(1, n - 1) if atoms[i][1]]
    k = int(rng.integers(0, min(max_subs, len(slots)) + 1))
    chosen = set(rng.choice(slots, size=k, replace=False).tolist()) if k else set()
    out = [atoms[0][0] + str(digit)]
    for i in range(1, n - 1):
        sym = atoms[i][0]
        if i in chosen:
            sym += "(" + RIGHT_GROUPS[rng.integers(len(RIGHT_GROUPS))] + ")"
        out.append(sym)
    out.append(atoms[-1][0] + str(digit) + tail)
    return "".join(out)


def _chain(rng: np.random.Generator) -> str:
    length = int(rng.integers(3, 9))
    out = []
    prev = None
    for i in range(length):
        sym = CHAIN_ATOMS[rng.integers(len(CHAIN_ATOMS))]
        if prev in ("N", "O") and sym in ("N", "O"):
            sym = "C"
        piece = sym
        if sym == "C" and 0 < i < length - 1:
            roll = rng.random()
            if roll < 0.2:
                piece += "(=O)"
            elif roll < 0.45:
                piece += "(" + RIGHT_GROUPS[rng.integers(len(RIGHT_GROUPS))] + ")"
        elif sym == "N" and 0 < i < length - 1 and rng.random() < 0.3:
            piece += "(C)"
        out.append(piece)
        prev = sym
    return "".join(out)


def generate_one(rng: np.random.Generator) -> str:
    roll = rng.random()
    if roll < 0.5:
        prefix = LEFT_GROUPS[rng.integers(len(LEFT_GROUPS))] if rng.random() < 0.6 else ""
        tail = RIGHT_GROUPS[rng.integers(len(RIGHT_GROUPS))] if rng.random() < 0.3 else ""
        return prefix + _ring(rng, 1, 3, tail)
    if roll < 0.8:
        prefix = LEFT_GROUPS[rng.integers(len(LEFT_GROUPS))] if rng.random() < 0.4 else ""
        linker = LINKERS[rng.integers(len(LINKERS))]
        second = _ring(rng, 2, 2)
        return prefix + _ring(rng, 1, 2, linker + second)
    return _chain(rng)


def generate_corpus(n: int = 1000, seed: int = 0, max_chars: int = 80) -> list[str]:
    """``n`` distinct, parseable SMILES strings in generation order."""
    rng = np.random.default_rng(seed)
    out: list[str] = []
    seen: set[str] = set()
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 200 * n:
            raise RuntimeError("could not generate enough distinct molecules")
        smi = generate_one(rng)
        if smi in seen or len(smi) > max_chars or parse_or_none(smi) is None:
            continue
        seen.add(smi)
        out.append(smi)
    return out
