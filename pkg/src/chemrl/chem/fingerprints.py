"""Atom-environment fingerprints, Tanimoto similarity and canonical keys."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable

from .smiles import Atom, MolGraph, write_dfs

DEFAULT_WIDTH = 2048
DEFAULT_RADIUS = 2


class WidthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Fingerprint:
    bits: frozenset[int]
    width: int = DEFAULT_WIDTH
    radius: int = DEFAULT_RADIUS

    def __post_init__(self):
        if self.width <= 0 or self.width & (self.width - 1):
            raise ValueError(f"width must be a power of two, got {self.width}")
        if any(b < 0 or b >= self.width for b in self.bits):
            raise ValueError("bit index out of range")

    def __len__(self) -> int:
        return len(self.bits)


def _hash(obj) -> int:
    digest = hashlib.blake2b(repr(obj).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


class HeavyView:
    """Heavy-atom graph; explicit hydrogens on heavy atoms fold into H counts."""

    def __init__(self, mol: MolGraph):
        keep = []
        for i, atom in enumerate(mol.atoms):
            if atom.element == "H" and atom.charge == 0 and atom.isotope == 0:
                nbs = mol.neighbors[i]
                if len(nbs) == 1 and mol.atoms[nbs[0][0]].element != "H":
                    continue
            keep.append(i)
        index = {old: new for new, old in enumerate(keep)}
        self.atoms: list[Atom] = [mol.atoms[i] for i in keep]
        self.hcount = [mol.total_hydrogens(i) for i in keep]
        self.adj: list[list[tuple[int, int]]] = [[] for _ in keep]
        for bond in mol.bonds:
            if bond.a in index and bond.b in index:
                code = 4 if bond.aromatic else bond.order
                a, b = index[bond.a], index[bond.b]
                self.adj[a].append((b, code))
                self.adj[b].append((a, code))
        self.edges = {}
        for a in range(len(keep)):
            for b, code in self.adj[a]:
                self.edges[(a, b)] = code

    def __len__(self) -> int:
        return len(self.atoms)

    def atom_invariant(self, i: int) -> tuple:
        a = self.atoms[i]
        return (a.element, a.charge, len(self.adj[i]), self.hcount[i], a.aromatic)


def fingerprint(mol: MolGraph, radius: int = DEFAULT_RADIUS, width: int = DEFAULT_WIDTH) -> Fingerprint:
    """Iterative neighborhood hashing over heavy atoms.

    An environment is kept only the first time its bond set appears, so an
    isolated atom contributes a single environment at any radius.
    """
    view = HeavyView(mol)
    n = len(view)
    ids = [_hash(("L0",) + view.atom_invariant(i)) for i in range(n)]
    bits = {x % width for x in ids}
    envs = [frozenset() for _ in range(n)]
    seen_envs: set[frozenset] = set()
    for _ in range(radius):
        new_ids = []
        new_envs = []
        for i in range(n):
            nbrs = sorted((code, ids[j]) for j, code in view.adj[i])
            new_ids.append(_hash((ids[i], tuple(nbrs))))
            env = set(envs[i])
            for j, _code in view.adj[i]:
                env.add(frozenset((i, j)))
                env.update(envs[j])
            new_envs.append(frozenset(env))
        layer = sorted(range(n), key=lambda i: new_ids[i])
        for i in layer:
            env = new_envs[i]
            if env == envs[i] or env in seen_envs:
                continue
            seen_envs.add(env)
            bits.add(new_ids[i] % width)
        ids, envs = new_ids, new_envs
    return Fingerprint(frozenset(bits), width, radius)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    if a.width != b.width:
        raise WidthMismatch(f"{a.width} != {b.width}")
    union = len(a.bits | b.bits)
    if union == 0:
        return 1.0
    return len(a.bits & b.bits) / union


def bulk_tanimoto(query: Fingerprint, others: Iterable[Fingerprint]) -> list[float]:
    return [tanimoto(query, o) for o in others]


def novel_bits_fraction(fp: Fingerprint, universe: frozenset[int] | set[int], width: int | None = None) -> float:
    """Fraction of ``fp`` bits absent from the reference ``universe``."""
    if width is not None and width != fp.width:
        raise WidthMismatch(f"{fp.width} != {width}")
    if not fp.bits:
        return 0.0
    return len(fp.bits - set(universe)) / len(fp.bits)


# ------------------------------------------------------------ canonical key

def _rank(labels: list) -> list[int]:
    uniq = sorted(set(labels))
    index = {lab: r for r, lab in enumerate(uniq)}
    return [index[lab] for lab in labels]


def _refine(view: HeavyView, ranks: list[int]) -> list[int]:
    while True:
        labels = [
            (ranks[i], tuple(sorted((code, ranks[j]) for j, code in view.adj[i])))
            for i in range(len(view))
        ]
        new = _rank(labels)
        if len(set(new)) == len(set(ranks)):
            return new
        ranks = new


def canonical_ranks(view: HeavyView) -> list[int]:
    """Distinct atom ranks from invariant refinement plus tie breaking."""
    n = len(view)
    ranks = _rank([(view.atom_invariant(i), view.atoms[i].isotope) for i in range(n)])
    ranks = _refine(view, ranks)
    while len(set(ranks)) < n:
        counts: dict[int, int] = {}
        for r in ranks:
            counts[r] = counts.get(r, 0) + 1
        tied = min(r for r, c in counts.items() if c > 1)
        chosen = min(i for i in range(n) if ranks[i] == tied)
        ranks = _rank([(ranks[i], 0 if i == chosen else 1) for i in range(n)])
        ranks = _refine(view, ranks)
    return ranks


def _key_label(atom: Atom, hcount: int) -> str:
    sym = atom.element.lower() if atom.aromatic else atom.element
    out = (str(atom.isotope) if atom.isotope else "") + sym
    if hcount:
        out += "H" + str(hcount)
    if atom.charge:
        out += ("+" if atom.charge > 0 else "-") + str(abs(atom.charge))
    return "[" + out + "]"


_CODE_TEXT = {1: "-", 2: "=", 3: "#", 4: ":"}


def canonical_key(mol: MolGraph) -> str:
    """Isomorphism-stable text key for ``mol``.

    Atoms are ranked by iterative refinement; each component is written by a
    rank-ordered DFS from every possible root and the smallest string kept.
    """
    view = HeavyView(mol)
    n = len(view)
    ranks = canonical_ranks(view)
    labels = [_key_label(view.atoms[i], view.hcount[i]) for i in range(n)]
    adjacency = [[(j, _CODE_TEXT[code]) for j, code in view.adj[i]] for i in range(n)]
    seen = [False] * n
    parts = []
    for start in range(n):
        if seen[start]:
            continue
        comp, stack = [], [start]
        seen[start] = True
        while stack:
            node = stack.pop()
            comp.append(node)
            for j, _ in view.adj[node]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
        best = None
        for root in comp:
            text, _ = write_dfs(n, labels, adjacency, root, lambda a: ranks[a])
            if best is None or (len(text), text) < (len(best), best):
                best = text
        parts.append(best)
    return ".".join(sorted(parts))


# ------------------------------------------------------------ substructure

def _atoms_match(p: Atom, t: Atom) -> bool:
    if p.element != t.element or p.aromatic != t.aromatic:
        return False
    return p.charge == 0 or p.charge == t.charge


def has_substructure(mol: MolGraph, pattern: MolGraph) -> bool:
    """Subgraph match of ``pattern`` heavy atoms/bonds in ``mol`` (backtracking)."""
    tv, pv = HeavyView(mol), HeavyView(pattern)
    if len(pv) == 0:
        return True
    if len(pv) > len(tv):
        return False
    # visit pattern atoms in BFS order so each new atom has a mapped neighbor
    order = [0]
    seen = {0}
    k = 0
    while len(order) < len(pv):
        if k == len(order):
            nxt = min(set(range(len(pv))) - seen)
            order.append(nxt)
            seen.add(nxt)
            continue
        for j, _ in pv.adj[order[k]]:
            if j not in seen:
                seen.add(j)
                order.append(j)
        k += 1
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def extend(depth: int) -> bool:
        if depth == len(order):
            return True
        p = order[depth]
        candidates = range(len(tv))
        anchor = next((j for j, _ in pv.adj[p] if j in mapping), None)
        if anchor is not None:
            candidates = [j for j, _ in tv.adj[mapping[anchor]]]
        for t in candidates:
            if t in used or not _atoms_match(pv.atoms[p], tv.atoms[t]):
                continue
            ok = True
            for q, code in pv.adj[p]:
                if q in mapping and tv.edges.get((t, mapping[q])) != code:
                    ok = False
                    break
            if not ok:
                continue
            mapping[p] = t
            used.add(t)
            if extend(depth + 1):
                return True
            del mapping[p]
            used.discard(t)
        return False

    return extend(0)
