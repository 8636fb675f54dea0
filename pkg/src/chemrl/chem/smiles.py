"""SMILES parsing into an immutable molecular graph, and graph serialization.

Validity is decided here: a string is a valid molecule iff :func:`parse`
succeeds. Aromaticity is taken from the input case (lowercase atoms must lie
on a ring); there is no electron counting. Stereo marks are discarded.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

from .tables import elements

# allowed valences of neutral atoms; charged atoms use their isoelectronic
# neighbour (atomic number minus charge)
VALENCES: dict[str, tuple[int, ...]] = {
    "H": (1,),
    "B": (3,),
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "F": (1,),
    "Si": (4,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "Cl": (1,),
    "Se": (2, 4, 6),
    "Br": (1,),
    "I": (1, 3, 5),
}

ATOMIC_NUMBER: dict[str, int] = {
    "H": 1, "He": 2, "Li": 3, "Be": 4, "B": 5, "C": 6, "N": 7, "O": 8, "F": 9,
    "Ne": 10, "Na": 11, "Mg": 12, "Al": 13, "Si": 14, "P": 15, "S": 16,
    "Cl": 17, "Ar": 18, "K": 19, "Ca": 20, "Ti": 22, "V": 23, "Cr": 24,
    "Mn": 25, "Fe": 26, "Co": 27, "Ni": 28, "Cu": 29, "Zn": 30, "Ga": 31,
    "Ge": 32, "As": 33, "Se": 34, "Br": 35, "Kr": 36, "Rb": 37, "Sr": 38,
    "Zr": 40, "Mo": 42, "Ru": 44, "Rh": 45, "Pd": 46, "Ag": 47, "Cd": 48,
    "In": 49, "Sn": 50, "Sb": 51, "Te": 52, "I": 53, "Xe": 54, "Cs": 55,
    "Ba": 56, "Pt": 78, "Au": 79, "Hg": 80, "Tl": 81, "Pb": 82, "Bi": 83,
}
_BY_NUMBER = {z: sym for sym, z in ATOMIC_NUMBER.items()}

ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC_ORGANIC = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
AROMATIC_BRACKET = {**AROMATIC_ORGANIC, "se": "Se", "as": "As"}
# group 16 aromatic atoms donate a lone pair rather than a pi bond
_LONE_PAIR_DONORS = {"O", "S", "Se"}

_BOND_SYMBOLS = {"-": 1, "=": 2, "#": 3, ":": 0, "/": 1, "\\": 1}
_BRACKET_RE = re.compile(
    r"^(?P<iso>\d+)?(?P<sym>[A-Za-z][a-z]?)"
    r"(?P<chiral>@(?:@|TH[12]|AL[12]|SP[123]|TB\d{1,2}|OH\d{1,2})?)?"
    r"(?P<h>H\d?)?(?P<chg>\+\d+|-\d+|\++|-+)?(?P<cls>:\d+)?$"
)


class Atom(NamedTuple):
    element: str
    charge: int = 0
    aromatic: bool = False
    hcount: int = 0
    isotope: int = 0


class Bond(NamedTuple):
    a: int
    b: int
    order: int = 1
    aromatic: bool = False


class ParseError(ValueError):
    KINDS = (
        "UnbalancedParenthesis",
        "UnclosedRing",
        "UnknownElement",
        "ValenceViolation",
        "EmptyInput",
        "MalformedBracketAtom",
    )

    def __init__(self, kind: str, position: int, message: str = ""):
        assert kind in self.KINDS, kind
        self.kind = kind
        self.position = position
        super().__init__(f"{kind} at byte {position}" + (f": {message}" if message else ""))


@dataclass(frozen=True)
class MolGraph:
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    ring_bond_flags: tuple[bool, ...]

    @functools.cached_property
    def neighbors(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per atom, a tuple of ``(neighbor index, bond index)``."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for i, bond in enumerate(self.bonds):
            adj[bond.a].append((bond.b, i))
            adj[bond.b].append((bond.a, i))
        return tuple(tuple(x) for x in adj)

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    def total_hydrogens(self, i: int) -> int:
        """Implicit plus explicit (bonded ``[H]`` atom) hydrogens on atom ``i``."""
        extra = sum(1 for j, _ in self.neighbors[i] if self.atoms[j].element == "H")
        return self.atoms[i].hcount + extra

    def heavy_degree(self, i: int) -> int:
        return sum(1 for j, _ in self.neighbors[i] if self.atoms[j].element != "H")

    def check_invariants(self) -> None:
        seen = set()
        n = len(self.atoms)
        for bond in self.bonds:
            assert 0 <= bond.a < n and 0 <= bond.b < n
            assert bond.a != bond.b
            key = frozenset((bond.a, bond.b))
            assert key not in seen
            seen.add(key)
        assert len(self.ring_bond_flags) == len(self.bonds)
        for i, atom in enumerate(self.atoms):
            assert atom.hcount >= 0
            if atom.aromatic:
                assert any(self.ring_bond_flags[b] for _, b in self.neighbors[i])


def _byte_pos(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def _bridges(n: int, bonds: Sequence[Bond]) -> set[int]:
    """Indices of bonds not on any cycle (iterative Tarjan)."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for i, bond in enumerate(bonds):
        adj[bond.a].append((bond.b, i))
        adj[bond.b].append((bond.a, i))
    disc = [-1] * n
    low = [0] * n
    out: set[int] = set()
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, -1, iter(adj[root]))]
        while stack:
            node, via, it = stack[-1]
            advanced = False
            for nb, bi in it:
                if bi == via:
                    continue
                if disc[nb] == -1:
                    disc[nb] = low[nb] = timer
                    timer += 1
                    stack.append((nb, bi, iter(adj[nb])))
                    advanced = True
                    break
                low[node] = min(low[node], disc[nb])
            if advanced:
                continue
            stack.pop()
            if stack:
                parent = stack[-1][0]
                low[parent] = min(low[parent], low[node])
                if low[node] > disc[parent]:
                    out.add(via)
    return out


def _allowed_valences(element: str, charge: int) -> tuple[int, ...] | None:
    z = ATOMIC_NUMBER.get(element)
    if z is None:
        return None
    iso = _BY_NUMBER.get(z - charge)
    if iso is None:
        return None
    return VALENCES.get(iso)


class _Builder:
    def __init__(self, text: str):
        self.text = text
        self.atoms: list[dict] = []
        self.bonds: list[list] = []  # [a, b, order, aromatic]
        self.pairs: set[frozenset] = set()

    def error(self, kind: str, index: int, message: str = "") -> ParseError:
        return ParseError(kind, _byte_pos(self.text, index), message)

    def add_bond(self, a: int, b: int, symbol: str | None, index: int) -> None:
        if a == b:
            raise self.error("UnclosedRing", index, "ring closure onto the same atom")
        key = frozenset((a, b))
        if key in self.pairs:
            raise self.error("UnclosedRing", index, "duplicate bond")
        self.pairs.add(key)
        if symbol is None:
            arom = self.atoms[a]["aromatic"] and self.atoms[b]["aromatic"]
            self.bonds.append([a, b, 1, arom])
        elif symbol == ":":
            self.bonds.append([a, b, 1, True])
        else:
            self.bonds.append([a, b, _BOND_SYMBOLS[symbol], False])


def _parse_bracket(b: _Builder, body: str, start: int) -> dict:
    m = _BRACKET_RE.match(body)
    if not m:
        raise b.error("MalformedBracketAtom", start, f"[{body}]")
    sym = m.group("sym")
    known = elements()
    if sym in AROMATIC_BRACKET:
        element, aromatic = AROMATIC_BRACKET[sym], True
    elif sym[0].isupper() and sym in known:
        element, aromatic = sym, False
    else:
        raise b.error("UnknownElement", start + 1, sym)
    if element not in known:
        raise b.error("UnknownElement", start + 1, sym)
    h = m.group("h")
    hcount = 0 if h is None else (int(h[1:]) if len(h) > 1 else 1)
    chg = m.group("chg")
    charge = 0
    if chg:
        if chg[1:].isdigit():
            charge = int(chg[1:]) * (1 if chg[0] == "+" else -1)
        else:
            charge = len(chg) * (1 if chg[0] == "+" else -1)
    iso = int(m.group("iso")) if m.group("iso") else 0
    return dict(element=element, charge=charge, aromatic=aromatic, hcount=hcount,
                isotope=iso, bracket=True, pos=start)


def _scan(text: str) -> _Builder:
    b = _Builder(text)
    prev: int | None = None
    pending: tuple[str, int] | None = None
    branches: list[tuple[int | None, int]] = []
    rings: dict[int, tuple[int, str | None, int]] = {}
    i, n = 0, len(text)

    def take_atom(atom: dict) -> None:
        nonlocal prev, pending
        idx = len(b.atoms)
        b.atoms.append(atom)
        if prev is not None:
            b.add_bond(prev, idx, pending[0] if pending else None, atom["pos"])
        elif pending is not None:
            raise b.error("UnknownElement", pending[1], "bond without a preceding atom")
        prev, pending = idx, None

    while i < n:
        ch = text[i]
        if ch == "(":
            if prev is None:
                raise b.error("UnbalancedParenthesis", i, "branch without a preceding atom")
            if pending is not None:
                raise b.error("UnknownElement", pending[1], "bond before branch")
            if i + 1 < n and text[i + 1] == ")":
                raise b.error("UnbalancedParenthesis", i, "empty branch")
            branches.append((prev, i))
            i += 1
        elif ch == ")":
            if not branches:
                raise b.error("UnbalancedParenthesis", i, "unmatched ')'")
            if pending is not None:
                raise b.error("UnknownElement", pending[1], "dangling bond")
            prev = branches.pop()[0]
            i += 1
        elif ch in _BOND_SYMBOLS:
            if prev is None or pending is not None:
                raise b.error("UnknownElement", i, "misplaced bond symbol")
            pending = (ch, i)
            i += 1
        elif ch == ".":
            if prev is None or pending is not None:
                raise b.error("UnknownElement", i, "misplaced '.'")
            if branches:
                raise b.error("UnbalancedParenthesis", i, "'.' inside a branch")
            prev = None
            i += 1
        elif ch.isdigit() or ch == "%":
            if ch == "%":
                num_text = text[i + 1:i + 3]
                if len(num_text) != 2 or not num_text.isdigit():
                    raise b.error("UnclosedRing", i, "malformed %nn ring label")
                num, width = int(num_text), 3
            else:
                num, width = int(ch), 1
            if prev is None:
                raise b.error("UnclosedRing", i, "ring label without an atom")
            sym = pending[0] if pending else None
            if num in rings:
                other, other_sym, _ = rings.pop(num)
                if sym is not None and other_sym is not None and sym != other_sym:
                    raise b.error("UnclosedRing", i, "conflicting ring-bond orders")
                b.add_bond(other, prev, sym if sym is not None else other_sym, i)
            else:
                rings[num] = (prev, sym, i)
            pending = None
            i += width
        elif ch == "[":
            end = text.find("]", i + 1)
            if end == -1:
                raise b.error("MalformedBracketAtom", i, "unterminated bracket atom")
            take_atom(_parse_bracket(b, text[i + 1:end], i))
            i = end + 1
        elif ch in AROMATIC_ORGANIC:
            take_atom(dict(element=AROMATIC_ORGANIC[ch], charge=0, aromatic=True,
                           hcount=0, isotope=0, bracket=False, pos=i))
            i += 1
        elif ch.isupper():
            two = text[i:i + 2]
            if two in ("Cl", "Br"):
                sym, width = two, 2
            elif ch in ORGANIC:
                sym, width = ch, 1
            else:
                raise b.error("UnknownElement", i, repr(text[i:i + 2]))
            take_atom(dict(element=sym, charge=0, aromatic=False, hcount=0,
                           isotope=0, bracket=False, pos=i))
            i += width
        else:
            raise b.error("UnknownElement", i, repr(ch))

    problems = []
    if pending is not None:
        problems.append(("UnknownElement", pending[1], "dangling bond"))
    for _, pos in branches:
        problems.append(("UnbalancedParenthesis", pos, "unclosed '('"))
    for _, _, pos in rings.values():
        problems.append(("UnclosedRing", pos, "ring label never closed"))
    if problems:
        kind, pos, msg = min(problems, key=lambda p: p[1])
        raise b.error(kind, pos, msg)
    if not b.atoms:
        raise ParseError("EmptyInput", 0, "no atoms")
    return b


def _assign_hydrogens(b: _Builder, ring_flags: list[bool]) -> None:
    n = len(b.atoms)
    contrib = [0] * n
    arom_bonds = [0] * n
    for a, c, order, arom in b.bonds:
        v = 1 if arom else order
        contrib[a] += v
        contrib[c] += v
        if arom:
            arom_bonds[a] += 1
            arom_bonds[c] += 1
    on_ring = [False] * n
    for (a, c, _, _), flag in zip(b.bonds, ring_flags):
        if flag:
            on_ring[a] = on_ring[c] = True
    for i, atom in enumerate(b.atoms):
        if atom["aromatic"] and not on_ring[i]:
            raise b.error("ValenceViolation", atom["pos"], "aromatic atom outside a ring")
        allowed = _allowed_valences(atom["element"], atom["charge"])
        pi = atom["aromatic"] and atom["element"] not in _LONE_PAIR_DONORS and arom_bonds[i] > 0
        if atom["bracket"]:
            if allowed is None:
                continue
            base = contrib[i] + atom["hcount"]
            if pi and base + 1 <= max(allowed):
                base += 1
            if base > max(allowed):
                raise b.error("ValenceViolation", atom["pos"], f"{atom['element']} valence {base}")
            continue
        base = contrib[i]
        if pi and base + 1 <= max(allowed):
            base += 1
        fits = [v for v in allowed if v >= base]
        if not fits:
            raise b.error("ValenceViolation", atom["pos"], f"{atom['element']} valence {base}")
        atom["hcount"] = fits[0] - base


def parse(smiles: str) -> MolGraph:
    """Parse a SMILES string; raises :class:`ParseError` on the first problem."""
    if not isinstance(smiles, str):
        raise TypeError("smiles must be str")
    if smiles == "":
        raise ParseError("EmptyInput", 0, "empty string")
    b = _scan(smiles)
    n = len(b.atoms)
    bonds = [Bond(a, c, o, ar) for a, c, o, ar in b.bonds]
    bridge = _bridges(n, bonds)
    ring_flags = [i not in bridge for i in range(len(bonds))]
    # aromatic bonds off any ring are plain single bonds
    for i, bond in enumerate(b.bonds):
        if bond[3] and not ring_flags[i]:
            bond[3] = False
    _assign_hydrogens(b, ring_flags)
    atoms = tuple(
        Atom(a["element"], a["charge"], a["aromatic"], a["hcount"], a["isotope"]) for a in b.atoms
    )
    return MolGraph(
        atoms=atoms,
        bonds=tuple(Bond(a, c, o, ar) for a, c, o, ar in b.bonds),
        ring_bond_flags=tuple(ring_flags),
    )


@functools.lru_cache(maxsize=65536)
def parse_or_none(smiles: str) -> MolGraph | None:
    try:
        return parse(smiles)
    except ParseError:
        return None


def is_valid(smiles: str) -> bool:
    return parse_or_none(smiles) is not None


# ---------------------------------------------------------------- writing

def atom_label(atom: Atom, hcount: int | None = None) -> str:
    """Bracket-atom text for ``atom`` (always bracketed, explicit H count)."""
    h = atom.hcount if hcount is None else hcount
    sym = atom.element.lower() if atom.aromatic else atom.element
    out = "[" + (str(atom.isotope) if atom.isotope else "") + sym
    if h:
        out += "H" + (str(h) if h > 1 else "")
    if atom.charge:
        sign = "+" if atom.charge > 0 else "-"
        out += sign + (str(abs(atom.charge)) if abs(atom.charge) > 1 else "")
    return out + "]"


def bond_symbol(bond: Bond, atoms: Sequence[Atom]) -> str:
    if bond.aromatic:
        return ""
    if bond.order == 2:
        return "="
    if bond.order == 3:
        return "#"
    if atoms[bond.a].aromatic and atoms[bond.b].aromatic:
        return "-"
    return ""


def write_dfs(
    n: int,
    labels: Sequence[str],
    adjacency: Sequence[Sequence[tuple[int, str]]],
    root: int,
    order: Callable[[int], object],
) -> tuple[str, list[int]]:
    """Depth-first SMILES writer over the component containing ``root``.

    ``adjacency[i]`` lists ``(neighbor, bond text)``. Neighbors are visited
    in increasing ``order(neighbor)``. Returns the string and atom visit order.
    """
    ordered = [sorted(adjacency[i], key=lambda t: order(t[0])) for i in range(n)]
    bond_text = {(i, nb): text for i in range(n) for nb, text in adjacency[i]}
    pos: dict[int, int] = {}
    visit: list[int] = []
    children: dict[int, list[int]] = {}
    # iterative DFS fixing the spanning tree and the visit order
    stack: list[tuple[int, int, int]] = [(root, -1, 0)]
    pos[root] = 0
    visit.append(root)
    children[root] = []
    while stack:
        node, par, k = stack[-1]
        if k == len(ordered[node]):
            stack.pop()
            continue
        stack[-1] = (node, par, k + 1)
        nb = ordered[node][k][0]
        if nb in pos:
            continue
        pos[nb] = len(visit)
        visit.append(nb)
        children[node].append(nb)
        children[nb] = []
        stack.append((nb, node, 0))
    tree = {frozenset((p, c)) for p, cs in children.items() for c in cs}
    opens: dict[int, list[int]] = {}
    for i in visit:
        for nb, _ in ordered[i]:
            if pos[nb] > pos[i] and frozenset((i, nb)) not in tree:
                opens.setdefault(i, []).append(nb)
    closes: dict[int, list[int]] = {}
    for i, partners in opens.items():
        for nb in partners:
            closes.setdefault(nb, []).append(i)

    def label_text(k: int) -> str:
        return str(k) if k < 10 else f"%{k:02d}"

    out: list[str] = []
    free: list[int] = []
    next_label = 1
    active: dict[tuple[int, int], int] = {}
    # explicit work stack of atoms and literal strings keeps deep chains safe
    work: list[object] = [root]
    while work:
        item = work.pop()
        if isinstance(item, str):
            out.append(item)
            continue
        node = item
        out.append(labels[node])
        for other in sorted(closes.get(node, []), key=lambda a: active[(a, node)]):
            k = active.pop((other, node))
            out.append(bond_text[(node, other)] + label_text(k))
            free.append(k)
            free.sort()
        for y in opens.get(node, []):
            if free:
                k = free.pop(0)
            else:
                k = next_label
                next_label += 1
            active[(node, y)] = k
            out.append(bond_text[(node, y)] + label_text(k))
        kids = children[node]
        pending: list[object] = []
        for j, nb in enumerate(kids):
            branch = j < len(kids) - 1
            if branch:
                pending.extend(["(", bond_text[(node, nb)], nb, ")"])
            else:
                pending.extend([bond_text[(node, nb)], nb])
        work.extend(reversed(pending))
    return "".join(out), visit


def components(mol: MolGraph) -> list[list[int]]:
    seen = [False] * mol.num_atoms
    comps = []
    for start in range(mol.num_atoms):
        if seen[start]:
            continue
        comp, stack = [], [start]
        seen[start] = True
        while stack:
            node = stack.pop()
            comp.append(node)
            for nb, _ in mol.neighbors[node]:
                if not seen[nb]:
                    seen[nb] = True
                    stack.append(nb)
        comps.append(sorted(comp))
    return comps


def to_smiles(mol: MolGraph, rng=None) -> tuple[str, list[int]]:
    """Serialize ``mol`` with bracket atoms and explicit hydrogen counts.

    Returns the string and the atom order it encodes: atom ``k`` of
    ``parse(text)`` corresponds to atom ``order[k]`` of ``mol``. With an
    ``rng`` (``numpy.random.Generator``) the roots and neighbor order are
    randomized, giving a random but equivalent SMILES.
    """
    labels = [atom_label(a) for a in mol.atoms]
    adjacency = [
        [(nb, bond_symbol(mol.bonds[bi], mol.atoms)) for nb, bi in mol.neighbors[i]]
        for i in range(mol.num_atoms)
    ]
    if rng is None:
        keys = list(range(mol.num_atoms))
    else:
        keys = list(rng.permutation(mol.num_atoms))
    comps = components(mol)
    if rng is not None:
        comps = [comps[k] for k in rng.permutation(len(comps))]
    parts, order = [], []
    for comp in comps:
        root = min(comp, key=lambda a: keys[a])
        text, visit = write_dfs(mol.num_atoms, labels, adjacency, root, lambda a: keys[a])
        parts.append(text)
        order.extend(visit)
    return ".".join(parts), order


def permute(mol: MolGraph, order: Sequence[int]) -> MolGraph:
    """Relabel atoms so that new atom ``k`` is old atom ``order[k]``."""
    inv = {old: new for new, old in enumerate(order)}
    atoms = tuple(mol.atoms[o] for o in order)
    bonds = []
    flags = []
    for bond, flag in zip(mol.bonds, mol.ring_bond_flags):
        a, b = inv[bond.a], inv[bond.b]
        bonds.append(Bond(min(a, b), max(a, b), bond.order, bond.aromatic))
        flags.append(flag)
    paired = sorted(zip(bonds, flags))
    return MolGraph(atoms, tuple(p[0] for p in paired), tuple(p[1] for p in paired))


def normalized(mol: MolGraph) -> MolGraph:
    """Same graph with bonds stored as sorted ``(min, max)`` pairs."""
    return permute(mol, list(range(mol.num_atoms)))
