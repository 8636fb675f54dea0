"""SMILES tokenization and the token vocabulary."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

GO = "<GO>"
EOS = "<EOS>"
PAD = "<PAD>"
SPECIALS = (GO, EOS, PAD)


class TokenizeError(ValueError):
    def __init__(self, kind: str, position: int, text: str):
        self.kind = kind
        self.position = position
        super().__init__(f"{kind} at {position} in {text!r}")


class UnknownToken(KeyError):
    pass


class UnknownId(KeyError):
    pass


class EmptyCorpus(ValueError):
    pass


def tokenize(smiles: str) -> list[str]:
    """Longest-match tokenization.

    ``[...]`` bracket atoms, ``Cl``, ``Br`` and ``%nn`` ring labels are single
    tokens; every other character is its own token. Chirality marks are only
    legal inside brackets, and whitespace is rejected.
    """
    tokens: list[str] = []
    i, n = 0, len(smiles)
    while i < n:
        ch = smiles[i]
        if ch == "[":
            end = smiles.find("]", i + 1)
            if end == -1 or "[" in smiles[i + 1:end]:
                raise TokenizeError("UnterminatedBracket", i, smiles)
            tokens.append(smiles[i:end + 1])
            i = end + 1
        elif ch == "%":
            digits = smiles[i + 1:i + 3]
            if len(digits) != 2 or not digits.isdigit():
                raise TokenizeError("MalformedPercent", i, smiles)
            tokens.append(smiles[i:i + 3])
            i += 3
        elif smiles.startswith(("Cl", "Br"), i):
            tokens.append(smiles[i:i + 2])
            i += 2
        elif ch == "]":
            raise TokenizeError("UnterminatedBracket", i, smiles)
        elif ch == "@":
            raise TokenizeError("StrayBracketSymbol", i, smiles)
        elif ch.isspace() or not ch.isprintable():
            raise TokenizeError("UnexpectedCharacter", i, smiles)
        else:
            tokens.append(ch)
            i += 1
    return tokens


@dataclass
class Vocabulary:
    tokens: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if any(t == "" for t in self.tokens):
            raise ValueError("empty token")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens")
        for s in SPECIALS:
            if s not in self.tokens:
                raise ValueError(f"missing special token {s}")
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @property
    def go(self) -> int:
        return self.index[GO]

    @property
    def eos(self) -> int:
        return self.index[EOS]

    @property
    def pad(self) -> int:
        return self.index[PAD]

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset((self.go, self.eos, self.pad))

    @property
    def num_actions(self) -> int:
        """Size of the action space: every token except GO and PAD."""
        return len(self.tokens) - 2

    def encode(self, tokens: Sequence[str]) -> list[int]:
        try:
            return [self.index[t] for t in tokens]
        except KeyError as exc:
            raise UnknownToken(exc.args[0]) from None

    def decode_tokens(self, ids: Iterable[int]) -> list[str]:
        out = []
        specials = self.special_ids
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.tokens):
                raise UnknownId(i)
            if i not in specials:
                out.append(self.tokens[i])
        return out

    def decode(self, ids: Iterable[int]) -> str:
        return "".join(self.decode_tokens(ids))

    def encode_smiles(self, smiles: str) -> list[int]:
        return self.encode(tokenize(smiles))

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        if tuple(tokens[:3]) != SPECIALS:
            raise ValueError(f"{path}: vocabulary must start with {SPECIALS}")
        return cls(tokens)


def build_vocabulary(lines: Iterable[str]) -> Vocabulary:
    """Specials first, then the sorted set of tokens found in ``lines``."""
    found: set[str] = set()
    any_line = False
    for line in lines:
        found.update(tokenize(line))
        any_line = True
    if not any_line:
        raise EmptyCorpus("no lines to build a vocabulary from")
    return Vocabulary(list(SPECIALS) + sorted(found))
