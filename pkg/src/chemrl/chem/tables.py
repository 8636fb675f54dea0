"""Loading of the shipped data tables (atomic weights, logP contributions, alerts)."""

from __future__ import annotations

import csv
import functools
import os
from pathlib import Path

DATA_ENV_VAR = "CHEMRL_DATA_DIR"
_PACKAGE_DATA = Path(__file__).resolve().parent.parent / "data"


class TableError(ValueError):
    pass


def data_dir() -> Path:
    override = os.environ.get(DATA_ENV_VAR)
    return Path(override) if override else _PACKAGE_DATA


def data_path(name: str) -> Path:
    return data_dir() / name


def read_table(path: str | os.PathLike) -> tuple[dict[str, str], dict[str, str]]:
    """Read a versioned two-column CSV.

    Lines starting with ``#`` are comments; a ``# version: N`` comment is
    reported in the returned metadata. Returns ``(rows, meta)``.
    """
    path = Path(path)
    meta: dict[str, str] = {}
    body: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                key, sep, value = stripped[1:].partition(":")
                if sep:
                    meta[key.strip()] = value.strip()
                continue
            body.append(stripped)
    if not body:
        raise TableError(f"{path}: no header row")
    reader = csv.reader(body)
    header = next(reader)
    if len(header) != 2:
        raise TableError(f"{path}: expected two columns, got {header}")
    rows: dict[str, str] = {}
    for lineno, row in enumerate(reader, start=2):
        if len(row) != 2:
            raise TableError(f"{path}: malformed row {lineno}: {row}")
        rows[row[0].strip()] = row[1].strip()
    return rows, meta


@functools.lru_cache(maxsize=None)
def _atomic_weights(path: str) -> dict[str, float]:
    rows, _ = read_table(path)
    return {k: float(v) for k, v in rows.items()}


def atomic_weights() -> dict[str, float]:
    return _atomic_weights(str(data_path("atomic_weights.csv")))


@functools.lru_cache(maxsize=None)
def _logp_table(path: str) -> dict[str, float]:
    rows, _ = read_table(path)
    return {k: float(v) for k, v in rows.items()}


def logp_table() -> dict[str, float]:
    return _logp_table(str(data_path("logp_contributions.csv")))


@functools.lru_cache(maxsize=None)
def _alerts(path: str) -> tuple[tuple[str, str], ...]:
    rows, _ = read_table(path)
    return tuple(rows.items())


def alert_patterns() -> tuple[tuple[str, str], ...]:
    return _alerts(str(data_path("alerts.csv")))


def elements() -> frozenset[str]:
    return frozenset(atomic_weights())
