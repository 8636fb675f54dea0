"""Scoring through a child process speaking line-delimited JSON.

Requests are ``{"id": int, "smiles": str}`` lines and a blank line ends the
batch. The child answers with one ``{"id": int, "score": number}`` line per
request, in any order, followed by a blank line.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
import time
from typing import Sequence

DEFAULT_TIMEOUT = 30.0


class ExternalScorerError(RuntimeError):
    pass


class ExternalScorerTimeout(ExternalScorerError):
    pass


class ExternalScorerProtocolError(ExternalScorerError):
    pass


_EOF = object()


class ExternalScorer:
    def __init__(self, command: Sequence[str], timeout: float = DEFAULT_TIMEOUT):
        if not command:
            raise ValueError("external scorer command is empty")
        self.command = list(command)
        self.timeout = float(timeout)
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._next_id = 0

    def __enter__(self) -> "ExternalScorer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def start(self) -> None:
        if self._proc is not None:
            return
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, encoding="utf-8", bufsize=1,
        )
        threading.Thread(target=self._pump, args=(self._proc.stdout,), daemon=True).start()

    def _pump(self, stream) -> None:
        for line in stream:
            self._lines.put(line)
        self._lines.put(_EOF)

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
            proc.wait(timeout=2)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()

    def score(self, smiles: Sequence[str]) -> list[float]:
        """Scores for ``smiles`` in request order."""
        if not smiles:
            return []
        self.start()
        ids = list(range(self._next_id, self._next_id + len(smiles)))
        self._next_id += len(smiles)
        payload = "".join(json.dumps({"id": i, "smiles": s}) + "\n" for i, s in zip(ids, smiles)) + "\n"
        try:
            self._proc.stdin.write(payload)
            self._proc.stdin.flush()
        except OSError:
            # same message as the read side: which end notices first is a race
            raise ExternalScorerProtocolError("scorer process exited mid-batch") from None
        wanted = set(ids)
        got: dict[int, float] = {}
        deadline = time.monotonic() + self.timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ExternalScorerTimeout(f"no complete response within {self.timeout:g} s")
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                raise ExternalScorerTimeout(f"no complete response within {self.timeout:g} s") from None
            if line is _EOF:
                raise ExternalScorerProtocolError("scorer process exited mid-batch")
            line = line.strip()
            if not line:
                break
            rid, value = _parse_response(line)
            if rid not in wanted:
                raise ExternalScorerProtocolError(f"response for unknown id {rid}")
            if rid in got:
                raise ExternalScorerProtocolError(f"duplicate response for id {rid}")
            got[rid] = value
        missing = sorted(wanted - set(got))
        if missing:
            raise ExternalScorerProtocolError(f"no response for ids {missing}")
        return [got[i] for i in ids]


def _parse_response(line: str) -> tuple[int, float]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        raise ExternalScorerProtocolError(f"response is not JSON: {line!r}") from None
    if not isinstance(obj, dict):
        raise ExternalScorerProtocolError(f"response is not an object: {line!r}")
    rid, value = obj.get("id"), obj.get("score")
    if not isinstance(rid, int) or isinstance(rid, bool):
        raise ExternalScorerProtocolError(f"bad or missing id in {line!r}")
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise ExternalScorerProtocolError(f"bad or missing score in {line!r}")
    return rid, float(value)
