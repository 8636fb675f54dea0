"""Shared record of acceptance outcomes, printed in the pytest terminal summary."""

from contextlib import contextmanager

RESULTS: dict[int, tuple[str, str, str]] = {}


@contextmanager
def criterion(number: int, title: str):
    detail: dict = {}
    try:
        yield detail
    except BaseException:
        RESULTS[number] = ("FAIL", title, _fmt(detail))
        raise
    RESULTS[number] = ("PASS", title, _fmt(detail))


def _fmt(detail: dict) -> str:
    return ", ".join(f"{k}={v}" for k, v in detail.items())


def summary_lines() -> list[str]:
    out = []
    for n in sorted(RESULTS):
        status, title, detail = RESULTS[n]
        out.append(f"criterion {n}: {status}  {title}" + (f"  [{detail}]" if detail else ""))
    return out
