"""Registry for the acceptance suite's one-line verdicts.

test_acceptance.py records one line per criterion here; the conftest hook
prints them as a block at the end of the pytest run.
"""

LINES: list[str] = []


def record(criterion: int, label: str, ok: bool, detail: str) -> bool:
    verdict = "PASS" if ok else "FAIL"
    LINES.append(f"criterion {criterion} ({label}): {verdict} -- {detail}")
    return ok
