"""Collects one verdict line per acceptance criterion for the terminal summary."""

RESULTS = {}


def record(number, title, ok, detail=""):
    RESULTS[number] = (title, bool(ok), detail)
    line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    print(line)
    return ok
