"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

LINES = []


def verdict(name, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip()
    LINES.append(line)
    print(line, flush=True)
    return ok
