"""Shared record of acceptance outcomes, printed by the terminal-summary hook."""

CRITERIA = {
    1: "calibration round trip",
    2: "extraction vs analytic path values",
    3: "formula point checks",
    4: "free-space slope",
    5: "gradient check",
    6: "training sanity",
    7: "experiment orderings",
    8: "vehicle-swap robustness",
    9: "alignment vs brute force",
    10: "demo determinism",
}

RESULTS = {}


def record(n, ok, detail=""):
    RESULTS[n] = (bool(ok), detail)
    return ok


def summary_lines():
    if not RESULTS:
        return []
    out = []
    for n, name in CRITERIA.items():
        ok, detail = RESULTS.get(n, (False, "did not complete"))
        out.append(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return out
