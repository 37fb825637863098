"""Collects one PASS/FAIL line per acceptance criterion."""

VERDICTS: dict[str, str] = {}


def verdict(key: str, ok: bool, detail: str) -> bool:
    line = f"{key:<8} {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[key] = line
    print(line)
    return ok
