"""Ground-truth construction from case timelines, index series and page views."""

from __future__ import annotations

import csv
import datetime as dt
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import SEIRD, StateSpace

__all__ = [
    "REGIME_K",
    "REGIME_THETA",
    "MAX_FILL_DAYS",
    "REGIMES",
    "CaseTimeline",
    "IngestReport",
    "parse_day",
    "read_case_timelines",
    "timelines_to_labels",
    "ingest_case_timelines",
    "k_day_returns",
    "label_index_regimes",
    "fill_gaps",
    "ingest_index_series",
    "normalize_pageviews",
    "ingest_pageviews",
]

REGIME_K = 5
REGIME_THETA = 0.005
MAX_FILL_DAYS = 3
REGIMES = ("Bearish", "Bullish", "Neutral")


@dataclass(frozen=True)
class CaseTimeline:
    """Per-agent event days relative to the scenario start (``None`` if absent)."""

    agent: int
    infection: int | None = None
    recovery: int | None = None
    death: int | None = None

    def __post_init__(self):
        if self.recovery is not None and self.death is not None:
            raise ValueError("at most one of recovery and death")
        for name in ("recovery", "death"):
            v = getattr(self, name)
            if v is not None:
                if self.infection is None:
                    raise ValueError(f"{name} without infection")
                if v < self.infection:
                    raise ValueError(f"{name} day {v} precedes infection day {self.infection}")

    def exposure(self, incubation: int) -> int | None:
        return None if self.infection is None else self.infection - incubation


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.accepted + len(self.rejected)

    def as_dict(self) -> dict:
        return {"accepted": self.accepted, "rejected": self.rejected, "flags": self.flags}


def parse_day(value, start: dt.date | None):
    """ISO date relative to ``start``, or an integer day index; blank is ``None``."""
    if value is None:
        return None
    value = str(value).strip()
    if not value:
        return None
    try:
        return int(value)
    except ValueError:
        pass
    d = dt.date.fromisoformat(value)
    if start is None:
        raise ValueError(f"date {value!r} needs a scenario start date")
    return (d - start).days


def _open_text(src):
    if isinstance(src, (str, Path)) and Path(src).exists():
        return open(src, newline="", encoding="utf-8")
    if hasattr(src, "read"):
        return src
    return io.StringIO(str(src))


def read_case_timelines(src, start: dt.date | str | None = None) -> tuple[list[CaseTimeline], IngestReport]:
    """Rows ``agent_id, infection, recovery, death``; inconsistent rows are rejected."""
    if isinstance(start, str):
        start = dt.date.fromisoformat(start)
    report = IngestReport()
    rows = []
    fh = _open_text(src)
    try:
        for lineno, rec in enumerate(csv.DictReader(fh), start=2):
            try:
                tl = CaseTimeline(
                    agent=int(rec["agent_id"]),
                    infection=parse_day(rec.get("infection"), start),
                    recovery=parse_day(rec.get("recovery"), start),
                    death=parse_day(rec.get("death"), start),
                )
            except (ValueError, KeyError, TypeError) as exc:
                report.rejected.append({"line": lineno, "row": dict(rec), "reason": str(exc)})
                continue
            rows.append(tl)
            report.accepted += 1
    finally:
        if fh is not src:
            fh.close()
    return rows, report


def timelines_to_labels(timelines, n: int, T: int, incubation: int = 7, state_space: StateSpace = SEIRD) -> np.ndarray:
    """Daily state indices ``(n, T)``.

    Exposed for ``incubation`` days before infection, Infected from infection
    until recovery or death, the terminal state afterwards, Susceptible
    otherwise.
    """
    if not 5 <= incubation <= 7:
        raise ValueError("incubation must lie in 5..7 days")
    S, E, I, R, D = (state_space.index(s) for s in ("S", "E", "I", "R", "D"))
    out = np.full((n, T), S, dtype=np.int64)
    days = np.arange(T)
    for tl in timelines:
        if not 0 <= tl.agent < n:
            raise ValueError(f"agent {tl.agent} outside 0..{n - 1}")
        if tl.infection is None:
            continue
        row = out[tl.agent]
        row[(days >= tl.infection - incubation) & (days < tl.infection)] = E
        end = tl.recovery if tl.recovery is not None else tl.death
        stop = T if end is None else end
        row[(days >= tl.infection) & (days < stop)] = I
        if tl.recovery is not None:
            row[days >= tl.recovery] = R
        if tl.death is not None:
            row[days >= tl.death] = D
    return out


def ingest_case_timelines(src, n: int, T: int, start=None, incubation: int = 7):
    """Read a case-timeline CSV into an ``(n, T)`` label matrix and a rejection report."""
    rows, report = read_case_timelines(src, start)
    return timelines_to_labels(rows, n, T, incubation), report


def k_day_returns(values, k: int = REGIME_K) -> np.ndarray:
    """Return over the trailing ``k``-day window ``v[t] / v[t-k+1] - 1``; 0 before day ``k - 1``."""
    v = np.asarray(values, float)
    if k < 2:
        raise ValueError("k must be >= 2")
    out = np.zeros(len(v))
    if len(v) >= k:
        out[k - 1 :] = v[k - 1 :] / v[: len(v) - k + 1] - 1.0
    return out


def label_index_regimes(values, k: int = REGIME_K, theta: float = REGIME_THETA) -> tuple[list[str], np.ndarray]:
    """Bullish above ``+theta``, Bearish below ``-theta``, Neutral otherwise.

    The first ``k - 1`` days lack a full window and are Neutral.
    """
    r = k_day_returns(values, k)
    labels = ["Neutral"] * len(r)
    for t in range(k - 1, len(r)):
        if r[t] > theta:
            labels[t] = "Bullish"
        elif r[t] < -theta:
            labels[t] = "Bearish"
    return labels, r


def fill_gaps(values, max_fill: int = MAX_FILL_DAYS) -> np.ndarray:
    """Forward-fill runs of missing values no longer than ``max_fill``."""
    v = np.asarray(values, float).copy()
    if len(v) and np.isnan(v[0]):
        raise ValueError("series starts with a missing value")
    run = 0
    for t in range(len(v)):
        if np.isnan(v[t]):
            run += 1
            if run > max_fill:
                raise ValueError(f"gap longer than {max_fill} days ending at position {t}")
            v[t] = v[t - 1]
        else:
            run = 0
    return v


def _daily_series(src, value_column: str):
    fh = _open_text(src)
    try:
        rows = list(csv.DictReader(fh))
    finally:
        if fh is not src:
            fh.close()
    if not rows:
        raise ValueError("empty series")
    dates = [dt.date.fromisoformat(r["date"].strip()) for r in rows]
    if sorted(dates) != dates or len(set(dates)) != len(dates):
        raise ValueError("dates must be strictly increasing")
    span = (dates[-1] - dates[0]).days + 1
    vals = np.full(span, np.nan)
    for d, r in zip(dates, rows):
        cell = (r.get(value_column) or "").strip()
        if cell:
            vals[(d - dates[0]).days] = float(cell)
    return dates[0], vals


def ingest_index_series(src, k: int = REGIME_K, theta: float = REGIME_THETA, max_fill: int = MAX_FILL_DAYS, column: str = "value"):
    """Daily ``date,value`` CSV to regime labels; calendar gaps are forward-filled."""
    start, vals = _daily_series(src, column)
    filled = fill_gaps(vals, max_fill)
    labels, r = label_index_regimes(filled, k, theta)
    return {"start": start.isoformat(), "values": filled, "returns": r, "labels": labels, "k": k, "theta": theta}


def normalize_pageviews(counts) -> tuple[np.ndarray, list[str]]:
    """Min-max scaling to ``[0, 1]``; a constant series maps to 0.5 and is flagged."""
    c = np.asarray(counts, float)
    if np.any(c < 0) or np.any(~np.isfinite(c)):
        raise ValueError("page-view counts must be finite and non-negative")
    lo, hi = c.min(), c.max()
    if hi == lo:
        return np.full(len(c), 0.5), ["constant series normalised to 0.5"]
    return (c - lo) / (hi - lo), []


def ingest_pageviews(src, column: str = "views", max_fill: int = MAX_FILL_DAYS):
    start, vals = _daily_series(src, column)
    index, flags = normalize_pageviews(fill_gaps(vals, max_fill))
    return {"start": start.isoformat(), "index": index, "flags": flags}
