"""Event-time forecast distributions and their scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .engine.sampler import outcome_probabilities

__all__ = [
    "NLL_FLOOR",
    "JointEventDistribution",
    "EventRecord",
    "joint_event_distribution",
    "expected_event_day",
    "predicted_type",
    "eete",
    "et_f1",
    "nll",
    "brier",
    "ece_reliability",
    "regime_probability_trace",
    "truncated_moving_average",
    "score_forecasts",
    "summarize_windows",
]

NLL_FLOOR = 1e-12


@dataclass(frozen=True)
class JointEventDistribution:
    """First-event probabilities over ``(type, day)`` plus no-event mass.

    ``probs[d - 1, j]`` is the probability that the first event happens on
    day ``d`` and has type ``types[j]``.
    """

    origin: str
    types: tuple[str, ...]
    probs: np.ndarray
    none: float

    def __post_init__(self):
        probs = np.asarray(self.probs, float)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "types", tuple(self.types))
        if probs.ndim != 2 or probs.shape[1] != len(self.types):
            raise ValueError("probs must have shape (H, n_types)")
        if np.any(probs < -1e-15) or self.none < -1e-15:
            raise ValueError("probabilities must be non-negative")
        if abs(probs.sum() + self.none - 1.0) > 1e-9:
            raise ValueError(f"distribution sums to {probs.sum() + self.none}, expected 1")

    @property
    def H(self) -> int:
        return self.probs.shape[0]

    def p(self, type_: str | None, day: int | None) -> float:
        if type_ is None:
            return float(self.none)
        if type_ not in self.types or day is None or not 1 <= day <= self.H:
            return 0.0
        return float(self.probs[day - 1, self.types.index(type_)])

    def outcome_vector(self) -> np.ndarray:
        """All ``(day, type)`` cells in row-major order followed by no-event."""
        return np.append(self.probs.ravel(), self.none)


@dataclass(frozen=True)
class EventRecord:
    """Realised first event of one agent; ``type`` is ``None`` for no event."""

    agent: int
    type: str | None
    day: int | None
    H: int = 7

    def __post_init__(self):
        if (self.type is None) != (self.day is None):
            raise ValueError("type and day must both be given or both be absent")
        if self.day is not None and not 1 <= self.day <= self.H:
            raise ValueError(f"event day {self.day} outside 1..{self.H}")

    @property
    def has_event(self) -> bool:
        return self.type is not None


def joint_event_distribution(hazards, origin: str, types: Sequence[str], sampler: str = "exponential") -> JointEventDistribution:
    """First-passage distribution of daily competing hazards.

    Parameters
    ----------
    hazards : ndarray, shape (H, n_types)
        Per-day hazards of the origin state's outgoing transitions.
    """
    hazards = np.atleast_2d(np.asarray(hazards, float))
    if hazards.shape[1] != len(types):
        raise ValueError("one hazard column per type is required")
    stay, per_type = outcome_probabilities(hazards, sampler)
    survive = np.concatenate([[1.0], np.cumprod(stay)[:-1]])
    probs = survive[:, None] * per_type
    return JointEventDistribution(origin=origin, types=tuple(types), probs=probs, none=float(np.prod(stay)))


def expected_event_day(pred: JointEventDistribution) -> float:
    """``sum_d d * p(any type, d) + (H + 1) * p(no event)``."""
    days = np.arange(1, pred.H + 1)
    return float(days @ pred.probs.sum(axis=1) + (pred.H + 1) * pred.none)


def predicted_type(pred: JointEventDistribution) -> str:
    """Most probable event type; ties go to the lexicographically first label."""
    mass = pred.probs.sum(axis=0)
    best = mass.max()
    return min(t for t, m in zip(pred.types, mass) if m == best)


def _event_pairs(preds, truth):
    if len(preds) != len(truth):
        raise ValueError("predictions and truth records must align")
    return [(p, r) for p, r in zip(preds, truth) if r.has_event]


def eete(preds: Sequence[JointEventDistribution], truth: Sequence[EventRecord]) -> float | None:
    """Mean absolute error in days between expected and realised event day.

    Only event-bearing records count; ``None`` when there are none.
    """
    pairs = _event_pairs(preds, truth)
    if not pairs:
        return None
    return float(np.mean([abs(expected_event_day(p) - r.day) for p, r in pairs]))


def et_f1(preds: Sequence[JointEventDistribution], truth: Sequence[EventRecord]) -> float | None:
    """Macro F1 over event types present in truth or predictions."""
    pairs = _event_pairs(preds, truth)
    if not pairs:
        return None
    y_true = [r.type for _, r in pairs]
    y_pred = [predicted_type(p) for p, _ in pairs]
    scores = []
    for c in sorted(set(y_true) | set(y_pred)):
        tp = sum(t == c and q == c for t, q in zip(y_true, y_pred))
        fp = sum(t != c and q == c for t, q in zip(y_true, y_pred))
        fn = sum(t == c and q != c for t, q in zip(y_true, y_pred))
        scores.append(2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores))


def nll(preds: Sequence[JointEventDistribution], truth: Sequence[EventRecord]) -> float | None:
    """Mean ``-ln p(true type, true day)`` with probabilities floored at 1e-12."""
    pairs = _event_pairs(preds, truth)
    if not pairs:
        return None
    return float(np.mean([-np.log(max(p.p(r.type, r.day), NLL_FLOOR)) for p, r in pairs]))


def _onehot(pred: JointEventDistribution, rec: EventRecord) -> np.ndarray:
    y = np.zeros(pred.probs.size + 1)
    if not rec.has_event:
        y[-1] = 1.0
    elif rec.type in pred.types and 1 <= rec.day <= pred.H:
        y[(rec.day - 1) * len(pred.types) + pred.types.index(rec.type)] = 1.0
    else:
        raise ValueError(f"record type {rec.type!r} is not an outgoing transition of {pred.origin!r}")
    return y


def brier(preds: Sequence[JointEventDistribution], truth: Sequence[EventRecord]) -> float | None:
    """Mean multi-outcome Brier score over ``(type, day)`` cells plus no-event."""
    pairs = _event_pairs(preds, truth)
    if not pairs:
        return None
    return float(np.mean([np.sum((p.outcome_vector() - _onehot(p, r)) ** 2) for p, r in pairs]))


def ece_reliability(confidences, correct, bins: int = 10) -> tuple[float, list[dict]]:
    """Expected calibration error on equal-width bins over ``[0, 1]``."""
    conf = np.asarray(confidences, float).ravel()
    corr = np.asarray(correct, float).ravel()
    if bins < 2:
        raise ValueError("need at least 2 bins")
    if conf.size == 0:
        raise ValueError("empty input")
    if conf.shape != corr.shape:
        raise ValueError("confidences and correctness flags must align")
    if np.any(conf < 0) or np.any(conf > 1):
        raise ValueError("confidences must lie in [0, 1]")
    idx = np.minimum((conf * bins).astype(np.int64), bins - 1)
    n = conf.size
    ece = 0.0
    table = []
    for b in range(bins):
        sel = idx == b
        nb = int(sel.sum())
        row = {"bin": b, "lo": b / bins, "hi": (b + 1) / bins, "count": nb, "confidence": None, "accuracy": None}
        if nb:
            mc, acc = float(conf[sel].mean()), float(corr[sel].mean())
            row["confidence"], row["accuracy"] = mc, acc
            ece += nb / n * abs(acc - mc)
        table.append(row)
    return float(ece), table


def truncated_moving_average(values, window: int = 7) -> np.ndarray:
    """Trailing mean over the last ``window`` days, shorter at the start."""
    values = np.asarray(values, float)
    c = np.concatenate([[0.0], np.cumsum(values)])
    i = np.arange(len(values))
    lo = np.maximum(0, i - window + 1)
    return (c[i + 1] - c[lo]) / (i + 1 - lo)


def regime_probability_trace(state_probs, realized, window: int = 7) -> tuple[np.ndarray, np.ndarray]:
    """Daily mean probability on the realised regime and its moving average.

    Parameters
    ----------
    state_probs : ndarray, shape (days, n_agents, n_states)
    realized : ndarray of int, shape (days,)
    """
    state_probs = np.asarray(state_probs, float)
    realized = np.asarray(realized, dtype=np.int64)
    if state_probs.ndim == 2:
        state_probs = state_probs[:, None, :]
    if len(realized) != len(state_probs):
        raise ValueError(f"{len(realized)} regime labels for {len(state_probs)} days")
    if np.any(realized < 0) or np.any(realized >= state_probs.shape[2]):
        raise ValueError("regime label outside the state range")
    trace = state_probs[np.arange(len(realized)), :, realized].mean(axis=1)
    return trace, truncated_moving_average(trace, window)


def score_forecasts(preds, truth) -> dict:
    """All four event-time metrics plus the event-bearing count.

    Pairs whose truth record is ``None`` (outcome outside the forecast's
    state space) are skipped.
    """
    kept = [(p, r) for p, r in zip(preds, truth) if r is not None]
    preds = [p for p, _ in kept]
    truth = [r for _, r in kept]
    return {
        "eete": eete(preds, truth),
        "et_f1": et_f1(preds, truth),
        "nll": nll(preds, truth),
        "brier": brier(preds, truth),
        "n_events": sum(r.has_event for r in truth),
    }


def summarize_windows(per_window: Sequence[dict], keys=("eete", "et_f1", "nll", "brier")) -> dict:
    """Mean and population std of each metric over windows that define it."""
    out = {}
    for k in keys:
        vals = [w[k] for w in per_window if w.get(k) is not None]
        out[k] = {
            "mean": float(np.mean(vals)) if vals else None,
            "std": float(np.std(vals)) if vals else None,
            "windows": len(vals),
        }
    return out
