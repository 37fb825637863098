"""Competing-risk realisation of per-day hazards."""

from __future__ import annotations

import numpy as np

__all__ = [
    "P_CAP",
    "SAMPLERS",
    "hazard_rates",
    "outcome_probabilities",
    "sample_competing",
    "sample_transition",
]

P_CAP = 1.0 - 1e-12
SAMPLERS = ("exponential", "weights")


def hazard_rates(p) -> np.ndarray:
    """Continuous-time rates ``-ln(1 - min(p, 1 - 1e-12))``."""
    p = np.asarray(p, float)
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("hazards must be finite and lie in [0, 1]")
    return -np.log1p(-np.minimum(p, P_CAP))


def _row_total(x: np.ndarray) -> np.ndarray:
    # sequential left-to-right sum so scalar and batch paths agree bit for bit
    total = np.zeros(x.shape[:-1])
    for k in range(x.shape[-1]):
        total = total + x[..., k]
    return total


def outcome_probabilities(p, sampler: str = "exponential") -> tuple[np.ndarray, np.ndarray]:
    """Stay probability and per-type event probabilities.

    Parameters
    ----------
    p : ndarray, shape (..., n_types)
        Per-day hazards of the outgoing transitions (zeros elsewhere).
    sampler : {"exponential", "weights"}
        ``exponential`` converts hazards to rates and splits the event mass
        ``1 - exp(-sum r)`` in proportion to the rates. ``weights`` treats
        the hazards as unnormalised weights next to a unit persistence
        weight.

    Returns
    -------
    stay : ndarray, shape (...)
    types : ndarray, shape (..., n_types)
    """
    p = np.asarray(p, float)
    if sampler == "exponential":
        r = hazard_rates(p)
        tot = _row_total(r)
        stay = np.exp(-tot)
        safe = np.where(tot > 0, tot, 1.0)
        types = ((1.0 - stay) / safe)[..., None] * r
    elif sampler == "weights":
        hazard_rates(p)  # validation only
        tot = 1.0 + _row_total(p)
        stay = 1.0 / tot
        types = p / tot[..., None]
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    return stay, types


def sample_competing(p, u, sampler: str = "exponential") -> np.ndarray:
    """Realised outcome per row: ``-1`` for no event, else the type column.

    One uniform per row decides both whether an event happens and which one:
    the event region ``[0, 1 - stay)`` is partitioned in column order.
    """
    p = np.atleast_2d(np.asarray(p, float))
    u = np.asarray(u, float).reshape(-1)
    if len(u) != len(p):
        raise ValueError("need one uniform per row")
    _, types = outcome_probabilities(p, sampler)
    out = np.full(len(p), -1, dtype=np.int64)
    edge = np.zeros(len(p))
    for k in range(p.shape[1]):
        nxt = edge + types[:, k]
        hit = (out < 0) & (types[:, k] > 0) & (u >= edge) & (u < nxt)
        out[hit] = k
        edge = nxt
    return out


def sample_transition(hazards, u: float, sampler: str = "exponential") -> int:
    """Single-agent form of :func:`sample_competing`."""
    return int(sample_competing(np.asarray(hazards, float)[None, :], [u], sampler)[0])
