"""Invocation and token accounting for the symbolic pathway."""

from __future__ import annotations

import math
import threading
from collections import defaultdict
from dataclasses import dataclass, field

__all__ = ["CostLedger", "CostModel", "estimate_tokens", "project_costs", "TABLE_ALPHAS"]

TABLE_ALPHAS = (1.0, 0.75, 0.6)


def estimate_tokens(chars: int) -> int:
    """Rough tokenizer-free estimate, ``ceil(chars / 4)``."""
    if chars < 0:
        raise ValueError("character count must be >= 0")
    return math.ceil(chars / 4)


@dataclass(frozen=True)
class CostModel:
    """Accounting constants for flat and hierarchical architectures.

    The flat baseline charges ``c_flat`` calls per agent per step. The
    hierarchical model charges ``M * (1 + team_size)`` cluster calls, a
    fixed ``aux_calls`` budget (regime summaries, diagnostics), and
    ``alpha * N * entity_calls_per_agent`` entity calls. Token counts follow
    the same split, with per-call slopes and a fixed prompt intercept.
    """

    c_flat: float = 8.25
    flat_prompt_tokens_per_agent: float = 2000.0
    flat_completion_tokens_per_agent: float = 300.0
    aux_calls: int = 59
    entity_calls_per_agent: float = 1.0
    entity_prompt_tokens: float = 500.0
    entity_completion_tokens: float = 250.0
    cluster_prompt_tokens: float = 40000.0


@dataclass
class CostLedger:
    """Per-timestep invocation counts and token estimates.

    Appends are serialised through a lock so concurrent callers can share
    one ledger.
    """

    alpha: float = 1.0
    n_agents: int = 0
    records: dict = field(default_factory=lambda: defaultdict(lambda: defaultdict(lambda: [0, 0, 0, 0.0])))
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")

    def record(self, t: int, role: str, prompt_chars: int, completion_chars: int, seconds: float = 0.0):
        """Count one invocation; token estimates use ``ceil(chars / 4)``."""
        with self._lock:
            rec = self.records[int(t)][role]
            rec[0] += 1
            rec[1] += estimate_tokens(prompt_chars)
            rec[2] += estimate_tokens(completion_chars)
            rec[3] += seconds
        return self

    def calls(self, t: int | None = None, role: str | None = None) -> int:
        days = [t] if t is not None else list(self.records)
        total = 0
        for d in days:
            for r, rec in self.records.get(d, {}).items():
                if role is None or r == role:
                    total += rec[0]
        return total

    def summarize(self, model: CostModel = CostModel()) -> dict:
        per_t = {}
        for t in sorted(self.records):
            roles = self.records[t]
            per_t[t] = {
                "calls": {r: rec[0] for r, rec in sorted(roles.items())},
                "prompt_tokens": sum(rec[1] for rec in roles.values()),
                "completion_tokens": sum(rec[2] for rec in roles.values()),
                "seconds": sum(rec[3] for rec in roles.values()),
            }
        steps = len(per_t)
        mean_calls = sum(sum(v["calls"].values()) for v in per_t.values()) / steps if steps else 0.0
        flat = model.c_flat * self.n_agents
        return {
            "alpha": self.alpha,
            "n_agents": self.n_agents,
            "per_timestep": per_t,
            "mean_calls_per_timestep": mean_calls,
            "flat_calls_per_timestep": flat,
            "reduction_ratio": (flat / mean_calls) if mean_calls > 0 else None,
        }


def project_costs(N: int, M: int, team_size: int, alpha: float, model: CostModel = CostModel()) -> dict:
    """Per-timestep calls and tokens for flat and hierarchical architectures.

    ``team_size`` counts state agents per cluster; each cluster also has one
    coordinating agent.
    """
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    flat_calls = model.c_flat * N
    flat_prompt = model.flat_prompt_tokens_per_agent * N
    flat_completion = model.flat_completion_tokens_per_agent * N
    entity = alpha * N * model.entity_calls_per_agent
    cluster = M * (1 + team_size)
    hier_calls = cluster + model.aux_calls + entity
    hier_prompt = model.cluster_prompt_tokens + model.entity_prompt_tokens * entity
    hier_completion = model.entity_completion_tokens * entity
    return {
        "N": N,
        "M": M,
        "alpha": alpha,
        "flat": {
            "calls": flat_calls,
            "prompt_tokens": flat_prompt,
            "completion_tokens": flat_completion,
            "total_tokens": flat_prompt + flat_completion,
        },
        "hierarchical": {
            "calls": hier_calls,
            "cluster_calls": cluster,
            "aux_calls": model.aux_calls,
            "entity_calls": entity,
            "prompt_tokens": hier_prompt,
            "completion_tokens": hier_completion,
            "total_tokens": hier_prompt + hier_completion,
        },
        "call_reduction": flat_calls / hier_calls if hier_calls else math.inf,
        "token_reduction": (flat_prompt + flat_completion) / (hier_prompt + hier_completion),
    }
