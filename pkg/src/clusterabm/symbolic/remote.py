"""Remote chat-completion backend for the coordinating and state agents.

The transport is a callable taking a JSON-able request dict and returning the
decoded response dict, so tests can substitute an in-process fake. The
default transport posts to an OpenAI-style ``/chat/completions`` endpoint
configured through environment variables.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..core import StateSpace
from .context import ClusterContext
from .cost import CostLedger
from .oracle import RuleTable, SymbolicHazardEstimate, oracle_hazards
from .prompts import default_templates, meta_bindings, render_prompt, state_bindings

__all__ = [
    "ClientConfig",
    "AgentTeamConfig",
    "RemoteFlags",
    "SchemaError",
    "HttpxTransport",
    "remote_hazards",
    "remote_hazards_batch",
    "parse_state_response",
    "ENV_ENDPOINT",
    "ENV_API_KEY",
    "ENV_MODEL",
]

log = logging.getLogger(__name__)

ENV_ENDPOINT = "CLUSTERABM_ENDPOINT"
ENV_API_KEY = "CLUSTERABM_API_KEY"
ENV_MODEL = "CLUSTERABM_MODEL"


class SchemaError(ValueError):
    """A response did not match the structured schema."""


@dataclass(frozen=True)
class ClientConfig:
    endpoint: str | None = None
    api_key: str | None = None
    model: str = "gpt-4o-mini"
    temperature: Mapping[str, float] = field(default_factory=lambda: {"meta": 0.3, "state": 0.5, "entity": 0.5})
    max_tokens: Mapping[str, int] = field(default_factory=lambda: {"meta": 1500, "state": 800, "entity": 800})
    top_p: float = 0.9
    frequency_penalty: float = 0.1
    attempts: int = 3
    backoff: float = 0.5
    timeout: float = 60.0
    max_in_flight: int = 50

    @classmethod
    def from_env(cls, **overrides) -> "ClientConfig":
        env = {
            "endpoint": os.environ.get(ENV_ENDPOINT),
            "api_key": os.environ.get(ENV_API_KEY),
        }
        if os.environ.get(ENV_MODEL):
            env["model"] = os.environ[ENV_MODEL]
        env.update(overrides)
        return cls(**env)


@dataclass(frozen=True)
class AgentTeamConfig:
    """Which agents serve each cluster.

    ``state_agents`` lists origin states with a dedicated agent. A state
    with no outgoing transitions still costs a call when listed, which is
    how the five-agent epidemic team is configured.
    """

    state_agents: tuple[str, ...]
    meta: bool = True
    generalist: bool = False

    @classmethod
    def default(cls, state_space: StateSpace) -> "AgentTeamConfig":
        return cls(state_agents=state_space.origin_states)

    @classmethod
    def all_states(cls, state_space: StateSpace) -> "AgentTeamConfig":
        return cls(state_agents=tuple(state_space.states))

    @classmethod
    def single_generalist(cls) -> "AgentTeamConfig":
        return cls(state_agents=("*",), generalist=True)

    @property
    def calls_per_cluster(self) -> int:
        return int(self.meta) + len(self.state_agents)


@dataclass
class RemoteFlags:
    fallback: list = field(default_factory=list)
    clamped: list = field(default_factory=list)
    retries: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add_retry(self):
        with self._lock:
            self.retries += 1

    def as_dict(self) -> dict:
        return {"fallback": sorted(self.fallback), "clamped": sorted(self.clamped), "retries": self.retries}


class HttpxTransport:
    """POST the request to ``endpoint`` with bearer authentication."""

    def __init__(self, config: ClientConfig):
        if not config.endpoint:
            raise RuntimeError(f"remote backend needs an endpoint; set {ENV_ENDPOINT}")
        import httpx

        headers = {"Content-Type": "application/json"}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._client = httpx.Client(timeout=config.timeout, headers=headers)
        self._endpoint = config.endpoint

    def __call__(self, request: dict) -> dict:
        resp = self._client.post(self._endpoint, json=request)
        resp.raise_for_status()
        return resp.json()


class _Bounded:
    """Caps the number of requests in flight across all worker threads."""

    def __init__(self, transport, cap: int):
        self._transport = transport
        self._sem = threading.BoundedSemaphore(cap)

    def __call__(self, request: dict) -> dict:
        with self._sem:
            return self._transport(request)


def _content(response: dict) -> str:
    try:
        return response["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise SchemaError(f"response has no message content: {exc}") from exc


def _loads(text: str) -> dict:
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise SchemaError(f"response is not JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaError("response must be a JSON object")
    return obj


def parse_state_response(text: str, expected_targets: Sequence[str]) -> dict[str, tuple[float, float, str]]:
    """Map target state to ``(hazard, uncertainty, rationale)``; raw values, unclamped."""
    obj = _loads(text)
    items = obj.get("transitions")
    if not isinstance(items, list):
        raise SchemaError("missing 'transitions' list")
    out = {}
    for item in items:
        if not isinstance(item, dict):
            raise SchemaError("transition entries must be objects")
        try:
            target = str(item["target_state"])
            hazard = float(item["hazard"])
            unc = float(item.get("uncertainty", 0.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad transition entry {item!r}") from exc
        if not (np.isfinite(hazard) and np.isfinite(unc)):
            raise SchemaError("non-finite hazard or uncertainty")
        out[target] = (hazard, unc, str(item.get("rationale", "")))
    missing = [t for t in expected_targets if t not in out]
    if missing:
        raise SchemaError(f"no estimate for targets {missing}")
    return out


def _call_with_retry(transport, request, parse, config: ClientConfig, sleep, flags: RemoteFlags):
    """Issue ``request`` until ``parse`` succeeds, at most ``config.attempts`` times."""
    last = None
    for attempt in range(config.attempts):
        if attempt:
            flags.add_retry()
            sleep(config.backoff * 2 ** (attempt - 1))
        try:
            response = transport(request)
            text = _content(response)
            return parse(text), text
        except Exception as exc:  # transport and schema errors both retry
            last = exc
            log.warning("remote call attempt %d failed: %s", attempt + 1, exc)
    raise last


def _request(config: ClientConfig, role: str, prompt: str) -> dict:
    return {
        "model": config.model,
        "messages": [{"role": "system", "content": prompt}],
        "temperature": config.temperature.get(role, 0.5),
        "max_tokens": config.max_tokens.get(role, 800),
        "top_p": config.top_p,
        "frequency_penalty": config.frequency_penalty,
        "response_format": {"type": "json_object"},
    }


def remote_hazards(
    ctx: ClusterContext,
    state_space: StateSpace,
    rules: RuleTable,
    team: AgentTeamConfig,
    config: ClientConfig,
    transport: Callable[[dict], dict] | None = None,
    ledger: CostLedger | None = None,
    templates=None,
    sleep=time.sleep,
    flags: RemoteFlags | None = None,
    executor: ThreadPoolExecutor | None = None,
) -> SymbolicHazardEstimate:
    """Coordinator first, then state agents concurrently; oracle fallback per transition."""
    templates = templates or default_templates()
    transport = transport or HttpxTransport(config)
    flags = flags if flags is not None else RemoteFlags()
    oracle = oracle_hazards(ctx, rules, state_space)
    rules_text = rules.describe()
    labels = state_space.transition_labels()

    summary = ""
    if team.meta:
        prompt = render_prompt(templates["meta"], meta_bindings(ctx, state_space, rules.domain, rules.description, rules_text))
        t0 = time.perf_counter()
        try:
            summary_obj, text = _call_with_retry(
                transport, _request(config, "meta", prompt), _loads, config, sleep, flags
            )
            summary = str(summary_obj.get("regime_summary", ""))
        except Exception as exc:
            text = ""
            summary = f"(summary unavailable: {exc})"
            flags.fallback.append((ctx.cluster_id, ctx.t, "meta"))
        if ledger is not None:
            ledger.record(ctx.t, "meta", len(prompt), len(text), time.perf_counter() - t0)

    def ask(origin: str):
        if team.generalist:
            idx = list(range(state_space.n_transitions))
            origins = state_space.origin_states
            prompt = "\n".join(
                render_prompt(
                    templates["state"],
                    state_bindings(ctx, state_space, o, rules.domain, rules.description, rules_text, summary),
                )
                for o in origins
            )
        else:
            idx = state_space.outgoing(origin) if origin in state_space.states else []
            prompt = render_prompt(
                templates["state"],
                state_bindings(ctx, state_space, origin, rules.domain, rules.description, rules_text, summary),
            )
        targets = [state_space.transitions[k][1] for k in idx]
        keyed = [labels[k] for k in idx]

        def parse(text):
            if team.generalist:
                obj = _loads(text)
                items = obj.get("transitions")
                if not isinstance(items, list):
                    raise SchemaError("missing 'transitions' list")
                by_label = {}
                for it in items:
                    lab = f"{it.get('origin_state', '')}->{it.get('target_state', '')}"
                    by_label[lab] = (float(it["hazard"]), float(it.get("uncertainty", 0.0)), str(it.get("rationale", "")))
                miss = [k for k in keyed if k not in by_label]
                if miss:
                    raise SchemaError(f"no estimate for {miss}")
                return {k: by_label[k] for k in keyed}
            got = parse_state_response(text, targets)
            return {lab: got[tg] for lab, tg in zip(keyed, targets)}

        t0 = time.perf_counter()
        try:
            parsed, text = _call_with_retry(transport, _request(config, "state", prompt), parse, config, sleep, flags)
        except Exception as exc:
            log.warning("cluster %d day %d origin %s: falling back to oracle (%s)", ctx.cluster_id, ctx.t, origin, exc)
            parsed, text = None, ""
        if ledger is not None:
            ledger.record(ctx.t, "state", len(prompt), len(text), time.perf_counter() - t0)
        return origin, idx, parsed

    origins = list(team.state_agents)
    if executor is not None:
        answers = list(executor.map(ask, origins))
    elif len(origins) > 1:
        with ThreadPoolExecutor(max_workers=len(origins)) as pool:
            answers = list(pool.map(ask, origins))
    else:
        answers = [ask(o) for o in origins]

    lam = oracle.hazards.copy()
    unc = oracle.uncertainty.copy()
    clamped = np.zeros(state_space.n_transitions, dtype=bool)
    fallback = np.ones(state_space.n_transitions, dtype=bool)
    rationale = []
    # assemble by transition key so completion order never matters
    for origin, idx, parsed in sorted(answers, key=lambda a: a[0]):
        for k in idx:
            if parsed is None:
                continue
            h, u, why = parsed[labels[k]]
            if h < 0 or h > 1:
                clamped[k] = True
                flags.clamped.append((ctx.cluster_id, ctx.t, labels[k]))
            lam[k] = min(max(h, 0.0), 1.0)
            unc[k] = max(u, 0.0)
            fallback[k] = False
            rationale.append(f"{labels[k]}: {why}")
    for k in np.flatnonzero(fallback):
        flags.fallback.append((ctx.cluster_id, ctx.t, labels[k]))
    return SymbolicHazardEstimate(
        hazards=lam, uncertainty=unc, rationale="; ".join(rationale), clamped=clamped, fallback=fallback
    )


def remote_hazards_batch(
    contexts: Sequence[ClusterContext],
    state_space: StateSpace,
    rules: RuleTable,
    team: AgentTeamConfig,
    config: ClientConfig,
    transport=None,
    ledger: CostLedger | None = None,
    templates=None,
    sleep=time.sleep,
    flags: RemoteFlags | None = None,
) -> list[SymbolicHazardEstimate]:
    """All clusters of one day, with at most ``config.max_in_flight`` concurrent requests."""
    transport = _Bounded(transport or HttpxTransport(config), max(1, config.max_in_flight))
    flags = flags if flags is not None else RemoteFlags()
    with ThreadPoolExecutor(max_workers=max(1, config.max_in_flight)) as pool:
        futures = [
            pool.submit(remote_hazards, ctx, state_space, rules, team, config, transport, ledger, templates, sleep, flags)
            for ctx in contexts
        ]
        return [f.result() for f in futures]
