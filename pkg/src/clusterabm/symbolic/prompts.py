"""Prompt templates with ``{PLACEHOLDER}`` substitution."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from ..core import StateSpace
from .context import ClusterContext

__all__ = [
    "PromptTemplate",
    "render_prompt",
    "placeholders",
    "META_TEMPLATE",
    "STATE_TEMPLATE",
    "ENTITY_TEMPLATE",
    "default_templates",
    "load_template",
    "meta_bindings",
    "state_bindings",
    "describe_schema",
]

_PLACEHOLDER = re.compile(r"\{([A-Z][A-Z0-9_]*)\}")

META_SCHEMA = {"regime_summary": "string"}
STATE_SCHEMA = {
    "transitions": [{"target_state": "string", "hazard": "number in [0,1]", "uncertainty": "number >= 0", "rationale": "string"}]
}


@dataclass(frozen=True)
class PromptTemplate:
    role: str
    text: str
    schema: Mapping = None

    def __post_init__(self):
        if self.role not in ("meta", "state", "entity"):
            raise ValueError(f"unknown prompt role {self.role!r}")

    @property
    def placeholders(self) -> tuple[str, ...]:
        return placeholders(self.text)


def placeholders(text: str) -> tuple[str, ...]:
    seen = []
    for m in _PLACEHOLDER.finditer(text):
        if m.group(1) not in seen:
            seen.append(m.group(1))
    return tuple(seen)


def render_prompt(template: PromptTemplate, bindings: Mapping[str, object]) -> str:
    """Substitute every placeholder; raise ``KeyError`` naming the first unbound one."""
    missing = [p for p in template.placeholders if p not in bindings]
    if missing:
        raise KeyError(f"unbound placeholder {missing[0]!r} in {template.role} template")

    def sub(m):
        return str(bindings[m.group(1)])

    return _PLACEHOLDER.sub(sub, template.text)


META_TEMPLATE = PromptTemplate(
    role="meta",
    schema=META_SCHEMA,
    text="""You coordinate one cluster of a population simulation and summarise its current regime.

Domain: {DOMAIN_NAME}
About the domain: {DOMAIN_DESCRIPTION}
States: {STATE_SET}
Allowed transitions: {TRANSITION_SET}
Rules and priors: {DOMAIN_RULES}
Cluster: {CLUSTER_ID} ({CLUSTER_SIZE} members)
Adjacent clusters: {NEIGHBOR_CLUSTER_IDS}
Exogenous signals: {EXTERNAL_CONTEXT}
Day: {CURRENT_TIMESTEP}

Read the state composition as a noisy sample of the cluster's latent mix.
Use only information up to day {CURRENT_TIMESTEP}.
Reply with JSON matching {RESPONSE_SCHEMA}.
""",
)

STATE_TEMPLATE = PromptTemplate(
    role="state",
    schema=STATE_SCHEMA,
    text="""You estimate daily transition hazards out of one state for one cluster.

Domain: {DOMAIN_NAME}
About the domain: {DOMAIN_DESCRIPTION}
States: {STATE_SET}
Origin state: {ORIGIN_STATE}
Outgoing transitions: {OUTGOING_TRANSITIONS}
Rules and priors: {DOMAIN_RULES}
Cluster: {CLUSTER_ID} ({CLUSTER_SIZE} members)
State distribution: {STATE_DISTRIBUTION}
Cluster summary: {CLUSTER_SUMMARY}
Adjacent clusters: {NEIGHBOR_CLUSTER_CONTEXT}
Exogenous signals: {EXTERNAL_CONTEXT}
Day: {CURRENT_TIMESTEP}

Give, for every outgoing transition, the per-day probability that a member
in {ORIGIN_STATE} makes it, with an uncertainty and a short reason.
Reply with JSON matching {RESPONSE_SCHEMA}.
""",
)

ENTITY_TEMPLATE = PromptTemplate(
    role="entity",
    schema=STATE_SCHEMA,
    text="""You adjust cluster-level hazards for one individual.

Entity: {ENTITY_ID} in cluster {CLUSTER_ID}, mode {MODE}
Profile: {ENTITY_PROFILE}
Current state: {CURRENT_STATE} of {STATE_SET}
Outgoing transitions: {OUTGOING_TRANSITIONS}
Cluster hazards: {CLUSTER_PROBABILITIES}
Neighbourhood: {NEIGHBOR_CONTEXT}
Exogenous signals: {EXTERNAL_CONTEXT}
Day: {CURRENT_TIMESTEP}

Reply with JSON matching {RESPONSE_SCHEMA}.
""",
)


def default_templates() -> dict[str, PromptTemplate]:
    return {"meta": META_TEMPLATE, "state": STATE_TEMPLATE, "entity": ENTITY_TEMPLATE}


def load_template(path, role: str) -> PromptTemplate:
    """Read a template text file; the schema defaults to the role's schema."""
    text = Path(path).read_text(encoding="utf-8")
    schema = META_SCHEMA if role == "meta" else STATE_SCHEMA
    return PromptTemplate(role=role, text=text, schema=schema)


def describe_schema(schema: Mapping) -> str:
    """Brace-free description of a response schema, safe to embed in prompts."""
    parts = []
    for key, kind in schema.items():
        if isinstance(kind, list):
            fields = ", ".join(f"{k} ({v})" for k, v in kind[0].items())
            parts.append(f"key {key}: a list of objects with {fields}")
        else:
            parts.append(f"key {key} ({kind})")
    return "a JSON object with " + "; ".join(parts)


def _fmt_vec(labels, values) -> str:
    return ", ".join(f"{lab}={float(v):.4f}" for lab, v in zip(labels, values))


def _external(ctx: ClusterContext) -> str:
    if not ctx.psi:
        return "none"
    return "; ".join(f"{k}: today={v:.4f}, 7-day mean={m:.4f}" for k, (v, m) in sorted(ctx.psi.items()))


def meta_bindings(ctx: ClusterContext, state_space: StateSpace, domain: str, description: str, rules_text: str) -> dict:
    return {
        "DOMAIN_NAME": domain,
        "DOMAIN_DESCRIPTION": description or domain,
        "STATE_SET": ",".join(state_space.states),
        "TRANSITION_SET": ",".join(state_space.transition_labels()),
        "DOMAIN_RULES": rules_text or "none",
        "CLUSTER_ID": ctx.cluster_id,
        "CLUSTER_SIZE": ctx.size,
        "NEIGHBOR_CLUSTER_IDS": ",".join(str(i) for i in ctx.neighbor_ids) or "none",
        "EXTERNAL_CONTEXT": _external(ctx),
        "CURRENT_TIMESTEP": ctx.t,
        "RESPONSE_SCHEMA": describe_schema(META_SCHEMA),
    }


def state_bindings(
    ctx: ClusterContext,
    state_space: StateSpace,
    origin: str,
    domain: str,
    description: str,
    rules_text: str,
    regime_summary: str,
) -> dict:
    outgoing = [state_space.transition_labels()[k] for k in state_space.outgoing(origin)]
    return {
        "DOMAIN_NAME": domain,
        "DOMAIN_DESCRIPTION": description or domain,
        "STATE_SET": ",".join(state_space.states),
        "ORIGIN_STATE": origin,
        "OUTGOING_TRANSITIONS": ",".join(outgoing) or "none",
        "DOMAIN_RULES": rules_text or "none",
        "CLUSTER_ID": ctx.cluster_id,
        "CLUSTER_SIZE": ctx.size,
        "STATE_DISTRIBUTION": _fmt_vec(state_space.states, ctx.phi),
        "CLUSTER_SUMMARY": regime_summary or "none",
        "NEIGHBOR_CLUSTER_CONTEXT": (
            f"edge fraction {ctx.psi_nbr_edge_fraction:.4f}; " + _fmt_vec(state_space.states, np.asarray(ctx.psi_nbr_phi))
        ),
        "EXTERNAL_CONTEXT": _external(ctx),
        "CURRENT_TIMESTEP": ctx.t,
        "RESPONSE_SCHEMA": describe_schema(STATE_SCHEMA),
    }
