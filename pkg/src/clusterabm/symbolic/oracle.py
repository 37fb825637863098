"""Deterministic mechanistic rule tables standing in for state-specialised agents."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from ..core import StateSpace
from .context import ClusterContext

__all__ = [
    "Rule",
    "RuleTable",
    "SymbolicHazardEstimate",
    "oracle_hazards",
    "evaluate_rule",
    "seird_rules",
    "market_rules",
    "attention_rules",
    "generalist_rules",
    "U_MECHANISTIC",
    "U_REGIME",
]

U_MECHANISTIC = 0.05
U_REGIME = 0.25

_KINDS = ("constant", "reciprocal", "contact", "signal")


@dataclass(frozen=True)
class Rule:
    """One closed-form hazard rule.

    Kinds
    -----
    constant
        ``value``.
    reciprocal
        ``1 / days``.
    contact
        ``beta * drive * policy * (1 + gain * signal)`` where ``drive`` blends
        the cluster's and neighbouring clusters' fractions in the driver
        states, ``(1 - kappa) * own + kappa * nbr``; ``policy`` is
        ``clip(1 - effect * value(policy_series), 0, 1)`` and ``signal`` the
        current value of ``signal_series``.
    signal
        ``base * exp(coef * x) * (1 + herd * phi_target)`` with ``x`` the
        current value (``feature="value"``) or its departure from the
        trailing mean (``feature="change"``) of ``series``.

    ``cluster_scale`` multiplies the hazard of specific clusters.
    """

    kind: str
    params: Mapping[str, object] = field(default_factory=dict)
    uncertainty: float | None = None
    cluster_scale: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}")

    @property
    def u(self) -> float:
        if self.uncertainty is not None:
            return float(self.uncertainty)
        return U_MECHANISTIC if self.kind in ("constant", "reciprocal") else U_REGIME


@dataclass(frozen=True)
class RuleTable:
    domain: str
    rules: Mapping[str, Rule]
    description: str = ""

    def check(self, state_space: StateSpace):
        missing = [lab for lab in state_space.transition_labels() if lab not in self.rules]
        if missing:
            raise KeyError(f"rule table {self.domain!r} has no rule for {missing}")

    def with_rule(self, label: str, rule: Rule) -> "RuleTable":
        rules = dict(self.rules)
        rules[label] = rule
        return replace(self, rules=rules)

    def scaled(self, label: str, cluster_scale: Mapping[int, float]) -> "RuleTable":
        return self.with_rule(label, replace(self.rules[label], cluster_scale=dict(cluster_scale)))

    def describe(self) -> str:
        lines = []
        for lab, r in self.rules.items():
            ps = ", ".join(f"{k}={v}" for k, v in sorted(r.params.items()))
            lines.append(f"{lab}: {r.kind}({ps})")
        return "; ".join(lines)


@dataclass(frozen=True)
class SymbolicHazardEstimate:
    hazards: np.ndarray
    uncertainty: np.ndarray
    rationale: str = ""
    clamped: np.ndarray | None = None
    fallback: np.ndarray | None = None

    def __post_init__(self):
        h = np.asarray(self.hazards, float)
        if np.any(h < 0) or np.any(h > 1):
            raise ValueError("symbolic hazards must lie in [0, 1]")
        if np.any(np.asarray(self.uncertainty) < 0):
            raise ValueError("uncertainty must be >= 0")


def _psi_value(ctx: ClusterContext, series: str, feature: str = "value") -> float:
    if series not in ctx.psi:
        raise KeyError(f"context has no exogenous series {series!r}")
    v, m = ctx.psi[series]
    return v if feature == "value" else v - m


def evaluate_rule(rule: Rule, transition: tuple[str, str], ctx: ClusterContext, state_space: StateSpace):
    """Raw hazard (before clamping) and a one-line trace."""
    p = rule.params
    if rule.kind == "constant":
        lam = float(p["value"])
        trace = f"constant {lam:.6g}"
    elif rule.kind == "reciprocal":
        lam = 1.0 / float(p["days"])
        trace = f"1/{p['days']}"
    elif rule.kind == "contact":
        drivers = p.get("drivers") or state_space.contact_driven.get(tuple(transition), ())
        if not drivers:
            raise ValueError(f"contact rule on {transition} needs driver states")
        kappa = float(p.get("kappa", 0.2))
        own = sum(ctx.phi_of(s) for s in drivers)
        nbr = sum(ctx.nbr_phi_of(s) for s in drivers)
        drive = (1 - kappa) * own + kappa * nbr
        policy = 1.0
        if p.get("policy_series"):
            policy = min(max(1.0 - float(p.get("policy_effect", 1.0)) * _psi_value(ctx, p["policy_series"]), 0.0), 1.0)
        boost = 1.0
        if p.get("signal_series"):
            boost = max(1.0 + float(p.get("gain", 1.0)) * _psi_value(ctx, p["signal_series"]), 0.0)
        lam = float(p["beta"]) * drive * policy * boost
        trace = f"beta={p['beta']} * drive={drive:.6g} * policy={policy:.6g} * signal={boost:.6g}"
    else:  # signal
        x = _psi_value(ctx, p["series"], p.get("feature", "value"))
        herd = float(p.get("herd", 0.0))
        target = ctx.phi_of(transition[1]) if herd else 0.0
        lam = float(p["base"]) * math.exp(float(p.get("coef", 0.0)) * x) * (1.0 + herd * target)
        trace = f"base={p['base']} * exp({p.get('coef', 0.0)} * {x:.6g}) * herd={1.0 + herd * target:.6g}"
    scale = float(rule.cluster_scale.get(ctx.cluster_id, 1.0))
    if scale != 1.0:
        lam *= scale
        trace += f" * cluster_scale={scale:g}"
    return lam, trace


def oracle_hazards(ctx: ClusterContext, rules: RuleTable, state_space: StateSpace) -> SymbolicHazardEstimate:
    """Evaluate the rule table on a context; a pure function of its inputs."""
    rules.check(state_space)
    lam = np.zeros(state_space.n_transitions)
    u = np.zeros(state_space.n_transitions)
    traces = []
    for k, (lab, tr) in enumerate(zip(state_space.transition_labels(), state_space.transitions)):
        rule = rules.rules[lab]
        raw, trace = evaluate_rule(rule, tr, ctx, state_space)
        lam[k] = raw
        u[k] = rule.u
        traces.append(f"{lab}: {trace}")
    clamped = (lam < 0) | (lam > 1)
    return SymbolicHazardEstimate(
        hazards=np.clip(lam, 0.0, 1.0),
        uncertainty=u,
        rationale="; ".join(traces),
        clamped=clamped,
        fallback=np.zeros(state_space.n_transitions, dtype=bool),
    )


def seird_rules(
    beta: float = 0.35,
    incubation_days: float = 5.0,
    recovery_days: float = 10.0,
    mortality: float = 0.01,
    waning: float = 0.005,
    kappa: float = 0.2,
    policy_series: str | None = "stringency",
) -> RuleTable:
    rules = {
        "S->E": Rule("contact", {"beta": beta, "kappa": kappa, "policy_series": policy_series, "policy_effect": 1.0}),
        "E->I": Rule("reciprocal", {"days": incubation_days}),
        "I->R": Rule("reciprocal", {"days": recovery_days}),
        "I->D": Rule("constant", {"value": mortality}),
        "R->S": Rule("constant", {"value": waning}),
    }
    return RuleTable(domain="seird", rules=rules, description="contact-driven infection with policy-dependent transmission")


def market_rules(base: float = 0.04, coef: float = 40.0, herd: float = 1.0, series: str = "index_return") -> RuleTable:
    """Sentiment switching driven by recent index returns and herding."""
    up, down = coef, -coef
    rules = {
        "Bearish->Bullish": Rule("signal", {"base": base, "series": series, "coef": up, "herd": herd}),
        "Bearish->Neutral": Rule("signal", {"base": 2 * base, "series": series, "coef": up / 2, "herd": herd}),
        "Neutral->Bullish": Rule("signal", {"base": 2 * base, "series": series, "coef": up, "herd": herd}),
        "Neutral->Bearish": Rule("signal", {"base": 2 * base, "series": series, "coef": down, "herd": herd}),
        "Bullish->Neutral": Rule("signal", {"base": 2 * base, "series": series, "coef": down / 2, "herd": herd}),
        "Bullish->Bearish": Rule("signal", {"base": base, "series": series, "coef": down, "herd": herd}),
    }
    return RuleTable(domain="market", rules=rules, description="momentum-driven sentiment regimes with herding")


def attention_rules(
    beta: float = 0.25, gain: float = 2.0, fatigue_days: float = 12.0, reset: float = 0.01, series: str = "attention"
) -> RuleTable:
    rules = {
        "Unaware->Interested": Rule(
            "contact", {"beta": beta, "kappa": 0.3, "signal_series": series, "gain": gain, "drivers": ("Interested",)}
        ),
        "Interested->Fatigued": Rule("reciprocal", {"days": fatigue_days}),
        "Fatigued->Unaware": Rule("constant", {"value": reset}),
    }
    return RuleTable(domain="attention", rules=rules, description="social contagion of attention with fatigue")


def generalist_rules(rules: RuleTable, state_space: StateSpace) -> RuleTable:
    """Collapse a table to one rule of each mechanistic kind.

    Models routing every transition through a single generalist: every
    transition gets the same constant hazard, the mean of the original
    table's constant and reciprocal rates, while contact and signal rules
    keep their form but lose policy awareness.
    """
    consts = []
    for r in rules.rules.values():
        if r.kind == "constant":
            consts.append(float(r.params["value"]))
        elif r.kind == "reciprocal":
            consts.append(1.0 / float(r.params["days"]))
    shared = float(np.mean(consts)) if consts else 0.05
    out = {}
    for lab, r in rules.rules.items():
        if r.kind in ("constant", "reciprocal"):
            out[lab] = Rule("constant", {"value": shared}, U_REGIME, r.cluster_scale)
        elif r.kind == "contact":
            params = {k: v for k, v in r.params.items() if k != "policy_series"}
            out[lab] = Rule("contact", params, U_REGIME, r.cluster_scale)
        else:
            out[lab] = Rule(r.kind, r.params, U_REGIME, r.cluster_scale)
    return RuleTable(domain=rules.domain + "_generalist", rules=out, description=rules.description)
