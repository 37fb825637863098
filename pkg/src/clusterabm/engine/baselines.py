"""Reference forecasters: fixed-rule ABM and a mean-field Markov chain."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .. import metrics as _metrics
from .. import rng as _rng
from ..core import StateSpace
from ..symbolic.oracle import Rule, RuleTable
from .rolling import RollingConfig, RollingResult, ScenarioData, WindowResult, rolling_window_run, truth_events, window_starts

__all__ = ["BASELINES", "freeze_rules", "MarkovFit", "fit_mf_markov", "run_baseline"]

log = logging.getLogger(__name__)

BASELINES = ("rule_abm", "mf_markov")


def freeze_rules(rules: RuleTable, exogenous, exo_names, days) -> RuleTable:
    """Replace exogenous dependence by constants averaged over ``days``.

    Contact rules lose their policy and signal terms, which are folded into
    ``beta``; signal rules get their exponent fixed. The result never reacts
    to a regime change after ``days``.
    """
    exo = np.asarray(exogenous, float).reshape(len(exogenous), -1)
    days = list(days)

    def mean_of(series, feature="value"):
        col = exo[days, list(exo_names).index(series)]
        if feature == "change":
            return 0.0
        return float(col.mean())

    out = {}
    for lab, r in rules.rules.items():
        p = dict(r.params)
        if r.kind == "contact":
            mult = 1.0
            if p.get("policy_series"):
                mult *= min(max(1.0 - float(p.get("policy_effect", 1.0)) * mean_of(p["policy_series"]), 0.0), 1.0)
            if p.get("signal_series"):
                mult *= max(1.0 + float(p.get("gain", 1.0)) * mean_of(p["signal_series"]), 0.0)
            p["beta"] = float(p["beta"]) * mult
            p.pop("policy_series", None)
            p.pop("signal_series", None)
            out[lab] = Rule("contact", p, r.uncertainty, r.cluster_scale)
        elif r.kind == "signal":
            x = mean_of(p["series"], p.get("feature", "value"))
            p["base"] = float(p["base"]) * float(np.exp(float(p.get("coef", 0.0)) * x))
            p["coef"] = 0.0
            out[lab] = Rule("signal", p, r.uncertainty, r.cluster_scale)
        else:
            out[lab] = r
    return RuleTable(domain=rules.domain + "_fixed", rules=out, description=rules.description)


@dataclass(frozen=True)
class MarkovFit:
    """Row-stochastic daily transition matrix ``P[s, s']`` and fallback rows."""

    P: np.ndarray
    counts: np.ndarray
    fallback: tuple[str, ...]


def fit_mf_markov(truth, days, state_space: StateSpace) -> MarkovFit:
    """Maximum-likelihood transition matrix with add-one smoothing.

    Each origin row has one cell per admissible target plus staying; with
    ``n_s`` observed agent-days in ``s`` and ``c`` moves to a target,
    ``P[s, target] = (c + 1) / (n_s + n_cells)``. Rows without any
    observation fall back to uniform and are flagged. Terminal rows stay.
    """
    truth = np.asarray(truth, dtype=np.int64)
    S = state_space.n_states
    C = np.zeros((S, S))
    for t in days:
        np.add.at(C, (truth[:, t], truth[:, t + 1]), 1.0)
    P = np.eye(S)
    fallback = []
    for s in range(S):
        cells = [s] + [int(state_space.target_of[k]) for k in state_space.outgoing(s)]
        if len(cells) == 1:
            continue
        n_s = C[s].sum()
        P[s] = 0.0
        if n_s == 0:
            P[s, cells] = 1.0 / len(cells)
            fallback.append(state_space.states[s])
            continue
        for c in cells:
            P[s, c] = (C[s, c] + 1.0) / (n_s + len(cells))
    return MarkovFit(P=P, counts=C, fallback=tuple(fallback))


def _markov_window(data: ScenarioData, w: int, cfg: RollingConfig) -> WindowResult:
    ss = data.state_space
    s0 = w + cfg.L - 1
    fit = fit_mf_markov(data.truth, range(w, s0), ss)
    agents, records = truth_events(data.truth, s0, cfg.H, ss)
    labels = ss.transition_labels()
    preds = []
    for a in agents:
        o = int(data.truth[a, s0])
        idx = ss.outgoing(o)
        p_types = np.array([fit.P[o, ss.target_of[k]] for k in idx])
        stay = fit.P[o, o]
        surv = stay ** np.arange(cfg.H)
        preds.append(_metrics.JointEventDistribution(
            origin=ss.states[o], types=tuple(labels[k] for k in idx),
            probs=surv[:, None] * p_types[None, :], none=float(stay**cfg.H),
        ))
    # realised trajectories from the same chain with counter-based draws
    states = data.truth[:, s0].copy()
    traj = [states.copy()]
    cum = np.cumsum(fit.P, axis=1)
    for d in range(cfg.H):
        u = _rng.uniforms(cfg.seed, s0 + d, np.arange(data.n), _rng.STREAM_SAMPLER, 0)
        states = np.minimum((u[:, None] >= cum[states]).sum(axis=1), ss.n_states - 1)
        traj.append(states.copy())
    return WindowResult(
        start=w, agents=agents, predictions=preds, truth=records,
        metrics=_metrics.score_forecasts(preds, records), generator_mae=None, trace=[],
        trajectories=np.column_stack(traj)[None], seconds=[], symbolic_calls=0, contexts_per_step=0,
        flags={"fallback_rows": list(fit.fallback), "P": fit.P.tolist()},
    )


def run_baseline(kind: str, data: ScenarioData, cfg: RollingConfig = RollingConfig(), windows=None) -> RollingResult:
    """Rolling evaluation of a reference forecaster.

    ``rule_abm`` runs the symbolic rules, frozen to their lookback regime,
    on a single population-wide cluster with the same entity-level sampler.
    ``mf_markov`` applies one population-level daily transition matrix to
    every agent.
    """
    kind = kind.replace("-", "_")
    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}")
    starts = window_starts(data.T, cfg.L, cfg.H) if windows is None else list(windows)
    if kind == "mf_markov":
        return RollingResult(windows=[_markov_window(data, w, cfg) for w in starts], config=cfg)
    single = np.zeros(data.n, dtype=np.int64)
    rcfg = replace(cfg, pathway="oracle", fusion_mode="default_reciprocal")
    out = []
    for w in starts:
        frozen = freeze_rules(data.rules, data.exogenous, data.exo_names, range(w, w + cfg.L))
        res = rolling_window_run(replace(data, generator_rules=None), rcfg, rules=frozen, labels=single, windows=[w])
        out.extend(res.windows)
    return RollingResult(windows=out, config=rcfg)
