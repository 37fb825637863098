"""Rolling-window forecasting: fit on a lookback, reset to truth, simulate ahead."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .. import metrics as _metrics
from .. import rng as _rng
from ..core import InteractionGraph, Population, StateSpace
from ..fusion import calibrator_features, train_calibrator
from ..neural import TrainConfig, class_weights, empirical_targets, make_manifest, raw_features, train_regressor
from ..symbolic.context import assemble_contexts, cluster_graph
from ..symbolic.cost import CostLedger
from ..symbolic.oracle import RuleTable, oracle_hazards
from ..symbolic.remote import AgentTeamConfig
from .world import (
    NeuralPathway,
    PathwayConfig,
    agent_hazards,
    cluster_hazards,
    cluster_stats,
    make_world,
    phi_matrix,
    step,
)

__all__ = [
    "ScenarioData",
    "RollingConfig",
    "WindowResult",
    "RollingResult",
    "TRACE_COLUMNS",
    "window_starts",
    "transition_counts",
    "truth_events",
    "fit_neural",
    "calibration_records",
    "fit_calibrator",
    "rolling_window_run",
]

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "window", "replicate", "day", "cluster", "transition",
    "lam_sym", "u_sym", "lam_neu", "u_neu", "c_sym", "c_neu", "lam_fused", "lam_generator",
)


@dataclass
class ScenarioData:
    """A scenario with its observed truth trajectories.

    ``truth`` is ``(n, T)`` state indices; ``rules`` is the symbolic prior
    and ``generator_rules`` (if known) the table that produced the truth.
    ``embedding`` holds per-agent structural embedding rows for the graph
    features of the neural pathway.
    """

    domain: str
    state_space: StateSpace
    graph: InteractionGraph
    population: Population
    labels: np.ndarray
    exogenous: np.ndarray
    exo_names: tuple[str, ...]
    truth: np.ndarray
    rules: RuleTable
    generator_rules: RuleTable | None = None
    embedding: np.ndarray | None = None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def T(self) -> int:
        return self.truth.shape[1]

    def with_truth(self, truth) -> "ScenarioData":
        return replace(self, truth=np.asarray(truth, dtype=np.int64))


@dataclass(frozen=True)
class RollingConfig:
    L: int = 28
    H: int = 7
    pathway: str = "fused"
    fusion_mode: str = "default_reciprocal"
    symbolic_backend: str = "oracle"
    train: TrainConfig = TrainConfig()
    feature_window: int = 7
    max_instances: int = 512
    calibration_days: int = 7
    replicates: int = 1
    sampler: str = "exponential"
    delta: float = 0.0
    realization: str = "agent"
    reset: str = "truth"
    seed: int = 0
    team: AgentTeamConfig | None = None
    remote: object = None

    def __post_init__(self):
        if self.L < self.feature_window + 2:
            raise ValueError("lookback too short for the neural feature window")
        if self.H < 1 or self.replicates < 1:
            raise ValueError("horizon and replicates must be >= 1")
        if self.reset not in ("truth", "free"):
            raise ValueError(f"unknown reset mode {self.reset!r}")
        if not 1 <= self.calibration_days <= self.L - self.feature_window - 1:
            raise ValueError("calibration_days must leave training days in the lookback")


@dataclass
class WindowResult:
    start: int
    agents: np.ndarray
    predictions: list
    truth: list
    metrics: dict
    generator_mae: float | None
    trace: list
    trajectories: np.ndarray
    seconds: list
    symbolic_calls: int
    contexts_per_step: int
    flags: dict


@dataclass
class RollingResult:
    windows: list
    config: RollingConfig

    @property
    def summary(self) -> dict:
        out = _metrics.summarize_windows([w.metrics for w in self.windows])
        maes = [w.generator_mae for w in self.windows if w.generator_mae is not None]
        out["generator_mae"] = {"mean": float(np.mean(maes)) if maes else None, "per_window": maes}
        return out

    def trace_rows(self) -> list:
        return [row for w in self.windows for row in w.trace]


def window_starts(T: int, L: int = 28, H: int = 7) -> list[int]:
    """Starts of complete windows: lookback ``[w, w+L)`` then ``H`` forecast days."""
    if T < L + H:
        raise ValueError(f"truth spans {T} days, need at least L + H = {L + H}")
    return list(range(0, T - L - H + 1, H))


def transition_counts(before, after, labels, state_space: StateSpace, K: int):
    """Events and at-risk counts ``(K, n_transitions)`` for one day's move."""
    before = np.asarray(before, dtype=np.int64)
    after = np.asarray(after, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    T = state_space.n_transitions
    events = np.zeros((K, T))
    risk = np.zeros((K, T))
    for k, (o, g) in enumerate(zip(state_space.origin_of, state_space.target_of)):
        at = before == o
        risk[:, k] = np.bincount(labels[at], minlength=K)
        events[:, k] = np.bincount(labels[at & (after == g)], minlength=K)
    return events, risk


def truth_events(truth, s0: int, H: int, state_space: StateSpace):
    """First realised event of every non-terminal agent after day ``s0``.

    The agent list depends only on the states at ``s0``. An agent whose
    first move is not a transition of ``state_space`` gets ``None`` in place
    of a record and is left out of scoring.
    """
    truth = np.asarray(truth, dtype=np.int64)
    agents, records, skipped = [], [], 0
    for a in range(truth.shape[0]):
        o = int(truth[a, s0])
        if not state_space.outgoing(o):
            continue
        rec = _metrics.EventRecord(agent=a, type=None, day=None, H=H)
        for d in range(1, H + 1):
            nxt = int(truth[a, s0 + d])
            if nxt != o:
                tr = (state_space.states[o], state_space.states[nxt])
                if tr not in state_space.transitions:
                    rec = None
                    skipped += 1
                else:
                    rec = _metrics.EventRecord(agent=a, type=f"{tr[0]}->{tr[1]}", day=d, H=H)
                break
        agents.append(a)
        records.append(rec)
    if skipped:
        log.warning("day %d: %d agents with transitions outside the state space left unscored", s0, skipped)
    return np.array(agents, dtype=np.int64), records


def _truth_phi(data: ScenarioData, days) -> dict:
    K = int(np.max(data.labels)) + 1
    return {d: phi_matrix(data.truth[:, d], data.labels, data.state_space.n_states, K) for d in days}


def _train_days(w: int, cfg: RollingConfig, end: int | None = None) -> range:
    # features read [t - window + 1, t] and targets need day t + 1, all before ``end``
    end = w + cfg.L if end is None else end
    return range(w + cfg.feature_window - 1, end - 1)


def fit_neural(data: ScenarioData, w: int, cfg: RollingConfig, labels=None, end: int | None = None) -> tuple[NeuralPathway, dict]:
    """Fit the regressor on days ``[w, end)``, by default the lookback ``[w, w + L)``."""
    ss = data.state_space
    labels = data.labels if labels is None else np.asarray(labels, dtype=np.int64)
    K = int(labels.max()) + 1
    deg_stats, emb = cluster_stats(data.graph, labels, data.embedding, K)
    d_H = emb.shape[1]
    manifest = make_manifest(ss.states, data.exo_names, d_H, cfg.feature_window)
    days = _train_days(w, cfg, end)
    if len(days) < 1:
        raise ValueError("no training days before the fit boundary")
    hist = np.stack([phi_matrix(data.truth[:, d], labels, ss.n_states, K) for d in range(w, days[-1] + 1)])
    exo = np.asarray(data.exogenous, float).reshape(data.T, -1)
    X, Y, M, E = [], [], [], []
    for t in days:
        X.append(raw_features(hist[: t - w + 1], exo[w : t + 1], t - w, cfg.feature_window, deg_stats, emb))
        ev, risk = transition_counts(data.truth[:, t], data.truth[:, t + 1], labels, ss, K)
        y, m = empirical_targets(ev, risk)
        Y.append(y)
        M.append(m)
        E.append(ev)
    X, Y, M, E = (np.vstack(a) for a in (X, Y, M, E))
    keep = np.arange(len(X))
    if len(X) > cfg.max_instances:
        g = _rng.generator(cfg.seed, 601, w)
        keep = np.sort(g.choice(len(X), cfg.max_instances, replace=False))
    manifest.fit(X[keep])
    Xs = manifest.transform(X[keep])
    model = train_regressor(Xs, Y[keep], M[keep], class_weights(E[keep]), replace(cfg.train, seed=cfg.seed))
    info = {"instances": int(len(keep)), "parameters": model.parameter_count, "width": manifest.width}
    return NeuralPathway(model, manifest, deg_stats, emb), info


def calibration_records(data: ScenarioData, end: int, cfg: RollingConfig, rules: RuleTable, labels=None):
    """Out-of-sample fusion records for the block of transitions ending at ``end``.

    The held-out block holds the last ``cfg.calibration_days`` transitions
    observable before day ``end``. An auxiliary regressor is fitted on up to
    ``L`` preceding days and scored on the block, so neural confidence is
    learned from forecasts it did not train on. Returns ``(features,
    lam_sym, lam_neu, realized, at_risk)`` or ``None`` when the block has
    too little history.
    """
    ss = data.state_space
    labels = data.labels if labels is None else np.asarray(labels, dtype=np.int64)
    K = int(labels.max()) + 1
    split = end - cfg.calibration_days
    start = max(0, end - cfg.L)
    if len(_train_days(start, cfg, split)) < 3:
        return None
    aux, _ = fit_neural(data, start, cfg, labels, end=split)
    cg = cluster_graph(data.graph, labels)
    phi = {d: phi_matrix(data.truth[:, d], labels, ss.n_states, K) for d in range(start, end)}
    exo = np.asarray(data.exogenous, float).reshape(data.T, -1)
    feats, ls, ln, ys, ws = [], [], [], [], []
    for t in range(split - 1, end - 1):
        ctxs = assemble_contexts(labels, data.truth[:, t], ss.states, exo, data.exo_names, cg, t)
        sym = [oracle_hazards(c, rules, ss) for c in ctxs]
        mu, sd = aux.predict(phi, exo, t)
        ev, risk = transition_counts(data.truth[:, t], data.truth[:, t + 1], labels, ss, K)
        for k, c in enumerate(ctxs):
            ok = risk[k] > 0
            if not ok.any():
                continue
            stats = np.tile([c.phi_entropy, c.exogenous_change], (int(ok.sum()), 1))
            feats.append(calibrator_features(sym[k].uncertainty[ok], sd[k][ok], stats))
            ls.append(sym[k].hazards[ok])
            ln.append(mu[k][ok])
            ys.append(ev[k][ok] / risk[k][ok])
            ws.append(risk[k][ok])
    if not feats:
        return None
    return np.vstack(feats), np.concatenate(ls), np.concatenate(ln), np.concatenate(ys), np.concatenate(ws)


def fit_calibrator(data: ScenarioData, w: int, cfg: RollingConfig, rules: RuleTable, labels=None, cache: dict | None = None):
    """Train the confidence calibrator on past out-of-sample records.

    Held-out blocks tile the observed history backwards from the forecast
    origin ``w + L - 1``; records are pooled over all blocks and weighted by
    their at-risk counts, so the fit scores one-step forecasts per at-risk
    agent. ``cache`` maps block end to records and may be shared across
    windows. Returns ``None`` when fewer than 16 records are available.
    """
    cache = {} if cache is None else cache
    parts = []
    for end in range(w + cfg.L, cfg.calibration_days, -cfg.calibration_days):
        if end not in cache:
            cache[end] = calibration_records(data, end, cfg, rules, labels)
        if cache[end] is not None:
            parts.append(cache[end])
    if sum(len(p[0]) for p in parts) < 16:
        return None
    X, ls, ln, ys, ws = (np.concatenate([p[i] for p in parts]) for i in range(5))
    return train_calibrator(X, ls, ln, ys, seed=cfg.seed, weights=ws)


def _pathway_config(cfg: RollingConfig, rules, neural, calibrator, ledger, replicate: int) -> PathwayConfig:
    return PathwayConfig(
        pathway=cfg.pathway,
        rules=rules,
        symbolic_backend=cfg.symbolic_backend,
        fusion_mode=cfg.fusion_mode if (cfg.fusion_mode != "learned_calibrator" or calibrator is not None) else "default_reciprocal",
        neural=neural,
        calibrator=calibrator,
        remote=cfg.remote,
        team=cfg.team,
        ledger=ledger,
        sampler=cfg.sampler,
        delta=cfg.delta,
        realization=cfg.realization,
        seed=cfg.seed,
        replicate=replicate,
    )


def rolling_window_run(
    data: ScenarioData,
    cfg: RollingConfig = RollingConfig(),
    rules: RuleTable | None = None,
    labels=None,
    ledger: CostLedger | None = None,
    windows=None,
) -> RollingResult:
    """Strictly causal rolling evaluation.

    For each window start ``w`` the neural regressor (and calibrator, in
    ``learned_calibrator`` mode) is fitted on ``[w, w + L)``; states reset to
    the truth at day ``w + L - 1`` and ``H`` days are simulated. Forecast
    distributions depend on truth only up to that day.
    """
    ss = data.state_space
    rules = data.rules if rules is None else rules
    labels = data.labels if labels is None else np.asarray(labels, dtype=np.int64)
    K = int(labels.max()) + 1
    starts = window_starts(data.T, cfg.L, cfg.H) if windows is None else list(windows)
    profiles = [data.population.profile(i, ss) for i in range(data.n)]
    needs_neural = cfg.pathway == "neural" or (cfg.pathway == "fused" and cfg.fusion_mode != "symbolic_only")
    tr_labels = ss.transition_labels()
    carry = None
    out = []
    cal_cache: dict = {}
    for w in starts:
        s0 = w + cfg.L - 1
        neural, info, cal = None, {}, None
        if needs_neural:
            neural, info = fit_neural(data, w, cfg, labels)
        if cfg.fusion_mode == "learned_calibrator" and cfg.pathway == "fused":
            cal = fit_calibrator(data, w, cfg, rules, labels, cal_cache)
            info["calibrator"] = cal is not None
        agents, records = truth_events(data.truth, s0, cfg.H, ss)
        phi0 = {d: phi_matrix(data.truth[:, d], labels, ss.n_states, K) for d in range(w, s0 + 1)}
        start_states = data.truth[:, s0] if (cfg.reset == "truth" or carry is None) else carry
        if cfg.reset == "free" and carry is not None:
            phi0[s0] = phi_matrix(start_states, labels, ss.n_states, K)
            # only agents whose simulated start matches the observed origin are scorable
            same = start_states[agents] == data.truth[agents, s0]
            agents = agents[same]
            records = [rec for rec, ok in zip(records, same) if ok]
        origin_cols = ss.origin_of[None, :] == start_states[agents][:, None]
        probs_sum = None
        none_sum = np.zeros(len(agents))
        trace, secs, trajs = [], [], []
        mae_num, mae_den = 0.0, 0
        calls0 = ledger.calls() if ledger is not None else 0
        for r in range(cfg.replicates):
            pc = _pathway_config(cfg, rules, neural, cal, ledger, r)
            world = make_world(ss, data.graph, data.population, labels, data.exogenous, data.exo_names,
                               start_states, s0, phi_history=phi0, profiles=profiles)
            daily = np.zeros((cfg.H, len(agents), ss.n_transitions))
            traj = [world.states.copy()]
            for d in range(cfg.H):
                t0 = time.perf_counter()
                hz = cluster_hazards(world, pc)
                h = agent_hazards(world, hz.lam, states=start_states, delta=cfg.delta)
                daily[d] = h[agents]
                gen = None
                if data.generator_rules is not None:
                    gctx = assemble_contexts(labels, world.states, ss.states, world.exogenous, world.exo_names, world.cgraph, world.t)
                    gen = np.vstack([oracle_hazards(c, data.generator_rules, ss).hazards for c in gctx])
                    mae_num += float(np.abs(hz.lam - gen).sum())
                    mae_den += gen.size
                for k in range(K):
                    for j in range(ss.n_transitions):
                        trace.append((
                            w, r, world.t, k, tr_labels[j],
                            float(hz.lam_sym[k, j]), float(hz.u_sym[k, j]), float(hz.lam_neu[k, j]), float(hz.u_neu[k, j]),
                            float(hz.c_sym[k, j]), float(hz.c_neu[k, j]), float(hz.lam[k, j]),
                            None if gen is None else float(gen[k, j]),
                        ))
                world, _ = step(world, pc, hazards=hz)
                traj.append(world.states.copy())
                secs.append(time.perf_counter() - t0)
            trajs.append(np.column_stack(traj))
            # first-passage distribution of each agent's origin state, averaged over replicates
            p_rep = np.zeros((len(agents), cfg.H, ss.n_transitions))
            for i in range(len(agents)):
                cols = np.flatnonzero(origin_cols[i])
                jd = _metrics.joint_event_distribution(daily[:, i, cols], "", [tr_labels[c] for c in cols], cfg.sampler)
                p_rep[i][:, cols] = jd.probs
                none_sum[i] += jd.none
            probs_sum = p_rep if probs_sum is None else probs_sum + p_rep
        preds = []
        for i, a in enumerate(agents):
            cols = np.flatnonzero(origin_cols[i])
            preds.append(_metrics.JointEventDistribution(
                origin=ss.states[start_states[a]],
                types=tuple(tr_labels[c] for c in cols),
                probs=probs_sum[i][:, cols] / cfg.replicates,
                none=float(none_sum[i] / cfg.replicates),
            ))
        carry = trajs[0][:, -1].copy()
        calls = (ledger.calls() - calls0) if ledger is not None else 0
        out.append(WindowResult(
            start=w,
            agents=agents,
            predictions=preds,
            truth=records,
            metrics=_metrics.score_forecasts(preds, records),
            generator_mae=(mae_num / mae_den) if mae_den else None,
            trace=trace,
            trajectories=np.stack(trajs),
            seconds=secs,
            symbolic_calls=calls,
            contexts_per_step=K,
            flags=info,
        ))
    return RollingResult(windows=out, config=cfg)
