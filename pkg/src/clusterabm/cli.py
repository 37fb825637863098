"""Command-line entry points: generate, cluster, simulate, evaluate, baseline, ablate, cost-report.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid or
missing input. Every command writes ``manifest.json`` into ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import metrics as _metrics
from .core import StateSpace
from .engine import (
    ABLATIONS,
    FUSION_MODES,
    PATHWAYS,
    PathwayConfig,
    RollingConfig,
    TRACE_COLUMNS,
    make_world,
    rolling_window_run,
    run_ablation,
    run_baseline,
    simulate,
    truth_events,
)
from .io import artifacts as _art
from .io.scenario import load_scenario, save_scenario
from .io.synthetic import TEMPLATES, generate_synthetic_scenario
from .symbolic.cost import CostLedger, project_costs

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_RUNTIME", "EXIT_USAGE", "EXIT_INPUT"]

log = logging.getLogger("clusterabm")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_INPUT = 0, 1, 2, 3

DEFAULT_T = {"seird_shock": 60, "market_regimes": 83, "attention_lifecycle": 60}


class InputError(Exception):
    """Missing or malformed input file."""


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _param(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected KEY=VALUE")
    k, v = text.split("=", 1)
    try:
        return k.replace("-", "_"), json.loads(v)
    except json.JSONDecodeError:
        return k.replace("-", "_"), v


def _stages(text: str) -> int:
    last = text.split("-")[-1]
    if not last.isdigit() or not 1 <= int(last) <= 4 or (("-" in text) and text.split("-")[0] != "1"):
        raise argparse.ArgumentTypeError("stages must be 1-1 .. 1-4")
    return int(last)


def _add_common(p, seed: bool = True):
    p.add_argument("--out", required=True, type=Path, help="output directory (created if missing)")
    if seed:
        p.add_argument("--seed", required=True, type=_u64, help="unsigned 64-bit run seed")
    p.add_argument("--timing", action="store_true", help="record wall-clock timing in the manifest")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_rolling(p):
    p.add_argument("--L", type=int, default=28, help="lookback length in days (default 28)")
    p.add_argument("--H", type=int, default=7, help="forecast horizon in days (default 7)")
    p.add_argument("--replicates", type=int, default=1, help="stochastic replicates per window (default 1)")
    p.add_argument("--sampler", choices=("exponential", "weights"), default="exponential",
                   help="competing-risk conversion of hazards to probabilities")
    p.add_argument("--delta", type=float, default=0.0, help="memory damping per stay day (default 0)")
    p.add_argument("--reset", choices=("truth", "free"), default="truth",
                   help="window start states: truth at the forecast origin, or previous simulated end")
    p.add_argument("--clusters", type=Path, help="clusters.csv overriding the scenario's cluster labels")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clusterabm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic scenario with its truth trajectories")
    p.add_argument("--template", required=True, choices=TEMPLATES, help="scenario template")
    p.add_argument("--n", type=int, default=200, help="number of agents (default 200)")
    p.add_argument("--T", type=int, help="scenario length in days (template default)")
    p.add_argument("--param", action="append", type=_param, default=[], metavar="KEY=VALUE",
                   help="template parameter, value parsed as JSON when possible (repeatable)")
    _add_common(p)

    p = sub.add_parser("cluster", help="behaviour-aware agent clustering")
    p.add_argument("--scenario", required=True, type=Path, help="scenario.toml")
    p.add_argument("--stages", type=_stages, default=4, help="stages to run, 1-1 .. 1-4 (default 1-4)")
    p.add_argument("--k", type=int, default=3, help="coarse and final cluster count (default 3)")
    p.add_argument("--k-m", type=int, default=4, help="number of behavioural motifs (default 4)")
    _add_common(p)

    p = sub.add_parser("simulate", help="forward simulation or rolling-window forecasts")
    p.add_argument("--scenario", required=True, type=Path, help="scenario.toml")
    p.add_argument("--pathway", choices=PATHWAYS, default="fused", help="hazard pathway (default fused)")
    p.add_argument("--fusion-mode", choices=FUSION_MODES, default="default_reciprocal", help="fusion rule")
    p.add_argument("--windows", action="store_true",
                   help="rolling-window forecasts against the truth (required for neural and fused)")
    p.add_argument("--days", type=int, help="forward simulation length (default: scenario length - 1)")
    p.add_argument("--realization", choices=("agent", "vectorized"), default="agent",
                   help="per-agent loop or vectorized realization (identical results)")
    _add_rolling(p)
    _add_common(p)

    p = sub.add_parser("evaluate", help="score a simulate/baseline run against truth")
    p.add_argument("--run", required=True, type=Path, help="run directory holding forecasts.json")
    p.add_argument("--truth", required=True, type=Path, help="truth trajectories CSV (day, agent_id, state)")
    p.add_argument("--bins", type=int, default=10, help="reliability bins (default 10)")
    p.add_argument("--out", type=Path, help="output directory (default: RUN/evaluation)")
    p.add_argument("--timing", action="store_true", help="record wall-clock timing in the manifest")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = sub.add_parser("baseline", help="rolling evaluation of a reference forecaster")
    p.add_argument("--kind", required=True, choices=("rule-abm", "mf-markov"), help="baseline family")
    p.add_argument("--scenario", required=True, type=Path, help="scenario.toml")
    _add_rolling(p)
    _add_common(p)

    p = sub.add_parser("ablate", help="rolling evaluation of ablation configurations")
    p.add_argument("--config", required=True, choices=(*ABLATIONS, "all"), help="ablation name or 'all'")
    p.add_argument("--scenario", required=True, type=Path, help="scenario.toml")
    _add_rolling(p)
    _add_common(p)

    p = sub.add_parser("cost-report", help="projected invocation and token costs")
    p.add_argument("--n", type=int, default=1000, help="population size N (default 1000)")
    p.add_argument("--m", type=int, default=4, help="number of clusters M (default 4)")
    p.add_argument("--team-size", type=int, default=5, help="state agents per cluster (default 5)")
    p.add_argument("--alpha", type=float, action="append", help="entity-call fraction (repeatable; default 0.6 0.75 1.0)")
    _add_common(p, seed=False)
    return ap


# ---------------------------------------------------------------- helpers


def _load(path, clusters=None):
    try:
        return load_scenario(path, clusters)
    except (FileNotFoundError, KeyError, ValueError) as exc:
        raise InputError(f"cannot load scenario {path}: {exc}") from exc


def _rolling_cfg(args, **kw) -> RollingConfig:
    return RollingConfig(
        L=args.L, H=args.H, replicates=args.replicates, sampler=args.sampler, delta=args.delta,
        reset=args.reset, seed=args.seed, **kw,
    )


def _cfg_dict(cfg: RollingConfig) -> dict:
    d = asdict(replace(cfg, remote=None))
    d["train"] = asdict(cfg.train)
    return d


def _write_manifest(args, out: Path, config: dict, outputs, flags=None, cost=None, t0=None, inputs=None):
    timing = {"seconds": time.perf_counter() - t0} if getattr(args, "timing", False) and t0 is not None else None
    seeds = {"run": getattr(args, "seed", None)}
    man = _art.RunManifest(
        command=args.command, config=config, seeds=seeds, backend="oracle", inputs=inputs or {},
        outputs=list(outputs) + ["manifest.json"], flags=flags or {}, cost=cost or {}, timing=timing,
    )
    man.write(out)


def _forecast_doc(result, ss: StateSpace, H: int) -> dict:
    windows = []
    for wr in result.windows:
        occ = wr.trajectories
        frac = np.stack([[np.bincount(occ[r, :, d], minlength=ss.n_states) / occ.shape[1]
                          for d in range(occ.shape[2])] for r in range(occ.shape[0])]).mean(axis=0)
        windows.append({
            "start": wr.start,
            "agents": [int(a) for a in wr.agents],
            "predictions": [
                {"origin": p.origin, "types": list(p.types), "probs": p.probs.tolist(), "none": p.none}
                for p in wr.predictions
            ],
            "occupancy": frac.tolist(),
            "generator_mae": wr.generator_mae,
        })
    return {"states": list(ss.states), "H": H, "L": result.config.L, "windows": windows}


def _stitched(result, ss: StateSpace):
    """Replicate-0 forecast paths, non-overlapping across windows, and their events."""
    rows, events = [], []
    last = len(result.windows) - 1
    for j, wr in enumerate(result.windows):
        traj = wr.trajectories[0]
        s0 = wr.start + result.config.L - 1
        stop = traj.shape[1] if j == last else traj.shape[1] - 1
        for d in range(stop):
            rows.append((s0 + d, traj[:, d]))
        for d in range(traj.shape[1] - 1):
            moved = np.flatnonzero(traj[:, d] != traj[:, d + 1])
            events.extend((s0 + d + 1, int(a), int(traj[a, d]), int(traj[a, d + 1])) for a in moved)
    return rows, events


def _write_rolling(out: Path, result, data, ss: StateSpace, H: int) -> list[str]:
    written = []
    rows, events = _stitched(result, ss)
    if rows:
        start = rows[0][0]
        _art.write_trajectories(out / "trajectories.csv", np.column_stack([r[1] for r in rows]), ss, start_day=start)
        written.append("trajectories.csv")
    _art.write_events(out / "events.csv", events, ss)
    _art.write_hazard_trace(out / "hazard_trace.csv", result.trace_rows(), TRACE_COLUMNS)
    _art.write_json(out / "forecasts.json", _forecast_doc(result, ss, H))
    return written + ["events.csv", "hazard_trace.csv", "forecasts.json"]


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> list[str]:
    T = args.T if args.T is not None else DEFAULT_T[args.template]
    params = dict(args.param)
    config, data = generate_synthetic_scenario(args.template, n=args.n, T=T, seed=args.seed, **params)
    template = {"name": args.template, "n": args.n, "T": T, "params": params}
    written = save_scenario(args.out, config, data, template)
    args._config = {"template": template}
    return written


def cmd_cluster(args) -> list[str]:
    from .anchor import AnchorConfig, run_anchor
    from .anchor.quality import quality

    _, data = _load(args.scenario)
    X = np.asarray(data.meta.get("X", data.population.attributes), float)
    if X.ndim != 2 or X.shape[1] == 0:
        X = data.graph.degree[:, None].astype(float)
    cfg = AnchorConfig(K_coarse=args.k, K_m=args.k_m, K_final=args.k, seed=args.seed)
    res = run_anchor(data.graph, X, data.population, cfg, stages=args.stages)
    asg = res.assignment
    _art.write_clusters(args.out / "clusters.csv", asg.labels, asg.anchors)
    written = ["clusters.csv", "quality.json"]
    P = res.motifs.P if res.motifs is not None else None
    if P is not None:
        _art.write_motifs(args.out / "motifs.csv", P)
        written.append("motifs.csv")
    Z = res.Z if res.Z is not None else res.embedding.H
    q = quality(asg, data.graph, Z, P) if P is not None else None
    doc = {"K": int(asg.K), "stages": args.stages, "snapshots": res.snapshots}
    if q is not None:
        doc.update(q.as_dict())
    if "planted_labels" in data.meta:
        from sklearn.metrics import adjusted_rand_score

        doc["ari_vs_planted"] = float(adjusted_rand_score(data.meta["planted_labels"], asg.labels))
    _art.write_json(args.out / "quality.json", doc)
    args._config = {"anchor": asdict(cfg), "stages": args.stages}
    return written


def cmd_simulate(args) -> list[str]:
    _, data = _load(args.scenario, args.clusters)
    ss = data.state_space
    if not args.windows:
        if args.pathway in ("neural", "fused"):
            raise _UsageError("--pathway neural/fused needs --windows (the regressor is fitted per window)")
        days = data.T - 1 if args.days is None else args.days
        ledger = CostLedger(n_agents=data.n)
        pc = PathwayConfig(pathway=args.pathway, rules=data.rules, symbolic_backend=args.pathway, ledger=ledger,
                           sampler=args.sampler, delta=args.delta, realization=args.realization, seed=args.seed)
        world = make_world(ss, data.graph, data.population, data.labels, data.exogenous, data.exo_names,
                           data.truth[:, 0], 0)
        _, run = simulate(world, days, pc)
        _art.write_trajectories(args.out / "trajectories.csv", run.trajectories, ss)
        _art.write_events(args.out / "events.csv", run.events, ss)
        labels = ss.transition_labels()
        trace = [
            (None, 0, run.start + d, k, labels[j], hz.lam_sym[k, j], hz.u_sym[k, j], hz.lam_neu[k, j], hz.u_neu[k, j],
             hz.c_sym[k, j], hz.c_neu[k, j], hz.lam[k, j], None)
            for d, hz in enumerate(run.hazards) for k in range(hz.lam.shape[0]) for j in range(len(labels))
        ]
        _art.write_hazard_trace(args.out / "hazard_trace.csv", trace, TRACE_COLUMNS)
        args._config = {"mode": "forward", "pathway": args.pathway, "days": days, "sampler": args.sampler,
                        "delta": args.delta, "realization": args.realization}
        args._cost = ledger.summarize()
        return ["trajectories.csv", "events.csv", "hazard_trace.csv"]
    cfg = _rolling_cfg(args, pathway=args.pathway, fusion_mode=args.fusion_mode, realization=args.realization)
    ledger = CostLedger(n_agents=data.n)
    result = rolling_window_run(data, cfg, ledger=ledger)
    args._config = {"mode": "windows", "rolling": _cfg_dict(cfg)}
    args._cost = ledger.summarize()
    args._flags = {f"window_{w.start}": w.flags for w in result.windows}
    return _write_rolling(args.out, result, data, ss, cfg.H)


def _truth_records(truth, s0, H, ss, agents):
    ag, recs = truth_events(truth, s0, H, ss)
    by = dict(zip((int(a) for a in ag), recs))
    missing = [a for a in agents if a not in by]
    if missing:
        raise InputError(f"truth has no record for forecast agents {missing[:5]} at origin day {s0}")
    return [by[a] for a in agents]


def cmd_evaluate(args) -> list[str]:
    out = args.out or args.run / "evaluation"
    fpath = args.run / "forecasts.json"
    if not fpath.is_file():
        raise InputError(f"{fpath} not found")
    doc = _art.read_json(fpath)
    states = tuple(doc["states"])
    H, L = int(doc["H"]), int(doc["L"])
    # only the state order matters for reading labels
    ss = StateSpace(states=states, transitions=((states[0], states[1]),))
    try:
        truth, start = _art.read_trajectories(args.truth, ss)
    except (FileNotFoundError, KeyError, ValueError) as exc:
        raise InputError(f"cannot read truth {args.truth}: {exc}") from exc
    if start != 0:
        raise InputError("truth trajectories must start at day 0")
    per_window, conf, corr, occ_days, realized = [], [], [], [], []
    for w in doc["windows"]:
        s0 = int(w["start"]) + L - 1
        preds = [_metrics.JointEventDistribution(origin=p["origin"], types=tuple(p["types"]),
                                                 probs=np.array(p["probs"], float).reshape(H, -1), none=p["none"])
                 for p in w["predictions"]]
        agents = [int(a) for a in w["agents"]]
        # event types are labelled from the forecasts, so reuse their transitions
        full = _state_space_from_preds(states, preds)
        recs = _truth_records(truth, s0, H, full, agents)
        per_window.append({"start": w["start"], **_metrics.score_forecasts(preds, recs)})
        for p, r in zip(preds, recs):
            if r is None:
                continue
            vec = p.outcome_vector()
            k = int(np.argmax(vec))
            conf.append(float(vec[k]))
            corr.append(k == _true_cell(p, r))
        for d, frac in enumerate(w["occupancy"]):
            if s0 + d < truth.shape[1] and (not occ_days or occ_days[-1][0] < s0 + d):
                occ_days.append((s0 + d, frac))
                realized.append(int(np.argmax(np.bincount(truth[:, s0 + d], minlength=len(states)))))
    summary = _metrics.summarize_windows(per_window)
    ece, table = _metrics.ece_reliability(conf, corr, bins=args.bins)
    trace, ma = _metrics.regime_probability_trace(np.array([f for _, f in occ_days]), np.array(realized))
    out.mkdir(parents=True, exist_ok=True)
    _art.write_json(out / "metrics.json", {"summary": summary, "windows": per_window, "ece": ece, "bins": args.bins,
                                           "n_forecasts": len(conf)})
    _art.write_reliability_bins(out / "reliability_bins.csv", table)
    _art.write_regime_trace(out / "regime_trace.csv", trace, ma, realized=[states[r] for r in realized])
    args._config = {"bins": args.bins, "H": H, "L": L}
    args._inputs = {"forecasts": _art.file_digest(fpath), "truth": _art.file_digest(args.truth)}
    args.out = out
    return ["metrics.json", "reliability_bins.csv", "regime_trace.csv"]


def _state_space_from_preds(states, preds) -> StateSpace:
    pairs = []
    for p in preds:
        for t in p.types:
            a, b = t.split("->")
            if (a, b) not in pairs:
                pairs.append((a, b))
    if not pairs:
        pairs = [(states[0], states[1])]
    return StateSpace(states=tuple(states), transitions=tuple(pairs))


def _true_cell(p, r) -> int:
    """Index of the realised outcome in :meth:`JointEventDistribution.outcome_vector`."""
    if not r.has_event:
        return p.H * len(p.types)
    return (r.day - 1) * len(p.types) + p.types.index(r.type)


def cmd_baseline(args) -> list[str]:
    _, data = _load(args.scenario, args.clusters)
    cfg = _rolling_cfg(args)
    result = run_baseline(args.kind, data, cfg)
    args._config = {"kind": args.kind, "rolling": _cfg_dict(result.config)}
    args._flags = {f"window_{w.start}": w.flags for w in result.windows if w.flags}
    written = _write_rolling(args.out, result, data, data.state_space, cfg.H)
    summary = result.summary
    _art.write_json(args.out / "metrics.json", summary)
    return written + ["metrics.json"]


def cmd_ablate(args) -> list[str]:
    _, data = _load(args.scenario, args.clusters)
    cfg = _rolling_cfg(args)
    names = ABLATIONS if args.config == "all" else (args.config,)
    reports = {nm: run_ablation(nm, data, cfg).as_dict(timing=args.timing) for nm in names}
    _art.write_json(args.out / "ablation.json", reports)
    args._config = {"ablations": list(names), "rolling": _cfg_dict(cfg)}
    return ["ablation.json"]


def cmd_cost_report(args) -> list[str]:
    alphas = args.alpha or [0.6, 0.75, 1.0]
    rows = [project_costs(args.n, args.m, args.team_size, a) for a in alphas]
    _art.write_json(args.out / "cost.json", {"projections": rows})
    args._config = {"N": args.n, "M": args.m, "team_size": args.team_size, "alpha": alphas}
    return ["cost.json"]


class _UsageError(Exception):
    pass


COMMANDS = {
    "generate": cmd_generate,
    "cluster": cmd_cluster,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "baseline": cmd_baseline,
    "ablate": cmd_ablate,
    "cost-report": cmd_cost_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    t0 = time.perf_counter()
    out = args.out
    try:
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        written = COMMANDS[args.command](args)
        _write_manifest(
            args, args.out, getattr(args, "_config", {}), written, flags=getattr(args, "_flags", {}),
            cost=getattr(args, "_cost", {}), t0=t0,
            inputs=getattr(args, "_inputs", None) or _input_digests(args),
        )
    except _UsageError as exc:
        print(f"clusterabm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"clusterabm {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"clusterabm {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _input_digests(args) -> dict:
    out = {}
    for name in ("scenario", "clusters"):
        p = getattr(args, name, None)
        if p is not None and Path(p).is_file():
            out[name] = _art.file_digest(p)
    return out


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
