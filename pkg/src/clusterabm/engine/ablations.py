"""Architecture ablations with call and latency accounting."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..symbolic.cost import CostLedger
from ..symbolic.oracle import generalist_rules
from ..symbolic.remote import AgentTeamConfig
from .rolling import RollingConfig, RollingResult, ScenarioData, rolling_window_run

__all__ = ["ABLATIONS", "AblationReport", "ablation_setup", "run_ablation"]

ABLATIONS = ("full", "neural_only", "symbolic_only", "naive_fusion", "flat_agents", "no_state_agent", "no_meta_agent")


@dataclass
class AblationReport:
    name: str
    result: RollingResult
    contexts_per_step: float
    symbolic_calls_per_step: float
    mean_step_seconds: float

    def as_dict(self, timing: bool = False) -> dict:
        out = {
            "config": self.name,
            "metrics": self.result.summary,
            "contexts_per_step": self.contexts_per_step,
            "symbolic_calls_per_step": self.symbolic_calls_per_step,
        }
        if timing:
            out["mean_step_seconds"] = self.mean_step_seconds
        return out


def ablation_setup(name: str, data: ScenarioData, cfg: RollingConfig):
    """Rolling config, rule table, labels and team for one ablation."""
    name = name.replace("-", "_")
    if name not in ABLATIONS:
        raise ValueError(f"unknown ablation {name!r}")
    ss = data.state_space
    team = cfg.team or AgentTeamConfig.default(ss)
    rules, labels = data.rules, data.labels
    if name == "neural_only":
        cfg = replace(cfg, pathway="fused", fusion_mode="neural_only")
    elif name == "symbolic_only":
        cfg = replace(cfg, pathway="fused", fusion_mode="symbolic_only")
    elif name == "naive_fusion":
        cfg = replace(cfg, pathway="fused", fusion_mode="naive_mean")
    elif name == "flat_agents":
        labels = np.arange(data.n, dtype=np.int64)
    elif name == "no_state_agent":
        rules = generalist_rules(data.rules, ss)
        team = AgentTeamConfig.single_generalist()
    elif name == "no_meta_agent":
        team = replace(team, meta=False)
    return replace(cfg, team=team), rules, labels


def run_ablation(name: str, data: ScenarioData, cfg: RollingConfig = RollingConfig(), windows=None) -> AblationReport:
    """Run one ablation through the rolling protocol.

    ``flat_agents`` treats every agent as its own cluster, so symbolic work
    scales with N; ``no_state_agent`` routes every transition through one
    generalist rule set; ``no_meta_agent`` drops the regime summary, so
    hazards no longer see exogenous or neighbouring-cluster inputs.
    """
    cfg2, rules, labels = ablation_setup(name, data, cfg)
    ledger = CostLedger(alpha=0.0, n_agents=data.n)
    res = rolling_window_run(data, cfg2, rules=rules, labels=labels, ledger=ledger, windows=windows)
    steps = sum(len(w.seconds) for w in res.windows)
    calls = sum(w.symbolic_calls for w in res.windows)
    secs = [s for w in res.windows for s in w.seconds]
    return AblationReport(
        name=name.replace("-", "_"),
        result=res,
        contexts_per_step=float(np.mean([w.contexts_per_step for w in res.windows])) if res.windows else 0.0,
        symbolic_calls_per_step=calls / steps if steps else 0.0,
        mean_step_seconds=float(np.mean(secs)) if secs else 0.0,
    )
