"""Symbolic hazard pathway: regime context, rule oracle, remote agents, cost ledger."""

from .context import ClusterContext, ClusterGraph, assemble_context, assemble_contexts, cluster_graph, trailing_mean
from .cost import CostLedger, CostModel, estimate_tokens, project_costs
from .oracle import (
    Rule,
    RuleTable,
    SymbolicHazardEstimate,
    attention_rules,
    generalist_rules,
    market_rules,
    oracle_hazards,
    seird_rules,
)
from .prompts import PromptTemplate, default_templates, render_prompt
from .remote import AgentTeamConfig, ClientConfig, RemoteFlags, SchemaError, remote_hazards, remote_hazards_batch
