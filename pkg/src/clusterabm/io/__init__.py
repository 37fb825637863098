"""Ingestion, synthetic scenarios, scenario files, run artifacts and manifests."""

from .artifacts import (
    ARTIFACTS,
    RunManifest,
    config_hash,
    directory_digest,
    read_clusters,
    read_edges,
    read_events,
    read_exogenous,
    read_json,
    read_trajectories,
    write_clusters,
    write_edges,
    write_events,
    write_exogenous,
    write_hazard_trace,
    write_json,
    write_motifs,
    write_regime_trace,
    write_reliability_bins,
    write_trajectories,
)
from .ingest import (
    REGIME_K,
    REGIME_THETA,
    CaseTimeline,
    IngestReport,
    fill_gaps,
    ingest_case_timelines,
    ingest_index_series,
    ingest_pageviews,
    k_day_returns,
    label_index_regimes,
    normalize_pageviews,
    read_case_timelines,
    timelines_to_labels,
)
from .scenario import load_scenario, rules_for_domain, save_scenario
from .synthetic import (
    ATTENTION,
    MARKET,
    TEMPLATES,
    attention_lifecycle,
    generate_synthetic_scenario,
    market_regimes,
    planted_regime_instance,
    seird_shock,
)
