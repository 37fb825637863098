"""Cluster-level inference, entity modulation and competing-risk realisation."""

from ..fusion import FUSION_MODES

from .ablations import ABLATIONS, AblationReport, ablation_setup, run_ablation
from .baselines import BASELINES, MarkovFit, fit_mf_markov, freeze_rules, run_baseline
from .memory import AgentMemory, MemoryDigest
from .modulate import (
    EntityHazard,
    cluster_mean_fractions,
    driver_fractions,
    modulate,
    modulate_batch,
    neighborhood_multipliers,
)
from .rolling import (
    RollingConfig,
    TRACE_COLUMNS,
    RollingResult,
    ScenarioData,
    WindowResult,
    calibration_records,
    fit_calibrator,
    fit_neural,
    rolling_window_run,
    transition_counts,
    truth_events,
    window_starts,
)
from .sampler import hazard_rates, outcome_probabilities, sample_competing, sample_transition
from .world import (
    PATHWAYS,
    ClusterHazards,
    NeuralPathway,
    PathwayConfig,
    RemoteSetup,
    SimulationRun,
    World,
    agent_hazards,
    cluster_hazards,
    make_world,
    simulate,
    step,
)
