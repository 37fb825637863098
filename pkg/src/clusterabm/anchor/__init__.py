"""Behaviour-aware agent clustering in four stages.

Stage 1 embeds the contact graph and attributes and clusters them
spectrally. Stage 2 probes every agent with short diagnostic scenarios and
summarises responses as motif profiles. Stage 3 refines a linear encoder
against anchor agents and clusters the fused representation. Stage 4 moves
boundary agents, merges near-duplicate clusters and splits incoherent ones.
"""

from .boundary import (
    boundary_agents,
    boundary_reassign,
    js_divergence,
    merge_split,
    profile_distribution,
    profile_entropy,
    pull_scores,
)
from .hierarchy import fuse_and_cluster, fuse_embeddings, linkage_trace, mixture_grid
from .motifs import (
    RESPONSE_DIMENSIONS,
    OracleBehaviorBackend,
    ProbeScenario,
    anchor_judgment,
    default_probes,
    extract_motifs,
    oracle_judgments,
    run_diagnostic_scenarios,
    select_anchors,
)
from .pipeline import AnchorConfig, AnchorResult, run_anchor
from .quality import modularity, motif_coherence, quality, silhouette
from .refine import RefineProblem, bernoulli_kl, refine_contrastive, refine_loss, refine_loss_and_grad
from .structure import coarse_cluster, knn_affinity, structural_embed
from .types import (
    AnchorJudgment,
    ClusterAssignment,
    ClusterQualityReport,
    DominantProfile,
    MotifProfile,
    RefinedRepresentation,
    StructuralEmbedding,
    canonical_labels,
)
