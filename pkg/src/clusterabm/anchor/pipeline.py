"""End-to-end four-stage clustering with per-stage snapshots."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import InteractionGraph, Population
from .boundary import boundary_reassign, merge_split
from .hierarchy import fuse_and_cluster, fuse_embeddings, mixture_grid
from .motifs import (
    ProbeScenario,
    anchor_judgment,
    default_probes,
    extract_motifs,
    oracle_judgments,
    run_diagnostic_scenarios,
    select_anchors,
)
from .quality import quality, silhouette
from .refine import refine_contrastive
from .structure import coarse_cluster, structural_embed
from .types import (
    AnchorJudgment,
    ClusterAssignment,
    DominantProfile,
    MotifProfile,
    RefinedRepresentation,
    StructuralEmbedding,
)

__all__ = ["AnchorConfig", "AnchorResult", "run_anchor", "standardize_columns"]


@dataclass(frozen=True)
class AnchorConfig:
    K_coarse: int = 4
    K_m: int = 4
    K_final: int = 4
    L: int = 2
    d_H: int = 16
    tau: float = 0.5
    epochs: int = 200
    step_size: float = 0.5
    mixture: tuple[float, float, float] | None = None
    mixture_step: float = 0.25
    boundary_fraction: float = 0.1
    theta_merge: float = 0.05
    theta_split: float | None = None
    max_workers: int = 8
    seed: int = 0


@dataclass
class AnchorResult:
    embedding: StructuralEmbedding
    coarse: ClusterAssignment
    responses: np.ndarray | None = None
    motifs: MotifProfile | None = None
    judgment: AnchorJudgment | None = None
    refined: RefinedRepresentation | None = None
    Z: np.ndarray | None = None
    final: ClusterAssignment | None = None
    snapshots: dict = field(default_factory=dict)

    @property
    def assignment(self) -> ClusterAssignment:
        return self.final if self.final is not None else self.coarse


def standardize_columns(X) -> np.ndarray:
    X = np.asarray(X, float)
    if X.shape[1] == 0:
        return X
    sd = X.std(axis=0)
    return (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def _judgments(P, anchors, backend, max_workers) -> AnchorJudgment:
    if backend is None:
        return AnchorJudgment(q=oracle_judgments(P, anchors))
    pairs = [(j, i) for j in range(len(P)) for i in range(len(anchors))]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        vals = list(pool.map(lambda ji: anchor_judgment(P[anchors[ji[1]]], P[ji[0]], None, backend), pairs))
    # results are keyed by (agent, anchor), so completion order is irrelevant
    q = np.array(vals).reshape(len(P), len(anchors))
    return AnchorJudgment(q=q)


def _with_anchors(labels, P) -> ClusterAssignment:
    D = DominantProfile.from_assignment(labels, P)
    return ClusterAssignment(labels=labels, anchors=select_anchors(labels, P, D))


def run_anchor(
    graph: InteractionGraph,
    X,
    population: Population,
    config: AnchorConfig = AnchorConfig(),
    probes: Sequence[ProbeScenario] | None = None,
    behavior_backend=None,
    judgment_backend=None,
    stages: int = 4,
) -> AnchorResult:
    """Run stages ``1..stages`` of the clustering pipeline.

    Parameters
    ----------
    graph : InteractionGraph
    X : array_like, shape (n, d_X)
        Observable attributes for the structural stage.
    population : Population
        Profiles consulted by the behavioural probes.
    stages : int
        Last stage to run (1 to 4).
    """
    if not 1 <= stages <= 4:
        raise ValueError("stages must be between 1 and 4")
    cfg = config
    Xs = standardize_columns(X)
    emb = structural_embed(graph, Xs, L=cfg.L, d_H=cfg.d_H, seed=cfg.seed)
    Y = np.hstack([emb.H, Xs])
    coarse = coarse_cluster(Y, cfg.K_coarse, graph=graph, seed=cfg.seed)
    result = AnchorResult(embedding=emb, coarse=coarse)
    result.snapshots["stage1"] = {"K": coarse.K}
    if stages == 1:
        return result

    probes = list(probes) if probes is not None else default_probes()
    R = run_diagnostic_scenarios(population, probes, behavior_backend)
    motifs = extract_motifs(R, cfg.K_m, seed=cfg.seed)
    P = motifs.P
    result.responses, result.motifs = R, motifs
    coarse = _with_anchors(coarse.labels, P)
    result.coarse = coarse
    result.snapshots["stage1"] = quality(coarse, graph, emb.H, P).as_dict() | {"K": coarse.K}
    result.snapshots["stage2"] = {"K_m": motifs.n_motifs, "descriptors": list(motifs.descriptors)}
    if stages == 2:
        return result

    judgment = _judgments(P, np.array(coarse.anchors), judgment_backend, cfg.max_workers)
    context = R.mean(axis=1)
    refined = refine_contrastive(
        emb.H, P, context, coarse.anchors, judgment, tau=cfg.tau, epochs=cfg.epochs, step_size=cfg.step_size, seed=cfg.seed
    )
    if cfg.mixture is None:
        best = None
        for mix in mixture_grid(cfg.mixture_step):
            Z = fuse_embeddings(emb.H, refined.f, P, mix)
            if np.allclose(Z, Z[0]):
                continue
            lab = fuse_and_cluster(emb.H, refined.f, P, mix, K_final=cfg.K_final)
            # score every candidate in the shared profile space; silhouettes
            # in each candidate's own Z are not comparable across mixtures
            sil, degenerate = silhouette(P, lab.labels)
            score = sil if not degenerate else -np.inf
            # ties prefer the earlier grid point
            if best is None or score > best[0] + 1e-12:
                best = (score, mix)
        mixture = best[1]
    else:
        mixture = tuple(float(m) for m in cfg.mixture)
    refined = RefinedRepresentation(
        f=refined.f, W=refined.W, tau=refined.tau, lambda_align=refined.lambda_align,
        loss_history=refined.loss_history, mixture=mixture,
    )
    Z = fuse_embeddings(emb.H, refined.f, P, mixture)
    stage3 = fuse_and_cluster(emb.H, refined.f, P, mixture, K_final=cfg.K_final)
    result.judgment, result.refined, result.Z = judgment, refined, Z
    result.snapshots["stage3"] = quality(stage3, graph, Z, P).as_dict() | {"K": stage3.K, "mixture": list(mixture)}
    if stages == 3:
        result.final = _with_anchors(stage3.labels, P)
        return result

    moved = boundary_reassign(stage3, P, None, graph, cfg.boundary_fraction, Z=Z)
    final = merge_split(moved, P, None, cfg.theta_merge, cfg.theta_split, seed=cfg.seed)
    result.final = _with_anchors(final.labels, P)
    result.snapshots["stage4"] = quality(result.final, graph, Z, P).as_dict() | {"K": result.final.K}
    return result
