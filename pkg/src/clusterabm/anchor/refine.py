"""Stage 3: anchor-guided contrastive refinement.

Agents are encoded as ``f(j) = W^T [H_j | P_j | ctx_j]`` and compared to the
anchors by cosine similarity ``S[j, i] = cos(f(j), f(a_i))``. The objective is

    L = mean_j -log softmax(S[j] / tau)[pos(j)]
        + lambda_align * sum_{j, i} KL_bern(q[j, i] || sigmoid(S[j, i]))

where ``pos(j)`` is the anchor agent ``j`` is judged most compatible with
(or its current cluster's anchor when labels are given) and
``lambda_align = 1 / (n * K)``, one over the number of comparisons.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .. import rng as _rng
from .types import AnchorJudgment, RefinedRepresentation

__all__ = [
    "RefineProblem",
    "refine_loss",
    "refine_loss_and_grad",
    "refine_contrastive",
    "bernoulli_kl",
]

log = logging.getLogger(__name__)

_EPS = 1e-12


def bernoulli_kl(q, p) -> np.ndarray:
    """Elementwise ``KL(Bern(q) || Bern(p))`` in nats, with ``0 log 0 = 0``."""
    q = np.asarray(q, dtype=float)
    p = np.clip(np.asarray(p, dtype=float), _EPS, 1 - _EPS)
    a = np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0) / p), 0.0)
    b = np.where(q < 1, (1 - q) * np.log(np.where(q < 1, 1 - q, 1.0) / (1 - p)), 0.0)
    return a + b


@dataclass(frozen=True)
class RefineProblem:
    X: np.ndarray  # (n, d_in) = [H | P | ctx]
    anchors: np.ndarray  # (K,)
    q: np.ndarray  # (n, K)
    positives: np.ndarray  # (n,)
    tau: float
    lambda_align: float

    @classmethod
    def build(cls, H, P, context, anchors, q, tau, labels=None, lambda_align=None):
        H, P = np.asarray(H, float), np.asarray(P, float)
        ctx = np.zeros((len(H), 0)) if context is None else np.asarray(context, float)
        X = np.hstack([H, P, ctx])
        anchors = np.asarray(anchors, dtype=np.int64)
        q = q.q if isinstance(q, AnchorJudgment) else np.asarray(q, float)
        if tau <= 0:
            raise ValueError("tau must be > 0")
        if len(anchors) < 2:
            raise ValueError("at least 2 anchors are required")
        if q.shape != (len(X), len(anchors)):
            raise ValueError(f"q must be (n, K) = {(len(X), len(anchors))}, got {q.shape}")
        if labels is None:
            # lowest anchor index wins ties
            positives = np.argmax(q, axis=1)
        else:
            positives = np.asarray(labels, dtype=np.int64)
        if lambda_align is None:
            lambda_align = 1.0 / q.size
        return cls(X=X, anchors=anchors, q=q, positives=positives, tau=float(tau), lambda_align=float(lambda_align))


def _forward(prob: RefineProblem, W: np.ndarray):
    F = prob.X @ W
    norms = np.linalg.norm(F, axis=1, keepdims=True)
    norms = np.maximum(norms, _EPS)
    U = F / norms
    S = U @ U[prob.anchors].T
    return F, norms, U, S


def refine_loss(prob: RefineProblem, W: np.ndarray) -> tuple[float, float, float]:
    """Total, contrastive and alignment terms of the refinement objective."""
    _, _, _, S = _forward(prob, W)
    n = len(S)
    ls = log_softmax(S / prob.tau, axis=1)
    ctr = -float(np.mean(ls[np.arange(n), prob.positives]))
    align = float(np.sum(bernoulli_kl(prob.q, expit(S))))
    return ctr + prob.lambda_align * align, ctr, align


def refine_loss_and_grad(prob: RefineProblem, W: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss and its analytic gradient with respect to ``W``."""
    F, norms, U, S = _forward(prob, W)
    n, K = S.shape
    soft = softmax(S / prob.tau, axis=1)
    ls = log_softmax(S / prob.tau, axis=1)
    rows = np.arange(n)
    ctr = -float(np.mean(ls[rows, prob.positives]))
    sig = expit(S)
    align = float(np.sum(bernoulli_kl(prob.q, sig)))
    loss = ctr + prob.lambda_align * align

    onehot = np.zeros_like(S)
    onehot[rows, prob.positives] = 1.0
    G = (soft - onehot) / (prob.tau * n) + prob.lambda_align * (sig - prob.q)

    Ua = U[prob.anchors]
    dU = G @ Ua
    # anchors also receive gradient through their own column
    np.add.at(dU, prob.anchors, G.T @ U)
    dF = (dU - U * np.sum(U * dU, axis=1, keepdims=True)) / norms
    return loss, prob.X.T @ dF


def refine_contrastive(
    H,
    P,
    context,
    anchors,
    q,
    tau: float = 0.5,
    epochs: int = 200,
    step_size: float = 0.5,
    seed: int = 0,
    labels=None,
    lambda_align: float | None = None,
    d_f: int | None = None,
) -> RefinedRepresentation:
    """Fit the linear encoder by full-batch gradient descent.

    ``W`` starts at the identity (truncated or padded to ``d_f`` columns)
    plus small seeded noise, so the initial ``f`` is the raw concatenation.

    Raises
    ------
    FloatingPointError
        If the loss becomes non-finite, typically from too large a step.
    """
    prob = RefineProblem.build(H, P, context, anchors, q, tau, labels=labels, lambda_align=lambda_align)
    d_in = prob.X.shape[1]
    d_f = d_in if d_f is None else int(d_f)
    W = np.eye(d_in, d_f) + 0.01 * _rng.generator(seed, 301).standard_normal((d_in, d_f))
    history = []
    for epoch in range(epochs):
        loss, grad = refine_loss_and_grad(prob, W)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite refinement loss at epoch {epoch} (step_size={step_size})")
        history.append(loss)
        W = W - step_size * grad
    final, _, _ = refine_loss(prob, W)
    if not np.isfinite(final):
        raise FloatingPointError(f"non-finite refinement loss after {epochs} epochs (step_size={step_size})")
    history.append(final)
    return RefinedRepresentation(
        f=prob.X @ W,
        W=W,
        tau=prob.tau,
        lambda_align=prob.lambda_align,
        loss_history=tuple(float(v) for v in history),
    )
