"""Confidence-weighted fusion of symbolic and neural hazards."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import rng as _rng

__all__ = [
    "FUSION_MODES",
    "FusedHazard",
    "fuse",
    "default_confidence",
    "fuse_mode",
    "ConfidenceCalibrator",
    "calibrator_features",
    "calibrator_loss_and_grad",
    "train_calibrator",
]

FUSION_MODES = ("default_reciprocal", "learned_calibrator", "naive_mean", "symbolic_only", "neural_only")


def fuse(lam_sym, c_sym, lam_neu, c_neu):
    """``(c_sym * lam_sym + c_neu * lam_neu) / (c_sym + c_neu)``, elementwise.

    Written as ``lam_sym + w_neu * (lam_neu - lam_sym)`` so a zero weight
    returns the other input exactly; a zero symbolic confidence returns
    ``lam_neu`` exactly.
    """
    lam_sym = np.asarray(lam_sym, float)
    lam_neu = np.asarray(lam_neu, float)
    c_sym = np.asarray(c_sym, float)
    c_neu = np.asarray(c_neu, float)
    if np.any(c_sym < 0) or np.any(c_neu < 0):
        raise ValueError("confidences must be >= 0")
    total = c_sym + c_neu
    if np.any(total <= 0):
        raise ValueError("at least one confidence must be positive")
    w_neu = c_neu / total
    out = lam_sym + w_neu * (lam_neu - lam_sym)
    # the difference form can lose the small input to cancellation
    out = np.where(c_sym == 0, lam_neu, out)
    # guard the last ulp so the result never leaves the closed interval
    lo = np.minimum(lam_sym, lam_neu)
    hi = np.maximum(lam_sym, lam_neu)
    out = np.clip(out, lo, hi)
    return out if out.ndim else float(out)


def default_confidence(u_sym, u_neu, eps: float = 1e-3):
    """Reciprocal confidences ``c = 1 / (u + eps)``."""
    u_sym = np.asarray(u_sym, float)
    u_neu = np.asarray(u_neu, float)
    if np.any(u_sym < 0) or np.any(u_neu < 0):
        raise ValueError("uncertainties must be >= 0")
    return 1.0 / (u_sym + eps), 1.0 / (u_neu + eps)


@dataclass(frozen=True)
class FusedHazard:
    lam: np.ndarray
    lam_sym: np.ndarray
    c_sym: np.ndarray
    lam_neu: np.ndarray
    c_neu: np.ndarray
    mode: str

    @property
    def w_sym(self) -> np.ndarray:
        return self.c_sym / (self.c_sym + self.c_neu)


def fuse_mode(mode: str, lam_sym, u_sym, lam_neu, u_neu, calibrator=None, context_stats=None, eps: float = 1e-3) -> FusedHazard:
    """Fuse under one of :data:`FUSION_MODES`.

    ``symbolic_only`` and ``neural_only`` put all confidence on one pathway;
    ``naive_mean`` uses equal confidences; ``learned_calibrator`` needs a
    trained :class:`ConfidenceCalibrator` and ``context_stats`` of shape
    ``(..., 2)`` holding phi-entropy and exogenous-change magnitude.
    """
    lam_sym = np.asarray(lam_sym, float)
    lam_neu = np.asarray(lam_neu, float)
    ones = np.ones_like(lam_sym)
    if mode == "default_reciprocal":
        cs, cn = default_confidence(u_sym, u_neu, eps)
    elif mode == "naive_mean":
        cs, cn = ones, ones
    elif mode == "symbolic_only":
        cs, cn = ones, np.zeros_like(ones)
    elif mode == "neural_only":
        cs, cn = np.zeros_like(ones), ones
    elif mode == "learned_calibrator":
        if calibrator is None:
            raise ValueError("learned_calibrator mode needs a trained calibrator")
        X = calibrator_features(u_sym, u_neu, context_stats)
        cs, cn = calibrator.confidences(X)
        cs, cn = cs.reshape(lam_sym.shape), cn.reshape(lam_sym.shape)
    else:
        raise ValueError(f"unknown fusion mode {mode!r}")
    cs = np.broadcast_to(np.asarray(cs, float), lam_sym.shape)
    cn = np.broadcast_to(np.asarray(cn, float), lam_sym.shape)
    return FusedHazard(lam=np.asarray(fuse(lam_sym, cs, lam_neu, cn)), lam_sym=lam_sym, c_sym=cs, lam_neu=lam_neu, c_neu=cn, mode=mode)


# ---------------------------------------------------------------- calibrator


def calibrator_features(u_sym, u_neu, context_stats, eps: float = 1e-3) -> np.ndarray:
    """Rows ``(log(u_sym + eps), log(u_neu + eps), phi_entropy, exo_change)``.

    Uncertainties enter on a log scale since ensemble spreads range over
    several orders of magnitude.
    """
    u_sym = np.asarray(u_sym, float).ravel()
    u_neu = np.asarray(u_neu, float).ravel()
    if context_stats is None:
        ctx = np.zeros((len(u_sym), 2))
    else:
        ctx = np.asarray(context_stats, float).reshape(-1, 2)
        if len(ctx) != len(u_sym):
            ctx = np.broadcast_to(ctx, (len(u_sym), 2))
    if np.any(u_sym < 0) or np.any(u_neu < 0):
        raise ValueError("uncertainties must be non-negative")
    return np.column_stack([np.log(u_sym + eps), np.log(u_neu + eps), ctx])


def _softplus(z):
    return np.logaddexp(0.0, z)


_C_FLOOR = 1e-6


@dataclass
class ConfidenceCalibrator:
    """``x -> tanh -> softplus`` map from uncertainty features to two confidences."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    history: tuple = ()

    def _params(self):
        return [self.W1, self.b1, self.W2, self.b2]

    def flat(self):
        return np.concatenate([a.ravel() for a in self._params()])

    def with_flat(self, vec) -> "ConfidenceCalibrator":
        out, pos = [], 0
        for a in self._params():
            out.append(vec[pos : pos + a.size].reshape(a.shape))
            pos += a.size
        return ConfidenceCalibrator(*out, mean=self.mean, std=self.std, history=self.history)

    def confidences(self, X) -> tuple[np.ndarray, np.ndarray]:
        Xs = (np.asarray(X, float) - self.mean) / self.std
        h = np.tanh(Xs @ self.W1 + self.b1)
        c = _softplus(h @ self.W2 + self.b2) + _C_FLOOR
        return c[:, 0], c[:, 1]


def calibrator_loss_and_grad(cal: ConfidenceCalibrator, X, lam_sym, lam_neu, y, weights=None, weight_decay: float = 0.0):
    """Weighted mean squared error of the fused hazard against realised rates.

    With ``weights`` equal to the at-risk counts this is the Brier score of
    the fused one-step forecast per at-risk agent. ``weight_decay`` adds
    ``weight_decay / 2 * (|W1|^2 + |W2|^2)``, shrinking towards
    context-independent confidences.
    """
    Xs = (X - cal.mean) / cal.std
    h = np.tanh(Xs @ cal.W1 + cal.b1)
    z = h @ cal.W2 + cal.b2
    c = _softplus(z) + _C_FLOOR
    cs, cn = c[:, 0], c[:, 1]
    tot = cs + cn
    f = (cs * lam_sym + cn * lam_neu) / tot
    wt = np.full(len(y), 1.0 / len(y)) if weights is None else weights / np.sum(weights)
    r = f - y
    loss = float(np.sum(wt * r * r)) + 0.5 * weight_decay * float(np.sum(cal.W1**2) + np.sum(cal.W2**2))
    df = 2.0 * wt * r
    dcs = df * (lam_sym - f) / tot
    dcn = df * (lam_neu - f) / tot
    dz = np.column_stack([dcs, dcn]) * expit(z)
    gW2 = h.T @ dz + weight_decay * cal.W2
    gb2 = dz.sum(axis=0)
    dh = (dz @ cal.W2.T) * (1.0 - h * h)
    gW1 = Xs.T @ dh + weight_decay * cal.W1
    gb1 = dh.sum(axis=0)
    return loss, np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])


def train_calibrator(
    X,
    lam_sym,
    lam_neu,
    realized,
    hidden: int = 8,
    epochs: int = 2000,
    step_size: float = 1.0,
    seed: int = 0,
    weights=None,
    weight_decay: float = 1e-3,
) -> ConfidenceCalibrator:
    """Gradient descent with step halving; the loss history never increases.

    Parameters
    ----------
    X : ndarray, shape (n, 4)
        Features from :func:`calibrator_features`.
    lam_sym, lam_neu, realized : ndarray, shape (n,)
    weights : ndarray, shape (n,), optional
        Non-negative record weights, e.g. at-risk counts.
    weight_decay : float
        L2 penalty on the two weight matrices.
    """
    X = np.asarray(X, float)
    lam_sym = np.asarray(lam_sym, float).ravel()
    lam_neu = np.asarray(lam_neu, float).ravel()
    y = np.asarray(realized, float).ravel()
    if len(X) < 16:
        raise ValueError(f"need at least 16 records, got {len(X)}")
    if weights is not None:
        weights = np.asarray(weights, float).ravel()
        if weights.shape != y.shape or np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("weights must be non-negative with a positive sum")
    g = _rng.generator(seed, 501)
    d = X.shape[1]
    lim1 = np.sqrt(6.0 / (d + hidden))
    lim2 = np.sqrt(6.0 / (hidden + 2))
    cal = ConfidenceCalibrator(
        W1=g.uniform(-lim1, lim1, (d, hidden)),
        b1=np.zeros(hidden),
        W2=g.uniform(-lim2, lim2, (hidden, 2)),
        b2=np.zeros(2),
        mean=X.mean(axis=0),
        std=np.maximum(X.std(axis=0), 1e-6),
    )
    theta = cal.flat()
    loss, grad = calibrator_loss_and_grad(cal, X, lam_sym, lam_neu, y, weights, weight_decay)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite calibrator loss")
    history = [loss]
    step = step_size
    for _ in range(epochs):
        accepted = False
        for _ in range(30):
            cand = theta - step * grad
            c_loss, c_grad = calibrator_loss_and_grad(cal.with_flat(cand), X, lam_sym, lam_neu, y, weights, weight_decay)
            if np.isfinite(c_loss) and c_loss <= loss:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        theta, loss, grad = cand, c_loss, c_grad
        history.append(loss)
        step = min(step * 1.2, step_size * 4)
    out = cal.with_flat(theta)
    out.history = tuple(history)
    return out
