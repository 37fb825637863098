"""Cluster-level neural hazard regressor with ensemble uncertainty.

Features per (cluster, day) concatenate a tabular snapshot, a summary of a
trailing window and the cluster's mean structural embedding. A small
tanh MLP with logistic outputs is fitted by full-batch gradient descent on a
class-weighted squared error; an ensemble of independently seeded members
provides the predictive spread.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from . import rng as _rng

__all__ = [
    "FeatureManifest",
    "make_manifest",
    "window_summary",
    "raw_features",
    "assemble_features",
    "empirical_targets",
    "class_weights",
    "MLPParams",
    "init_params",
    "mlp_loss_and_grad",
    "train_member",
    "train_regressor",
    "HazardRegressor",
    "predict_hazards",
    "TrainConfig",
    "STD_FLOOR",
    "Z_CLIP",
]

STD_FLOOR = 1e-6
Z_CLIP = 10.0
FORMAT_VERSION = 1


# ---------------------------------------------------------------- features


@dataclass
class FeatureManifest:
    """Column layout and standardisation statistics.

    Statistics are filled by :func:`FeatureManifest.fit` from lookback
    instances only and are then frozen for the window.
    """

    states: tuple[str, ...]
    exo_names: tuple[str, ...]
    d_H: int
    window: int
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    @property
    def channels(self) -> tuple[str, ...]:
        return tuple(f"phi_{s}" for s in self.states) + tuple(f"exo_{e}" for e in self.exo_names)

    @property
    def names(self) -> list[str]:
        cols = [f"phi_{s}" for s in self.states]
        cols += ["deg_mean", "deg_std", "deg_min", "deg_max"]
        cols += [f"exo_{e}" for e in self.exo_names]
        for stat in ("mean", "last", "trend"):
            cols += [f"{c}_{stat}" for c in self.channels]
        cols += [f"emb_{i}" for i in range(self.d_H)]
        return cols

    @property
    def widths(self) -> dict:
        S, m = len(self.states), len(self.exo_names)
        return {"tabular": S + 4 + m, "temporal": 3 * (S + m), "graph": self.d_H}

    @property
    def width(self) -> int:
        return sum(self.widths.values())

    def fit(self, X: np.ndarray) -> "FeatureManifest":
        self.mean = X.mean(axis=0)
        self.std = np.maximum(X.std(axis=0), STD_FLOOR)
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        if X.shape[-1] != self.width:
            raise ValueError(f"feature width {X.shape[-1]} does not match manifest width {self.width}")
        if self.mean is None:
            raise RuntimeError("manifest statistics have not been fitted")
        # clipping keeps far out-of-range inputs from overflowing the trunk
        return np.clip((X - self.mean) / self.std, -Z_CLIP, Z_CLIP)

    def to_dict(self) -> dict:
        return {
            "states": list(self.states),
            "exo_names": list(self.exo_names),
            "d_H": self.d_H,
            "window": self.window,
            "widths": self.widths,
            "names": self.names,
            "mean": None if self.mean is None else self.mean.tolist(),
            "std": None if self.std is None else self.std.tolist(),
        }


def make_manifest(states: Sequence[str], exo_names: Sequence[str], d_H: int, window: int = 7) -> FeatureManifest:
    if window < 2:
        raise ValueError("feature window must be >= 2 days")
    return FeatureManifest(tuple(states), tuple(exo_names), int(d_H), int(window))


def window_summary(series: np.ndarray) -> np.ndarray:
    """Per-channel ``(mean, last, least-squares slope)`` of a ``(w, c)`` window."""
    series = np.asarray(series, float)
    w = len(series)
    x = np.arange(w) - (w - 1) / 2.0
    slope = (x @ (series - series.mean(axis=0))) / np.sum(x**2)
    return np.concatenate([series.mean(axis=0), series[-1], slope])


def raw_features(
    phi_history: np.ndarray,
    exogenous: np.ndarray,
    t: int,
    window: int,
    degree_stats: np.ndarray,
    graph_embedding: np.ndarray,
) -> np.ndarray:
    """Unstandardised feature rows for every cluster at day ``t``.

    Parameters
    ----------
    phi_history : ndarray, shape (days, K, S)
        State composition per day and cluster; only days ``<= t`` are read.
    exogenous : ndarray, shape (T, m)
    degree_stats : ndarray, shape (K, 4)
    graph_embedding : ndarray, shape (K, d_H)
    """
    if t - window + 1 < 0:
        raise ValueError(f"day {t} has fewer than {window} days of history")
    K = phi_history.shape[1]
    lo = t - window + 1
    phi_win = phi_history[lo : t + 1]  # (w, K, S)
    exo_win = exogenous[lo : t + 1]  # (w, m)
    rows = []
    for k in range(K):
        chan = np.hstack([phi_win[:, k, :], exo_win])
        rows.append(np.concatenate([phi_history[t, k], degree_stats[k], exogenous[t], window_summary(chan), graph_embedding[k]]))
    return np.vstack(rows)


def assemble_features(
    phi_history, exogenous, t: int, degree_stats, graph_embedding, manifest: FeatureManifest, standardize: bool = True
) -> np.ndarray:
    X = raw_features(np.asarray(phi_history, float), np.asarray(exogenous, float).reshape(len(exogenous), -1), t,
                     manifest.window, np.asarray(degree_stats, float), np.asarray(graph_embedding, float))
    if X.shape[1] != manifest.width:
        raise ValueError(f"feature width {X.shape[1]} does not match manifest width {manifest.width}")
    return manifest.transform(X) if standardize else X


def empirical_targets(events: np.ndarray, at_risk: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed per-day rates ``(events + 0.5) / (at_risk + 1)`` and a validity mask."""
    events = np.asarray(events, float)
    at_risk = np.asarray(at_risk, float)
    y = (events + 0.5) / (at_risk + 1.0)
    return y, at_risk > 0


def class_weights(events: np.ndarray) -> np.ndarray:
    """Per-transition weights ``max(1, mean_count / count)`` from event counts."""
    counts = np.asarray(events, float).reshape(-1, np.shape(events)[-1]).sum(axis=0)
    counts = np.maximum(counts, 1.0)
    return np.maximum(1.0, counts.mean() / counts)


# ---------------------------------------------------------------- model


@dataclass
class MLPParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def arrays(self):
        return (self.W1, self.b1, self.W2, self.b2, self.W3, self.b3)

    @property
    def shapes(self):
        return [a.shape for a in self.arrays()]

    @classmethod
    def unflat(cls, vec: np.ndarray, shapes) -> "MLPParams":
        out, pos = [], 0
        for shp in shapes:
            size = int(np.prod(shp))
            out.append(vec[pos : pos + size].reshape(shp))
            pos += size
        return cls(*out)

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())


def init_params(d_in: int, hidden: tuple[int, int], d_out: int, seed: int) -> MLPParams:
    g = _rng.generator(seed, 401)
    h1, h2 = hidden

    def glorot(a, b):
        lim = np.sqrt(6.0 / (a + b))
        return g.uniform(-lim, lim, (a, b))

    return MLPParams(glorot(d_in, h1), np.zeros(h1), glorot(h1, h2), np.zeros(h2), glorot(h2, d_out), np.zeros(d_out))


def _forward(p: MLPParams, X):
    a1 = np.tanh(X @ p.W1 + p.b1)
    a2 = np.tanh(a1 @ p.W2 + p.b2)
    out = expit(a2 @ p.W3 + p.b3)
    return a1, a2, out


def mlp_predict(p: MLPParams, X) -> np.ndarray:
    return _forward(p, X)[2]


def mlp_loss_and_grad(p: MLPParams, X, Y, M, w, weight_decay: float = 0.0):
    """Weighted masked squared error and its gradient.

    ``L = sum(M * w * (yhat - Y)^2) / sum(M) + weight_decay / 2 * |theta|^2``
    with ``M`` the validity mask and ``w`` per-transition weights.
    """
    a1, a2, out = _forward(p, X)
    Wm = M * w[None, :]
    denom = max(float(M.sum()), 1.0)
    r = out - Y
    loss = float(np.sum(Wm * r * r) / denom)
    reg = 0.5 * weight_decay * sum(float(np.sum(a * a)) for a in (p.W1, p.W2, p.W3))
    d_out = 2.0 * Wm * r / denom
    dz3 = d_out * out * (1.0 - out)
    gW3 = a2.T @ dz3 + weight_decay * p.W3
    gb3 = dz3.sum(axis=0)
    dz2 = (dz3 @ p.W3.T) * (1.0 - a2 * a2)
    gW2 = a1.T @ dz2 + weight_decay * p.W2
    gb2 = dz2.sum(axis=0)
    dz1 = (dz2 @ p.W2.T) * (1.0 - a1 * a1)
    gW1 = X.T @ dz1 + weight_decay * p.W1
    gb1 = dz1.sum(axis=0)
    return loss + reg, MLPParams(gW1, gb1, gW2, gb2, gW3, gb3)


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, int] = (64, 64)
    members: int = 5
    epochs: int = 400
    step_size: float = 0.5
    weight_decay: float = 1e-4
    seed: int = 0


def train_member(X, Y, M, w, cfg: TrainConfig, seed: int):
    """Full-batch gradient descent with step halving on any loss increase.

    Returns the parameters and the per-epoch loss history, which is
    non-increasing by construction.
    """
    p = init_params(X.shape[1], cfg.hidden, Y.shape[1], seed)
    theta = p.flat()
    shapes = p.shapes
    step = cfg.step_size
    loss, grad = mlp_loss_and_grad(p, X, Y, M, w, cfg.weight_decay)
    history = [loss]
    for epoch in range(cfg.epochs):
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
        g = grad.flat()
        accepted = False
        for _ in range(30):
            cand = theta - step * g
            cp = MLPParams.unflat(cand, shapes)
            c_loss, c_grad = mlp_loss_and_grad(cp, X, Y, M, w, cfg.weight_decay)
            if np.isfinite(c_loss) and c_loss <= loss:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        theta, loss, grad = cand, c_loss, c_grad
        history.append(loss)
        step = min(step * 1.2, cfg.step_size * 4)
    return MLPParams.unflat(theta, shapes), history


@dataclass
class HazardRegressor:
    members: list
    seeds: tuple[int, ...]
    d_in: int
    d_out: int
    hidden: tuple[int, int]
    histories: list = field(default_factory=list)

    @property
    def parameter_count(self) -> int:
        return sum(m.size for m in self.members)

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        return predict_hazards(self, X)

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "widths": [self.d_in, *self.hidden, self.d_out],
            "seeds": list(self.seeds),
            "params": [m.flat().tolist() for m in self.members],
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "HazardRegressor":
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {d.get('version')}")
        d_in, h1, h2, d_out = d["widths"]
        shapes = [(d_in, h1), (h1,), (h1, h2), (h2,), (h2, d_out), (d_out,)]
        members = [MLPParams.unflat(np.asarray(v, float), shapes) for v in d["params"]]
        return cls(members=members, seeds=tuple(d["seeds"]), d_in=d_in, d_out=d_out, hidden=(h1, h2))

    @classmethod
    def load(cls, path) -> "HazardRegressor":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_regressor(X, Y, M=None, w=None, cfg: TrainConfig = TrainConfig()) -> HazardRegressor:
    """Fit ``cfg.members`` independently seeded members on the same instances.

    Parameters
    ----------
    X : ndarray, shape (n_instances, d_in)
        Standardised features.
    Y : ndarray, shape (n_instances, n_transitions)
        Target hazards in ``[0, 1]``.
    M : ndarray of bool, optional
        Validity mask; entries with zero at-risk count are excluded.
    w : ndarray, optional
        Per-transition loss weights.
    """
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    if len(X) < 8:
        raise ValueError(f"need at least 8 training instances, got {len(X)}")
    if np.any(Y < 0) or np.any(Y > 1):
        raise ValueError("targets must lie in [0, 1]")
    M = np.ones_like(Y) if M is None else np.asarray(M, float)
    w = np.ones(Y.shape[1]) if w is None else np.asarray(w, float)
    # canonical instance order so the fit does not depend on input order
    order = np.lexsort(np.hstack([X, Y, M]).T[::-1])
    X, Y, M = X[order], Y[order], M[order]
    seeds = tuple(int(cfg.seed) * 1000 + e for e in range(cfg.members))
    members, histories = [], []
    for s in seeds:
        p, h = train_member(X, Y, M, w, cfg, s)
        members.append(p)
        histories.append(h)
    return HazardRegressor(members=members, seeds=seeds, d_in=X.shape[1], d_out=Y.shape[1], hidden=cfg.hidden, histories=histories)


def predict_hazards(model: HazardRegressor, X) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble mean and population standard deviation per transition."""
    X = np.atleast_2d(np.asarray(X, float))
    if X.shape[1] != model.d_in:
        raise ValueError(f"feature width {X.shape[1]} does not match model width {model.d_in}")
    preds = np.stack([mlp_predict(m, X) for m in model.members])
    return preds.mean(axis=0), preds.std(axis=0)
