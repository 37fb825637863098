import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clusterabm.fusion import (
    FUSION_MODES,
    ConfidenceCalibrator,
    calibrator_features,
    calibrator_loss_and_grad,
    default_confidence,
    fuse,
    fuse_mode,
    train_calibrator,
)

from .oracles import finite_difference

unit = st.floats(0, 1)
conf = st.floats(1e-6, 1e6)


# ---------------------------------------------------------------- fuse


def test_equal_confidence_mean():
    assert fuse(0.2, 1, 0.4, 1) == pytest.approx(0.3, abs=1e-15)


def test_zero_neural_confidence_returns_symbolic_exactly():
    assert fuse(0.123456789, 2.0, 0.9, 0.0) == 0.123456789


def test_weighted_example():
    assert fuse(0.1, 3, 0.5, 1) == pytest.approx(0.2, abs=1e-15)


@pytest.mark.parametrize("cs, cn", [(0, 0), (-1, 2), (1, -0.1)])
def test_fuse_rejects_bad_confidences(cs, cn):
    with pytest.raises(ValueError):
        fuse(0.1, cs, 0.2, cn)


@given(unit, conf, unit, conf)
@settings(max_examples=200)
def test_convexity(ls, cs, ln, cn):
    f = fuse(ls, cs, ln, cn)
    assert min(ls, ln) <= f <= max(ls, ln)


@given(unit, conf, unit, conf, st.floats(1e-3, 1e3))
@settings(max_examples=200)
def test_scale_invariance(ls, cs, ln, cn, k):
    assert fuse(ls, k * cs, ln, k * cn) == pytest.approx(fuse(ls, cs, ln, cn), abs=1e-15)


# ---------------------------------------------------------------- default confidence


def test_equal_uncertainty_gives_arithmetic_mean():
    cs, cn = default_confidence(0.2, 0.2)
    assert cs == cn
    assert fuse(0.1, cs, 0.7, cn) == pytest.approx(0.4)


def test_confidence_ratio_thousand():
    cs, cn = default_confidence(0.0, 0.999)
    assert cs / cn == pytest.approx(1000.0, rel=1e-12)


def test_confidence_vanishes_for_large_u():
    assert default_confidence(1e12, 0.0)[0] < 1e-11


def test_negative_uncertainty_rejected():
    with pytest.raises(ValueError):
        default_confidence(-0.1, 0.2)


@given(st.floats(0, 100), st.floats(0, 100))
def test_confidence_monotone(a, b):
    ca, _ = default_confidence(a, 0.0)
    cb, _ = default_confidence(b, 0.0)
    if a < b:
        assert ca >= cb


# ---------------------------------------------------------------- modes


@given(st.lists(unit, min_size=3, max_size=3), st.lists(unit, min_size=3, max_size=3))
@settings(max_examples=50)
def test_ablation_modes_reduce(ls, ln):
    ls, ln = np.array(ls), np.array(ln)
    u = np.full(3, 0.1)
    assert np.array_equal(fuse_mode("symbolic_only", ls, u, ln, u).lam, ls)
    assert np.array_equal(fuse_mode("neural_only", ls, u, ln, u).lam, ln)
    assert np.array_equal(fuse_mode("naive_mean", ls, u, ln, u).lam, fuse(ls, 1.0, ln, 1.0))


def test_modes_listed_and_unknown_rejected():
    assert set(FUSION_MODES) == {"default_reciprocal", "learned_calibrator", "naive_mean", "symbolic_only", "neural_only"}
    with pytest.raises(ValueError):
        fuse_mode("average", 0.1, 0.1, 0.2, 0.1)
    with pytest.raises(ValueError):
        fuse_mode("learned_calibrator", 0.1, 0.1, 0.2, 0.1)


def test_w_sym_from_default_mode():
    fh = fuse_mode("default_reciprocal", np.array([0.1]), np.array([0.0]), np.array([0.5]), np.array([0.999]))
    assert fh.w_sym[0] == pytest.approx(1000 / 1001)


# ---------------------------------------------------------------- calibrator


def _records(n, sym_noise, neu_noise, seed):
    g = np.random.default_rng(seed)
    y = g.uniform(0.05, 0.6, n)
    ls = np.clip(y + g.normal(0, sym_noise, n), 0, 1)
    ln = np.clip(y + g.normal(0, neu_noise, n), 0, 1)
    us = g.uniform(0.01, 0.3, n)
    un = g.uniform(0.01, 0.3, n)
    X = calibrator_features(us, un, g.uniform(0, 1, (n, 2)))
    return X, ls, ln, y


def test_correct_symbolic_gets_upweighted():
    g = np.random.default_rng(0)
    n = 200
    y = g.uniform(0.05, 0.6, n)
    ln = g.uniform(0, 1, n)
    X = calibrator_features(g.uniform(0.01, 0.3, n), g.uniform(0.01, 0.3, n), g.uniform(0, 1, (n, 2)))
    cal = train_calibrator(X[:150], y[:150], ln[:150], y[:150], epochs=500)
    cs, cn = cal.confidences(X[150:])
    assert np.all(cs / cn > 3)


def test_symmetric_quality_close_to_mean():
    X, ls, ln, y = _records(300, 0.05, 0.05, seed=1)
    cal = train_calibrator(X[:200], ls[:200], ln[:200], y[:200], epochs=500)
    cs, cn = cal.confidences(X[200:])
    fused = fuse(ls[200:], cs, ln[200:], cn)
    assert np.max(np.abs(fused - (ls[200:] + ln[200:]) / 2)) < 0.05


def test_calibrator_outputs_positive():
    X, ls, ln, y = _records(40, 0.0, 0.5, seed=2)
    cal = train_calibrator(X, ls, ln, y, epochs=50)
    cs, cn = cal.confidences(np.random.default_rng(3).normal(size=(100, 4)) * 100)
    assert np.all(cs > 0) and np.all(cn > 0)


def test_calibrator_loss_non_increasing():
    X, ls, ln, y = _records(60, 0.05, 0.2, seed=4)
    cal = train_calibrator(X, ls, ln, y, epochs=200, weights=np.arange(60) + 1.0)
    assert np.all(np.diff(cal.history) <= 1e-8)


def test_calibrator_deterministic():
    X, ls, ln, y = _records(40, 0.05, 0.2, seed=5)
    a = train_calibrator(X, ls, ln, y, epochs=30, seed=3)
    b = train_calibrator(X, ls, ln, y, epochs=30, seed=3)
    assert a.flat().tobytes() == b.flat().tobytes()


@pytest.mark.parametrize("weights, decay", [(None, 0.0), ("ramp", 1e-3)])
def test_calibrator_gradient(weights, decay):
    X, ls, ln, y = _records(20, 0.05, 0.2, seed=6)
    w = None if weights is None else np.linspace(1, 5, 20)
    g = np.random.default_rng(7)
    cal = ConfidenceCalibrator(g.normal(size=(4, 8)), g.normal(size=8), g.normal(size=(8, 2)), g.normal(size=2),
                               X.mean(axis=0), X.std(axis=0))

    def f(theta):
        return calibrator_loss_and_grad(cal.with_flat(theta), X, ls, ln, y, w, decay)[0]

    analytic = calibrator_loss_and_grad(cal, X, ls, ln, y, w, decay)[1]
    numeric = finite_difference(f, cal.flat(), h=1e-5)
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-6)
    assert rel.max() < 1e-4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_calibrator_preconditions():
    X, ls, ln, y = _records(15, 0.05, 0.2, seed=8)
    with pytest.raises(ValueError):
        train_calibrator(X, ls, ln, y)
    X, ls, ln, y = _records(20, 0.05, 0.2, seed=8)
    with pytest.raises(ValueError):
        train_calibrator(X, ls, ln, y, weights=np.zeros(20))
    X[0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        train_calibrator(X, ls, ln, y)


def test_learned_mode_uses_calibrator():
    X, ls, ln, y = _records(40, 0.0, 0.3, seed=9)
    cal = train_calibrator(X, ls, ln, y, epochs=100)
    lam_s, lam_n = np.array([[0.1, 0.2]]), np.array([[0.3, 0.6]])
    u = np.array([[0.05, 0.05]])
    fh = fuse_mode("learned_calibrator", lam_s, u, lam_n, u, calibrator=cal, context_stats=np.zeros((2, 2)))
    cs, cn = cal.confidences(calibrator_features(u, u, np.zeros((2, 2))))
    assert fh.lam.shape == (1, 2)
    assert np.allclose(fh.lam.ravel(), fuse(lam_s.ravel(), cs, lam_n.ravel(), cn))
