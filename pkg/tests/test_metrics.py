import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from clusterabm.engine import sample_competing
from clusterabm.metrics import (
    EventRecord,
    JointEventDistribution,
    brier,
    ece_reliability,
    eete,
    et_f1,
    expected_event_day,
    joint_event_distribution,
    nll,
    predicted_type,
    regime_probability_trace,
    score_forecasts,
    summarize_windows,
    truncated_moving_average,
)

TYPES = ("S->E",)


def _point(day, type_="S->E", types=TYPES, H=7):
    probs = np.zeros((H, len(types)))
    probs[day - 1, types.index(type_)] = 1.0
    return JointEventDistribution("S", types, probs, 0.0)


def _uniform_days(H=7):
    return JointEventDistribution("S", TYPES, np.full((H, 1), 1 / H), 0.0)


def _rec(day, type_="S->E", H=7):
    return EventRecord(agent=0, type=type_, day=day, H=H)


def _brute_brier(vec, true_index):
    return sum((p - (1.0 if k == true_index else 0.0)) ** 2 for k, p in enumerate(vec))


# ---------------------------------------------------------------- joint distribution


def test_zero_hazards_no_event():
    jd = joint_event_distribution(np.zeros((7, 2)), "S", ("a", "b"))
    assert jd.none == 1.0 and np.all(jd.probs == 0)


def test_geometric_two_days():
    p = 1 - math.exp(-1)
    jd = joint_event_distribution(np.full((2, 1), p), "S", ("a",))
    assert jd.probs[:, 0] == pytest.approx([1 - math.exp(-1), math.exp(-1) * (1 - math.exp(-1))], abs=1e-15)
    assert jd.none == pytest.approx(math.exp(-2), abs=1e-15)


def _simulate_first_passage(hazards, n, seed):
    rng = np.random.default_rng(seed)
    H, k = hazards.shape
    cell = np.full(n, H * k)  # index of the no-event cell
    alive = np.ones(n, bool)
    for d in range(H):
        idx = np.flatnonzero(alive)
        out = sample_competing(np.broadcast_to(hazards[d], (len(idx), k)), rng.random(len(idx)))
        hit = out >= 0
        cell[idx[hit]] = d * k + out[hit]
        alive[idx[hit]] = False
    return np.bincount(cell, minlength=H * k + 1) / n


def test_distribution_matches_monte_carlo():
    hazards = np.array([[0.1, 0.3], [0.2, 0.05], [0.4, 0.4]])
    jd = joint_event_distribution(hazards, "X", ("a", "b"))
    n = 10**6
    freq = _simulate_first_passage(hazards, n, seed=4)
    p = jd.outcome_vector()
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(freq - p) <= 4 * se)


@given(arrays(float, st.tuples(st.integers(1, 9), st.integers(1, 3)), elements=st.floats(0, 1)))
@settings(max_examples=100)
def test_distribution_normalised(h):
    jd = joint_event_distribution(h, "X", tuple(f"t{j}" for j in range(h.shape[1])))
    assert abs(jd.outcome_vector().sum() - 1) <= 1e-9
    assert np.all(jd.outcome_vector() >= 0)


def test_invalid_hazards_rejected():
    with pytest.raises(ValueError):
        joint_event_distribution(np.full((2, 1), 1.5), "X", ("a",))
    with pytest.raises(ValueError):
        joint_event_distribution(np.zeros((2, 2)), "X", ("a",))


def test_record_day_within_horizon():
    with pytest.raises(ValueError):
        EventRecord(agent=0, type="S->E", day=8, H=7)
    with pytest.raises(ValueError):
        EventRecord(agent=0, type="S->E", day=None)


# ---------------------------------------------------------------- EETE


def test_eete_examples():
    assert eete([_point(3)], [_rec(3)]) == 0
    none = JointEventDistribution("S", TYPES, np.zeros((7, 1)), 1.0)
    assert eete([none], [_rec(1)]) == 7
    assert expected_event_day(_uniform_days()) == pytest.approx(4.0)
    assert eete([_uniform_days()], [_rec(4)]) == pytest.approx(0.0, abs=1e-12)


def test_eete_ignores_no_event_records():
    assert eete([_point(2), _point(5)], [_rec(2), EventRecord(1, None, None)]) == 0
    assert eete([_point(2)], [EventRecord(1, None, None)]) is None


# ---------------------------------------------------------------- ET-F1


def test_f1_all_correct():
    types = ("I->D", "I->R")
    preds = [_point(1, "I->R", types), _point(2, "I->D", types)]
    assert et_f1(preds, [_rec(1, "I->R"), _rec(2, "I->D")]) == 1.0
    assert et_f1([_point(1)], [_rec(1)]) == 1.0


def test_f1_symmetric_confusion():
    types = ("a", "b")
    # per class TP=2, FP=1, FN=1
    truth = ["a", "a", "a", "b", "b", "b"]
    guess = ["a", "a", "b", "b", "b", "a"]
    preds = [_point(1, g, types) for g in guess]
    recs = [_rec(1, t) for t in truth]
    assert et_f1(preds, recs) == pytest.approx(2 / 3)


def test_type_ties_break_lexicographically():
    jd = JointEventDistribution("I", ("I->R", "I->D"), np.array([[0.25, 0.25]]), 0.5)
    assert predicted_type(jd) == "I->D"


# ---------------------------------------------------------------- NLL and Brier


def test_nll_examples():
    assert nll([_point(2)], [_rec(2)]) == 0
    assert nll([_uniform_days()], [_rec(5)]) == pytest.approx(math.log(7), abs=1e-12)
    assert nll([_point(2)], [_rec(3)]) == pytest.approx(-math.log(1e-12))


def test_brier_examples():
    assert brier([_point(6)], [_rec(6)]) == 0
    uniform8 = JointEventDistribution("S", TYPES, np.full((7, 1), 1 / 8), 1 / 8)
    assert brier([uniform8], [_rec(3)]) == pytest.approx(_brute_brier([1 / 8] * 8, 2), abs=1e-15)
    assert brier([uniform8], [_rec(3)]) == pytest.approx(0.875, abs=1e-15)
    assert brier([_point(1)], [_rec(2)]) == 2.0


def test_brier_rejects_foreign_type():
    with pytest.raises(ValueError):
        brier([_point(1)], [_rec(1, "E->I")])


@st.composite
def prediction_and_truth(draw):
    H = draw(st.integers(1, 7))
    k = draw(st.integers(1, 3))
    raw = draw(arrays(float, H * k + 1, elements=st.floats(0, 1)).filter(lambda v: v.sum() > 1e-6))
    vec = raw / raw.sum()
    types = tuple(f"t{j}" for j in range(k))
    jd = JointEventDistribution("X", types, vec[:-1].reshape(H, k), float(vec[-1]))
    d = draw(st.integers(1, H))
    t = draw(st.sampled_from(types))
    return jd, EventRecord(0, t, d, H)


@given(prediction_and_truth())
@settings(max_examples=150)
def test_score_ranges(case):
    jd, rec = case
    assert 0 <= brier([jd], [rec]) <= 2 + 1e-12
    assert nll([jd], [rec]) >= 0
    assert 0 <= eete([jd], [rec]) <= jd.H


@given(prediction_and_truth(), st.floats(0.01, 1), st.integers(0, 100))
@settings(max_examples=150)
def test_moving_mass_off_truth_never_helps(case, frac, target):
    jd, rec = case
    vec = jd.outcome_vector().copy()
    k = len(jd.types)
    true_idx = (rec.day - 1) * k + jd.types.index(rec.type)
    other = target % len(vec)
    if other == true_idx:
        return
    moved = vec[true_idx] * frac
    vec[true_idx] -= moved
    vec[other] += moved
    jd2 = JointEventDistribution("X", jd.types, vec[:-1].reshape(jd.H, k), float(vec[-1]))
    assert nll([jd2], [rec]) >= nll([jd], [rec]) - 1e-12
    assert brier([jd2], [rec]) >= brier([jd], [rec]) - 1e-12


def test_perfect_forecasts_score_perfectly():
    preds = [_point(d) for d in range(1, 8)]
    recs = [_rec(d) for d in range(1, 8)]
    s = score_forecasts(preds, recs)
    assert (s["eete"], s["et_f1"], s["nll"], s["brier"], s["n_events"]) == (0, 1, 0, 0, 7)


def test_score_skips_unscorable_records():
    s = score_forecasts([_point(2), _uniform_days()], [_rec(2), None])
    assert s["n_events"] == 1 and s["nll"] == 0


def test_summary_over_windows():
    out = summarize_windows([{"eete": 1.0, "nll": 2.0}, {"eete": 3.0, "nll": None}])
    assert out["eete"] == {"mean": 2.0, "std": 1.0, "windows": 2}
    assert out["nll"]["windows"] == 1
    assert out["brier"]["mean"] is None


# ---------------------------------------------------------------- calibration


def test_ece_extremes():
    assert ece_reliability(np.ones(50), np.ones(50))[0] == 0
    assert ece_reliability(np.ones(50), np.zeros(50))[0] == 1


def test_ece_table_layout():
    ece, table = ece_reliability([0.05, 0.15, 0.95], [1, 0, 1], bins=10)
    assert len(table) == 10
    assert [r["count"] for r in table] == [1, 1, 0, 0, 0, 0, 0, 0, 0, 1]
    assert ece == pytest.approx((0.95 + 0.15 + 0.05) / 3)


@pytest.mark.parametrize("conf, corr, bins", [([], [], 10), ([0.5], [1], 1), ([1.2], [1], 10), ([0.5, 0.5], [1], 10)])
def test_ece_errors(conf, corr, bins):
    with pytest.raises(ValueError):
        ece_reliability(conf, corr, bins)


# ---------------------------------------------------------------- regime trace


def test_regime_trace_point_mass_and_uniform():
    probs = np.zeros((4, 5, 3))
    realized = np.array([0, 2, 1, 1])
    probs[np.arange(4), :, realized] = 1.0
    trace, ma = regime_probability_trace(probs, realized)
    assert np.all(trace == 1) and np.all(ma == 1)
    trace, _ = regime_probability_trace(np.full((4, 5, 3), 1 / 3), realized)
    assert trace == pytest.approx(np.full(4, 1 / 3))


def test_truncated_moving_average():
    assert truncated_moving_average([0.5, 0.7, 0.9]).tolist() == pytest.approx([0.5, 0.6, 0.7])
    v = np.arange(10.0)
    assert truncated_moving_average(v)[9] == pytest.approx(np.mean(v[3:10]))


def test_regime_label_misalignment():
    with pytest.raises(ValueError):
        regime_probability_trace(np.full((4, 2, 3), 1 / 3), np.zeros(3, int))
    with pytest.raises(ValueError):
        regime_probability_trace(np.full((2, 2, 3), 1 / 3), np.array([0, 3]))
