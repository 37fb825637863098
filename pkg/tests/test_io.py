import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clusterabm.cli import EXIT_OK, EXIT_USAGE, main
from clusterabm.core import SEIRD
from clusterabm.io import (
    directory_digest,
    fill_gaps,
    generate_synthetic_scenario,
    ingest_case_timelines,
    ingest_index_series,
    ingest_pageviews,
    label_index_regimes,
    load_scenario,
    normalize_pageviews,
    read_case_timelines,
    read_events,
    read_json,
    read_trajectories,
    save_scenario,
    timelines_to_labels,
    write_events,
    write_trajectories,
)
from clusterabm.symbolic.context import assemble_contexts, cluster_graph
from clusterabm.symbolic.oracle import oracle_hazards

S, E, I, R, D = range(5)


def _csv(text):
    return io.StringIO(text)


# ---------------------------------------------------------------- case timelines


def test_timeline_to_labels():
    labels, rep = ingest_case_timelines(_csv("agent_id,infection,recovery,death\n0,10,20,\n"), n=1, T=30)
    row = labels[0]
    assert np.all(row[:3] == S)
    assert np.all(row[3:10] == E)
    assert np.all(row[10:20] == I)
    assert np.all(row[20:] == R)
    assert rep.accepted == 1 and not rep.rejected


def test_no_infection_stays_susceptible():
    labels, _ = ingest_case_timelines(_csv("agent_id,infection,recovery,death\n0,,,\n"), n=2, T=15)
    assert np.all(labels == S)


def test_death_is_absorbing():
    labels, _ = ingest_case_timelines(_csv("agent_id,infection,recovery,death\n0,8,,12\n"), n=1, T=20, incubation=5)
    assert labels[0, 2] == S and labels[0, 3] == E and labels[0, 11] == I and np.all(labels[0, 12:] == D)


def test_inconsistent_rows_rejected_and_counted():
    text = "agent_id,infection,recovery,death\n0,10,20,\n1,10,,5\n2,,4,\n3,7,,\n"
    rows, rep = read_case_timelines(_csv(text))
    assert rep.accepted == 2 and len(rep.rejected) == 2
    assert rep.total == 4
    assert [r["line"] for r in rep.rejected] == [3, 4]


def test_iso_dates_relative_to_start():
    rows, _ = read_case_timelines(_csv("agent_id,infection,recovery,death\n0,2020-03-11,2020-03-21,\n"), start="2020-03-01")
    assert (rows[0].infection, rows[0].recovery) == (10, 20)


@pytest.mark.parametrize("incubation", [4, 8])
def test_incubation_range(incubation):
    with pytest.raises(ValueError):
        timelines_to_labels([], 1, 5, incubation=incubation)


# ---------------------------------------------------------------- index series


def test_flat_series_is_neutral():
    labels, r = label_index_regimes(np.full(20, 100.0))
    assert set(labels) == {"Neutral"} and np.all(r == 0)


def test_steady_rise_is_bullish_after_warmup():
    v = 100.0 * 1.01 ** np.arange(15)
    labels, _ = label_index_regimes(v, k=5)
    assert labels[:4] == ["Neutral"] * 4
    assert labels[4:] == ["Bullish"] * 11


def test_steady_fall_is_bearish():
    labels, _ = label_index_regimes(100.0 * 0.99 ** np.arange(10), k=5)
    assert labels[4:] == ["Bearish"] * 6


def test_threshold_band():
    labels, _ = label_index_regimes([100, 100, 100, 100, 100.6], k=5, theta=0.005)
    assert labels[4] == "Bullish"
    labels, _ = label_index_regimes([100, 100, 100, 100, 100.4], k=5, theta=0.005)
    assert labels[4] == "Neutral"
    labels, _ = label_index_regimes([100, 100, 100, 100, 99.4], k=5, theta=0.005)
    assert labels[4] == "Bearish"


def test_short_gaps_filled_long_gaps_rejected():
    assert fill_gaps([1.0, np.nan, np.nan, 4.0]).tolist() == [1.0, 1.0, 1.0, 4.0]
    with pytest.raises(ValueError):
        fill_gaps([1.0, np.nan, np.nan, np.nan, np.nan, 2.0])


def test_index_series_calendar_gap():
    text = "date,value\n2024-01-01,100\n2024-01-02,101\n2024-01-05,102\n2024-01-06,103\n"
    out = ingest_index_series(_csv(text))
    assert out["values"].tolist() == [100, 101, 101, 101, 102, 103]
    assert len(out["labels"]) == 6
    too_long = "date,value\n2024-01-01,100\n2024-01-06,101\n"
    with pytest.raises(ValueError):
        ingest_index_series(_csv(too_long))


# ---------------------------------------------------------------- page views


def test_pageview_normalisation():
    idx, flags = normalize_pageviews([0, 50, 100])
    assert idx.tolist() == [0.0, 0.5, 1.0] and flags == []


def test_pageview_spike():
    idx, _ = normalize_pageviews([10, 10, 1000, 10])
    assert idx.tolist() == [0.0, 0.0, 1.0, 0.0]


def test_constant_pageviews_flagged():
    idx, flags = normalize_pageviews([7, 7, 7])
    assert np.all(idx == 0.5) and len(flags) == 1


@given(st.lists(st.integers(0, 10**6), min_size=2, max_size=30), st.floats(0.5, 100), st.floats(0, 1000))
@settings(max_examples=100)
def test_pageviews_affine_invariant(counts, a, b):
    c = np.array(counts, float)
    x, _ = normalize_pageviews(c)
    y, _ = normalize_pageviews(a * c + b)
    assert np.allclose(x, y, atol=1e-9)
    assert np.all((x >= 0) & (x <= 1))


def test_pageviews_csv():
    out = ingest_pageviews(_csv("date,views\n2024-01-01,0\n2024-01-02,\n2024-01-03,100\n"))
    assert out["index"].tolist() == [0.0, 0.0, 1.0]


def test_negative_pageviews_rejected():
    with pytest.raises(ValueError):
        normalize_pageviews([1, -1])


# ---------------------------------------------------------------- synthetic scenarios


@pytest.fixture(scope="module")
def shock():
    return generate_synthetic_scenario("seird_shock", n=120, T=60, seed=3)


def test_shock_cuts_generator_infection_hazard(shock):
    _, data = shock
    cg = cluster_graph(data.graph, data.labels)
    states = data.truth[:, 40]
    before = data.exogenous.copy()
    before[:] = 0.0
    j = SEIRD.transition_index("S->E")
    for ctx_pre, ctx_post in zip(
        assemble_contexts(data.labels, states, SEIRD.states, before, data.exo_names, cg, 40),
        assemble_contexts(data.labels, states, SEIRD.states, data.exogenous, data.exo_names, cg, 40),
    ):
        pre = oracle_hazards(ctx_pre, data.generator_rules, SEIRD).hazards[j]
        post = oracle_hazards(ctx_post, data.generator_rules, SEIRD).hazards[j]
        if pre > 0:
            assert post / pre == pytest.approx(0.2, rel=1e-12)


def test_shock_exogenous_step(shock):
    _, data = shock
    s = data.exogenous[:, 0]
    assert np.all(s[:40] == 0) and np.allclose(s[40:], 0.8)


def test_generator_hazards_shape(shock):
    config, data = shock
    assert config.generator_hazards.shape == (59, 3, SEIRD.n_transitions)
    assert data.truth.shape == (120, 60)


def test_same_seed_same_truth():
    _, a = generate_synthetic_scenario("seird_shock", n=80, T=30, seed=11)
    _, b = generate_synthetic_scenario("seird_shock", n=80, T=30, seed=11)
    _, c = generate_synthetic_scenario("seird_shock", n=80, T=30, seed=12)
    assert a.truth.tobytes() == b.truth.tobytes()
    assert a.truth.tobytes() != c.truth.tobytes()


def test_attention_cumulative_interest_monotone():
    _, data = generate_synthetic_scenario("attention_lifecycle", n=150, T=60, seed=2)
    cum = np.array(data.meta["cumulative_interested"])
    assert np.all(np.diff(cum) >= 0)
    assert cum[-1] > cum[0]


def test_market_labels_cover_scenario():
    _, data = generate_synthetic_scenario("market_regimes", n=60, T=83, seed=1)
    assert len(data.meta["regimes"]) == 83
    assert set(data.meta["regimes"]) <= {"Bearish", "Bullish", "Neutral"}


def test_unknown_template():
    with pytest.raises(ValueError):
        generate_synthetic_scenario("sir", n=10, T=10)


# ---------------------------------------------------------------- artifacts


def test_trajectory_roundtrip(tmp_path):
    traj = np.random.default_rng(0).integers(0, 5, (7, 4))
    write_trajectories(tmp_path / "t.csv", traj, SEIRD, start_day=3)
    back, start = read_trajectories(tmp_path / "t.csv", SEIRD)
    assert start == 3 and np.array_equal(back, traj)


def test_trajectory_missing_cell(tmp_path):
    (tmp_path / "t.csv").write_text("day,agent_id,state\n0,0,S\n0,1,S\n1,0,E\n")
    with pytest.raises(ValueError):
        read_trajectories(tmp_path / "t.csv", SEIRD)


def test_events_sorted_roundtrip(tmp_path):
    events = [(5, 2, "I", "R"), (3, 1, S, E), (3, 0, "E", "I")]
    write_events(tmp_path / "e.csv", events, SEIRD)
    assert read_events(tmp_path / "e.csv", SEIRD) == [(3, 0, E, I), (3, 1, S, E), (5, 2, I, R)]


def test_scenario_roundtrip(tmp_path):
    config, data = generate_synthetic_scenario("seird_shock", n=60, T=30, seed=4)
    written = save_scenario(tmp_path, config, data, {"name": "seird_shock", "n": 60, "T": 30, "params": {}})
    assert "scenario.toml" in written
    _, back = load_scenario(tmp_path / "scenario.toml")
    assert np.array_equal(back.truth, data.truth)
    assert np.array_equal(back.labels, data.labels)
    assert back.graph.n == data.graph.n


def test_tampered_truth_detected(tmp_path):
    config, data = generate_synthetic_scenario("seird_shock", n=40, T=20, seed=4)
    save_scenario(tmp_path, config, data, {"name": "seird_shock", "n": 40, "T": 20, "params": {}})
    truth = data.truth.copy()
    truth[0, -1] = (truth[0, -1] + 1) % 5
    write_trajectories(tmp_path / "truth.csv", truth, SEIRD)
    with pytest.raises(ValueError):
        load_scenario(tmp_path / "scenario.toml")


# ---------------------------------------------------------------- CLI


def test_generate_is_reproducible(tmp_path):
    args = ["generate", "--template", "seird_shock", "--n", "60", "--T", "30", "--seed", "5"]
    assert main([*args, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main([*args, "--out", str(tmp_path / "b")]) == EXIT_OK
    assert directory_digest(tmp_path / "a") == directory_digest(tmp_path / "b")


def test_missing_required_argument(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path), "--seed", "1"]) == EXIT_USAGE


def test_unknown_flag(tmp_path, capsys):
    assert main(["cost-report", "--out", str(tmp_path), "--bogus"]) == EXIT_USAGE


def test_help_exits_cleanly(capsys):
    assert main(["--help"]) == 0
    assert "generate" in capsys.readouterr().out


def test_missing_scenario_is_input_error(tmp_path, capsys):
    code = main(["cluster", "--scenario", str(tmp_path / "none.toml"), "--out", str(tmp_path / "c"), "--seed", "1"])
    assert code == 3


def test_cost_report(tmp_path):
    assert main(["cost-report", "--out", str(tmp_path)]) == EXIT_OK
    rows = read_json(tmp_path / "cost.json")["projections"]
    one = [r for r in rows if r["alpha"] == 1.0][0]
    assert (one["flat"]["calls"], one["hierarchical"]["calls"]) == (8250, 1083)
    assert (tmp_path / "manifest.json").is_file()


def test_pipeline_emits_all_artifacts(tmp_path):
    scen = tmp_path / "scen"
    assert main(["generate", "--template", "seird_shock", "--n", "200", "--T", "60", "--seed", "7",
                 "--out", str(scen)]) == EXIT_OK
    assert main(["cluster", "--scenario", str(scen / "scenario.toml"), "--seed", "7", "--out", str(tmp_path / "cl")]) == EXIT_OK
    assert {"clusters.csv", "quality.json", "manifest.json"} <= {p.name for p in (tmp_path / "cl").iterdir()}
    run = tmp_path / "run"
    assert main(["simulate", "--scenario", str(scen / "scenario.toml"), "--clusters", str(tmp_path / "cl" / "clusters.csv"),
                 "--windows", "--seed", "7", "--out", str(run)]) == EXIT_OK
    assert {"trajectories.csv", "events.csv", "hazard_trace.csv", "forecasts.json", "manifest.json"} <= {
        p.name for p in run.iterdir()}
    assert main(["evaluate", "--run", str(run), "--truth", str(scen / "truth.csv")]) == EXIT_OK
    ev = run / "evaluation"
    assert {"metrics.json", "reliability_bins.csv", "regime_trace.csv", "manifest.json"} <= {p.name for p in ev.iterdir()}
    metrics = read_json(ev / "metrics.json")
    assert 0 <= metrics["ece"] <= 1
    assert metrics["summary"]["eete"]["windows"] >= 1
