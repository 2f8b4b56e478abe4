import numpy as np
import pytest

from conftest import simulator
from qadaptive import metrics


def test_percentile_nearest_rank():
    xs = list(range(1, 101))
    assert metrics.percentile(xs, 0.99) == 99
    assert metrics.percentile(xs, 1.0) == 100
    assert metrics.percentile(xs, 0.0) == 1
    assert all(metrics.percentile([42], q) == 42 for q in (0.0, 0.25, 0.5, 0.99, 1.0))
    assert metrics.percentile([], 0.5) is None
    with pytest.raises(ValueError):
        metrics.percentile(xs, 1.5)


def test_throughput_identities():
    assert metrics.throughput(0, 10_000, 72) == 0
    # every node receives one packet per 32 ns
    assert metrics.throughput(72 * 10_000 // 32, 10_000, 72) == 1.0
    with pytest.raises(ValueError):
        metrics.throughput(1, 0, 72)


def test_empty_window_reports_absent_latency():
    st = metrics.window_stats([], [], [], 0, 1000, 72)
    assert st.count == 0 and st.mean_ns is None and st.p99_ns is None and st.throughput == 0
    assert st.whiskers is None


def test_window_quartiles_and_whiskers():
    gen = np.zeros(8, dtype=np.int64)
    deliver = np.array([10, 20, 30, 40, 50, 60, 70, 80])
    st = metrics.window_stats(gen, deliver, np.ones(8), 0, 100, 1)
    assert (st.q1_ns, st.p50_ns, st.q3_ns) == (20, 40, 60)
    assert st.whiskers == (20 - 60, 60 + 60)


def test_convergence_constant_series_converges_at_first_window():
    assert metrics.convergence_time([700.0] * 12) == 0


def test_convergence_step_series_reports_first_low_window():
    series = [5_000.0] * 6 + [600.0] * 10
    assert metrics.convergence_time(series, window_ns=10_000) == 60_000


def test_convergence_absent_for_short_or_unsettled_series():
    assert metrics.convergence_time([600.0] * 9) is None
    assert metrics.convergence_time([600.0] * 8 + [None] * 5) is None
    zigzag = [500.0, 900.0] * 10
    assert metrics.convergence_time(zigzag, hold=5) is None


@pytest.fixture(scope="module")
def min_ur_half(desk):
    sim = simulator(desk, "min", "ur", 0.5)
    sim.run_until(200_000)
    return sim.results()


def test_min_ur_half_load_throughput(desk, min_ur_half):
    res = min_ur_half
    st = metrics.window_stats(res["rec_gen"], res["rec_deliver"], res["rec_hops"],
                              100_000, 200_000, desk.nodes)
    assert st.throughput == pytest.approx(0.5, abs=0.02)
    assert st.q1_ns <= st.p50_ns <= st.q3_ns <= st.p95_ns <= st.p99_ns


def test_min_ur_mean_hops_matches_analytic_mean(desk, min_ur_half):
    res = min_ur_half
    mean = res["rec_hops"].mean()
    expect = metrics.analytic_mean_min_hops(desk)
    assert abs(mean - expect) / expect < 0.01


def test_window_counts_conserve_packets(desk):
    sim = simulator(desk, "ugaln", "adv:1", 0.6)
    sim.run_until(80_000)
    res = sim.results()
    assert res["win_count"].sum() == res["generated"] - res["inflight"]
    assert res["win_gen"].sum() == res["generated"]


def test_quantiles_monotone_in_every_window(desk):
    sim = simulator(desk, "qadaptive", "adv:4", 0.5)
    sim.run_until(100_000)
    res = sim.results()
    for t0 in range(0, 100_000, 10_000):
        st = metrics.window_stats(res["rec_gen"], res["rec_deliver"], res["rec_hops"],
                                  t0, t0 + 10_000, desk.nodes)
        if st.count:
            assert st.q1_ns <= st.p50_ns <= st.q3_ns <= st.p95_ns <= st.p99_ns


def test_time_series_keeps_only_complete_windows():
    res = {"win_count": np.array([2, 0, 4]), "win_lat": np.array([1000, 0, 2400]),
           "win_hops": np.array([6, 0, 12])}
    pts = metrics.time_series(res, 10_000, 1, t_end=25_000)
    assert [p.t0 for p in pts] == [0, 10_000]
    assert pts[0].mean_ns == 500 and pts[1].mean_ns is None and pts[0].mean_hops == 3


def test_csv_formatting(tmp_path):
    path = tmp_path / "x.csv"
    metrics.write_csv(path, ("a", "b", "c"), [{"a": 1, "b": 0.5, "c": None}])
    assert path.read_text() == "a,b,c\n1,0.500000,\n"
    assert metrics.read_csv(path) == [{"a": "1", "b": "0.500000", "c": ""}]
