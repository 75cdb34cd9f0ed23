import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2dcache.mobility import (
    ContactTrace,
    MobilityModel,
    PairParams,
    TraceFormatError,
    fit_from_trace,
    merge_contacts,
    read_trace,
    sample_pair_timeline,
    scale_speed,
    stationary_noncontact_prob,
    synthesize_trace,
    write_trace,
)

rates = st.floats(1e-4, 1.0)


def test_stationary_prob_symmetric():
    assert stationary_noncontact_prob(PairParams(0.01, 0.01)) == 0.5


def test_stationary_prob_no_contact():
    assert stationary_noncontact_prob(PairParams.no_contact()) == 1.0


def test_stationary_prob_against_long_run_fraction():
    p = PairParams(1 / 240, 1 / 1200)
    assert stationary_noncontact_prob(p) == pytest.approx(5 / 6, rel=1e-15)
    tl = sample_pair_timeline(p, 1e7, np.random.default_rng(1))
    assert tl.time_apart() / 1e7 == pytest.approx(5 / 6, abs=0.01)


@pytest.mark.parametrize("lc, li", [(0.0, 1.0), (1.0, -1.0), (np.inf, 1.0), (1.0, np.inf), (np.nan, 1.0)])
def test_pair_params_rejects_invalid(lc, li):
    with pytest.raises(ValueError):
        PairParams(lc, li)


def test_mobility_model_validation():
    with pytest.raises(ValueError, match="symmetric"):
        MobilityModel(np.array([[np.inf, 1.0], [2.0, np.inf]]), np.ones((2, 2)))
    with pytest.raises(ValueError, match="square"):
        MobilityModel(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        MobilityModel(np.full((2, 2), np.inf), np.ones((2, 2)))


def test_mobility_model_is_read_only_and_diagonal_is_no_contact():
    m = MobilityModel.uniform(3, 0.1, 0.2)
    assert np.all(np.isinf(np.diag(m.contact_rate)))
    assert np.all(np.diag(m.intercontact_rate) == 0)
    with pytest.raises(ValueError):
        m.contact_rate[0, 1] = 5.0
    assert np.allclose(np.diag(m.noncontact_prob()), 1.0)
    assert list(m.pairs()) == [(0, 1), (0, 2), (1, 2)]


def test_from_pairs_unlisted_pairs_never_meet():
    m = MobilityModel.from_pairs(3, {(0, 1): PairParams(0.1, 0.2)})
    assert m.pair(1, 0) == PairParams(0.1, 0.2)
    assert m.pair(0, 2).is_no_contact


def test_scale_speed_identity_and_doubling():
    m = MobilityModel.from_pairs(3, {(0, 1): PairParams(0.02, 0.005)})
    same = scale_speed(m, 1.0)
    assert np.array_equal(same.contact_rate, m.contact_rate)
    fast = scale_speed(m, 2.0)
    assert fast.pair(0, 1) == PairParams(0.04, 0.01)
    assert fast.pair(0, 2).is_no_contact


@pytest.mark.parametrize("mu", [0.0, -1.0])
def test_scale_speed_rejects_nonpositive(mu):
    with pytest.raises(ValueError):
        scale_speed(MobilityModel.uniform(2, 1.0, 1.0), mu)


@given(lc=rates, li=rates, mu=st.floats(1e-3, 1e3))
def test_stationary_prob_invariant_under_speed(lc, li, mu):
    m = MobilityModel.uniform(2, lc, li)
    assert np.allclose(scale_speed(m, mu).noncontact_prob(), m.noncontact_prob(), rtol=1e-12)


def test_no_contact_timeline_is_one_apart_interval():
    tl = sample_pair_timeline(PairParams.no_contact(), 50.0, np.random.default_rng(0))
    assert tl.intervals == [(0.0, 50.0, "apart")]


@pytest.mark.parametrize("h", [0.0, -5.0])
def test_timeline_rejects_nonpositive_horizon(h):
    with pytest.raises(ValueError):
        sample_pair_timeline(PairParams(1.0, 1.0), h)


@settings(max_examples=40, deadline=None)
@given(lc=rates, li=rates, horizon=st.floats(1.0, 1e4), seed=st.integers(0, 2**32))
def test_timeline_tiles_horizon_and_alternates(lc, li, horizon, seed):
    tl = sample_pair_timeline(PairParams(lc, li), horizon, np.random.default_rng(seed))
    b = tl.boundaries
    assert b[0] == 0.0 and b[-1] == horizon
    assert np.all(np.diff(b) >= 0)
    assert np.all(tl.in_contact[1:] != tl.in_contact[:-1])


def test_timeline_fraction_in_contact():
    tl = sample_pair_timeline(PairParams(0.01, 0.01), 1e7, np.random.default_rng(2))
    assert 1 - tl.time_apart() / 1e7 == pytest.approx(0.5, abs=0.01)


def test_timeline_mean_contact_length():
    tl = sample_pair_timeline(PairParams(0.01, 0.01), 3e6, np.random.default_rng(3))
    d = tl.durations[tl.in_contact][1:-1]  # drop the truncated first/last interval
    assert d.size >= 10_000
    assert d.mean() == pytest.approx(100.0, abs=3.0)


def test_speed_duality_interval_counts():
    p = PairParams(1 / 50, 1 / 200)
    mu, horizon, reps = 4.0, 2000.0, 400
    rng = np.random.default_rng(4)
    fast = scale_speed(MobilityModel.uniform(2, p.contact_rate, p.intercontact_rate), mu).pair(0, 1)
    a = [len(sample_pair_timeline(fast, horizon, rng).in_contact) for _ in range(reps)]
    b = [len(sample_pair_timeline(p, mu * horizon, rng).in_contact) for _ in range(reps)]
    se = np.sqrt(np.var(a, ddof=1) / reps + np.var(b, ddof=1) / reps)
    assert abs(np.mean(a) - np.mean(b)) <= 3 * se


def test_trace_rejects_bad_records():
    with pytest.raises(ValueError, match="t_start < t_end"):
        ContactTrace(np.array([[0, 1, 5.0, 5.0]]), 2)
    with pytest.raises(ValueError, match="user ids"):
        ContactTrace(np.array([[0, 3, 1.0, 5.0]]), 2)


def test_merge_and_fit_hand_example():
    trace = ContactTrace(np.array([[0, 1, 0.0, 100.0], [1, 0, 50.0, 150.0]]), 2)
    merged = merge_contacts(trace, (0.0, 1000.0))
    s, e = merged[(0, 1)]
    assert s.tolist() == [0.0] and e.tolist() == [150.0]
    fit = fit_from_trace(trace, (0.0, 1000.0))
    assert fit.mobility.contact_rate[0, 1] == pytest.approx(1 / 150, rel=1e-15)
    assert fit.mobility.intercontact_rate[0, 1] == pytest.approx(1 / 850, rel=1e-15)
    assert fit.skipped_pairs == []


def test_merge_clips_to_window_and_drops_outside():
    trace = ContactTrace(np.array([[0, 1, 10.0, 30.0], [0, 1, 40.0, 60.0], [0, 2, 90.0, 95.0]]), 3)
    merged = merge_contacts(trace, (20.0, 50.0))
    s, e = merged[(0, 1)]
    assert s.tolist() == [20.0, 40.0] and e.tolist() == [30.0, 50.0]
    assert (0, 2) not in merged


def test_fit_pair_without_records_is_no_contact():
    trace = ContactTrace(np.array([[0, 1, 0.0, 10.0]]), 3)
    fit = fit_from_trace(trace, (0.0, 100.0))
    assert fit.mobility.pair(0, 2).is_no_contact
    assert fit.mobility.pair(1, 2).is_no_contact


def test_fit_pair_never_apart_is_reported(caplog):
    trace = ContactTrace(np.array([[0, 1, 0.0, 100.0], [0, 2, 10.0, 20.0]]), 3)
    with caplog.at_level("WARNING"):
        fit = fit_from_trace(trace, (0.0, 100.0))
    assert fit.skipped_pairs == [(0, 1)]
    assert fit.mobility.pair(0, 1).is_no_contact
    assert "never observed apart" in caplog.text


def test_fit_round_trip_recovers_generator_rates():
    # 6e6 s gives about 3300 cycles for this pair
    p = PairParams(1 / 300, 1 / 1500)
    tl = sample_pair_timeline(p, 6e6, np.random.default_rng(5))
    s, e = tl.contact_intervals()
    trace = ContactTrace(np.column_stack([np.zeros(s.size), np.ones(s.size), s, e])[e > s], 2)
    fit = fit_from_trace(trace, (0.0, 6e6))
    assert fit.n_contacts[(0, 1)] >= 3000
    assert fit.mobility.contact_rate[0, 1] == pytest.approx(1 / 300, rel=0.05)
    assert fit.mobility.intercontact_rate[0, 1] == pytest.approx(1 / 1500, rel=0.05)


def test_trace_file_round_trip(tmp_path):
    m = MobilityModel.uniform(3, 0.05, 0.01)
    trace = synthesize_trace(m, 5000.0, np.random.default_rng(6))
    path = tmp_path / "t.txt"
    write_trace(trace, path)
    back = read_trace(path, n_users=3)
    assert back.n_users == 3
    assert np.allclose(back.records, trace.records, atol=1e-6)


def test_read_trace_skips_comments(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("# header\n\n0 1 0 10\n  # indented comment\n1 2 5 6\n")
    assert len(read_trace(path)) == 2


def test_read_trace_comment_only_file(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("# nothing here\n# still nothing\n")
    with pytest.raises(TraceFormatError, match="no records"):
        read_trace(path)


@pytest.mark.parametrize("bad", ["0 1 5", "0 1 x 7", "0 0 1 2", "0 1 9 3", "-1 1 0 1"])
def test_read_trace_reports_line_number(tmp_path, bad):
    lines = [f"0 1 {k} {k + 0.5}" for k in range(16)] + [bad]
    path = tmp_path / "t.txt"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(TraceFormatError) as err:
        read_trace(path)
    assert err.value.lineno == 17
    assert "line 17" in str(err.value)


def test_read_trace_user_out_of_range(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("0 5 0 1\n")
    with pytest.raises(TraceFormatError, match="out of range"):
        read_trace(path, n_users=3)
