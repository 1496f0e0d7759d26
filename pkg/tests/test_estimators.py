import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from abwlab.estimators import (IGIConfig, PathchirpConfig, PathloadConfig, SpruceConfig, Status, Trend,
                               build_config, chirp_gaps_ns, chirp_rate_estimate, classify_stream,
                               igi_point_estimate, igi_turning_point, pathchirp_build_chirp,
                               pathchirp_estimate, pathload_estimate, run_igi, run_pathchirp, run_spruce,
                               run_tool, spruce_estimate, spruce_pair_sample, spruce_schedule)
from abwlab.estimators import NoConvergence
from abwlab.estimators.pathload import fleet_verdict, stream_schedule
from abwlab.simnet import (CrossMode, ProbeRecord, ProbeSchedule, TimestampNoiseModel, bottleneck_scenario,
                           tx_time_ns)

C = 97.5e6
QUIET = TimestampNoiseModel.noiseless()


def fluid_session(cross_bps, seed=0, noise=QUIET, capacity=C):
    return bottleneck_scenario(capacity, cross_bps, CrossMode.FLUID).session(noise, seed)


def fake_train(send, recv, size=8000, group=0):
    return [ProbeRecord(k, group, k, size, s, s, r, r is None) for k, (s, r) in enumerate(zip(send, recv))]


def counting_send(session):
    bits = []

    def send(schedule):
        bits.append(schedule.total_bits)
        return session.send(schedule)
    return send, bits


# -- spruce -------------------------------------------------------------------

def test_pair_sample_identities():
    assert spruce_pair_sample(100, 100, C) == C
    assert spruce_pair_sample(100, 200, C) == 0
    assert spruce_pair_sample(240e3, 360e3, C) == pytest.approx(48.75e6, rel=1e-12)
    assert spruce_pair_sample(100, 300, C) < 0  # not clamped per pair
    with pytest.raises(ValueError):
        spruce_pair_sample(0, 10, C)


@given(st.floats(1, 1e6), st.floats(0, 5), st.floats(1e6, 1e10))
def test_pair_sample_is_linear_in_ratio(d_in, ratio, cap):
    assert spruce_pair_sample(d_in, d_in * ratio, cap) == pytest.approx(cap * (2 - ratio), rel=1e-9, abs=1e-3)


def test_spruce_schedule_shape():
    cfg = SpruceConfig(C)
    sched = spruce_schedule(cfg, np.random.default_rng(0))
    assert len(sched) == 200
    assert cfg.probe_rate_bps == 240e3
    starts = [e.send_ns for e in sched if e.position == 0]
    seconds = [e.send_ns for e in sched if e.position == 1]
    assert all(b - a == tx_time_ns(12000, C) for a, b in zip(starts, seconds))
    assert starts == sorted(starts)


def test_spruce_rate_follows_five_percent_rule_on_slow_paths():
    assert SpruceConfig(2e6).probe_rate_bps == pytest.approx(100e3)


def test_spruce_idle_path_reports_capacity():
    est = run_spruce(fluid_session(0).send, SpruceConfig(C), np.random.default_rng(1))
    assert est.value_bps == pytest.approx(C, rel=1e-4)


def test_spruce_fluid_exact():
    est = run_spruce(fluid_session(48.75e6).send, SpruceConfig(C), np.random.default_rng(1))
    assert est.ok
    assert est.value_bps == pytest.approx(48.75e6, rel=1e-4)


def test_spruce_duration_near_ten_seconds():
    durations = [run_spruce(fluid_session(0, s).send, SpruceConfig(C), np.random.default_rng(s)).duration_s
                 for s in range(10)]
    assert np.mean(durations) == pytest.approx(10.0, rel=0.05)


def test_spruce_skips_pairs_with_loss_and_fails_when_none_survive():
    cfg = SpruceConfig(C)
    good = fake_train([0, 100], [50, 150], 12000, group=0)
    lost = fake_train([1000, 1100], [1050, None], 12000, group=1)
    est = spruce_estimate(good + lost, cfg)
    assert est.value_bps == C and est.details["pairs_used"] == 1
    est = spruce_estimate(lost, cfg)
    assert est.status is Status.NO_CONVERGENCE and est.value_bps is None


def test_spruce_clamps_only_the_mean():
    cfg = SpruceConfig(C)
    a = fake_train([0, 100], [0, 250], 12000, group=0)  # -0.5 C
    b = fake_train([1000, 1100], [1000, 1100], 12000, group=1)  # C
    est = spruce_estimate(a + b, cfg)
    assert est.details["raw_mean_bps"] == pytest.approx(0.25 * C)
    assert est.value_bps == pytest.approx(0.25 * C)
    est = spruce_estimate(a, cfg)
    assert est.value_bps == 0.0


# -- igi -----------------------------------------------------------------------------

def test_igi_point_estimate_without_expansion_is_probe_rate():
    cfg = IGIConfig(C)
    train = fake_train([0, 58000, 116000], [10, 58010, 116010], 5600)
    assert igi_point_estimate(train, cfg) == pytest.approx(5600 / 58e-6)


@given(st.integers(1, 10**6), st.integers(100, 10**5))
def test_igi_point_estimate_identity(d_in, size):
    cfg = IGIConfig(C, probe_size_bits=size)
    train = fake_train([0, d_in], [5, d_in + 5], size)
    assert igi_point_estimate(train, cfg) == pytest.approx(size * 1e9 / d_in, rel=1e-12)


def test_igi_worked_gap_ratio_gives_forty_mbps():
    d_in = 58000
    cfg = IGIConfig(C)
    train = fake_train([0, d_in], [0, round(d_in * 1.58)], 5600)
    assert igi_point_estimate(train, cfg) == pytest.approx(40e6, abs=0.1e6)


def test_igi_ignores_compressed_gaps():
    cfg = IGIConfig(C)
    # one gap expands to 2 D_in, one shrinks; only the expanded one counts
    train = fake_train([0, 100_000, 200_000], [0, 200_000, 250_000], 5600)
    expected = (C * (100_000 - 200_000) / 1e9 + 5600) / (100_000 / 1e9)
    assert igi_point_estimate(train, cfg) == pytest.approx(expected)


def test_igi_idle_turning_point_is_first_gap():
    cfg = IGIConfig(C)
    tp = igi_turning_point(fluid_session(0).send, cfg)
    assert tp.gap_ns == tx_time_ns(5600, C)
    assert len(tp.rounds) == 1


def test_igi_turning_point_matches_fluid_prediction():
    cross = 40e6
    cfg = IGIConfig(C)
    tp = igi_turning_point(fluid_session(cross).send, cfg)
    probe_rate = 5600e9 / tp.gap_ns
    # the condition first holds once the probe rate drops to about C - R
    assert probe_rate <= (C - cross) / (1 - cfg.turning_tolerance) * 1.0001
    previous = math.ceil(tp.gap_ns / cfg.gap_step)
    assert 5600e9 / previous > (C - cross) * 0.9
    gaps = [g for g, _, _ in tp.rounds]
    assert gaps == sorted(set(gaps))  # strictly increasing


def test_igi_forced_failure():
    cfg = IGIConfig(C, max_rounds=1, turning_tolerance=0.0)
    est = run_igi(fluid_session(40e6).send, cfg)
    assert est.status is Status.NO_CONVERGENCE
    assert est.bytes_sent == 60 * 700
    with pytest.raises(NoConvergence):
        igi_turning_point(fluid_session(40e6).send, cfg)


def test_igi_bytes_include_search_rounds():
    send, bits = counting_send(fluid_session(30e6))
    est = run_igi(send, IGIConfig(C))
    assert est.bytes_sent * 8 == sum(bits)
    assert est.details["rounds"] > 1
    assert est.duration_s == pytest.approx(12.0, abs=0.5)


# -- pathload ---------------------------------------------------------------------------

def test_pathload_config_validation():
    with pytest.raises(ValueError):
        PathloadConfig(rate_max_bps=10e6, rate_min_bps=10e6)
    with pytest.raises(ValueError):
        PathloadConfig(rate_max_bps=10e6, resolution_bps=0)


def test_flat_stream_has_no_trend():
    cfg = PathloadConfig(C, noise_span_us=0)
    sess = fluid_session(C - 50e6)
    stream = sess.send(stream_schedule(30e6, 0, cfg, 0))
    assert classify_stream(stream, cfg) is Trend.NONE


def test_overloading_stream_has_trend():
    cfg = PathloadConfig(C, noise_span_us=0)
    sess = fluid_session(C - 50e6)
    stream = sess.send(stream_schedule(70e6, 0, cfg, 0))
    assert classify_stream(stream, cfg) is Trend.INCREASING


def test_fleet_verdict_majority_and_ties():
    up, flat, amb = Trend.INCREASING, Trend.NONE, Trend.AMBIGUOUS
    assert fleet_verdict([flat, flat, up]) is flat
    assert fleet_verdict([flat, up]) is up
    assert fleet_verdict([amb, amb]) is amb
    assert fleet_verdict([amb, flat]) is flat


def test_pathload_brackets_fluid_truth():
    cfg = PathloadConfig(C, noise_span_us=0)
    send, bits = counting_send(fluid_session(C - 50e6))
    est = pathload_estimate(send, cfg)
    assert est.ok
    assert est.low_bps <= 50e6 <= est.high_bps
    assert est.high_bps - est.low_bps <= 2e6
    assert est.value_bps == pytest.approx(0.5 * (est.low_bps + est.high_bps))
    assert est.bytes_sent * 8 == sum(bits)


@given(st.floats(5e6, 90e6))
def test_pathload_trace_is_a_binary_search(abw):
    cfg = PathloadConfig(C, noise_span_us=0, fleet_size=1, stream_length=40)
    est = pathload_estimate(fluid_session(C - abw).send, cfg)
    low, high = 0.0, C
    for rate in est.details["rates_tested"]:
        assert low < rate < high
        assert rate == pytest.approx(0.5 * (low + high))
        if rate < abw:
            low = rate
        else:
            high = rate
    assert (low, high) == (est.low_bps, est.high_bps)


def test_pathload_aborts_on_loss():
    sc = bottleneck_scenario(100e6, 95e6, queue_limit_bytes=15000)
    est = run_tool("pathload", sc.session(TimestampNoiseModel(), 0).send, build_config("pathload", 100e6),
                   np.random.default_rng(0))
    assert est.status is Status.ABORTED_LOSS
    assert est.value_bps is None
    assert est.bytes_sent > 0


# -- pathchirp ----------------------------------------------------------------------------

def test_chirp_gap_examples():
    cfg = PathchirpConfig(rate_min_bps=12.5e6, rate_max_bps=200e6, spread_factor=2.0)
    assert chirp_gaps_ns(cfg) == [640_000, 320_000, 160_000, 80_000, 40_000]
    default = chirp_gaps_ns(PathchirpConfig())
    assert default[0] == 800_000 and default[-1] == 40_000


def test_chirp_rates_strictly_increase_over_range():
    cfg = PathchirpConfig()
    sched = pathchirp_build_chirp(cfg)
    times = [e.send_ns for e in sched]
    gaps = np.diff(times)
    assert np.all(np.diff(gaps) < 0)
    rates = 8000e9 / gaps
    assert rates[0] == pytest.approx(10e6) and rates[-1] == pytest.approx(200e6)
    assert len(sched) == math.ceil(math.log(20, 1.2)) + 2


def test_chirp_config_validation():
    with pytest.raises(ValueError):
        PathchirpConfig(spread_factor=1.0)
    with pytest.raises(ValueError):
        PathchirpConfig(rate_min_bps=200e6, rate_max_bps=10e6)


def test_chirp_without_excursion_reports_rate_max():
    cfg = PathchirpConfig()
    sched = pathchirp_build_chirp(cfg)
    chirp = fake_train([e.send_ns for e in sched], [e.send_ns + 1000 for e in sched])
    assert chirp_rate_estimate(chirp, cfg) == cfg.rate_max_bps


def test_chirp_fluid_onset_within_one_step():
    cfg = PathchirpConfig(noise_span_us=0)
    sess = fluid_session(200e6 - 100e6, capacity=200e6)
    chirp = sess.send(pathchirp_build_chirp(cfg, 1000))
    value = chirp_rate_estimate(chirp, cfg)
    assert 100e6 / 1.2 <= value <= 100e6 * 1.2


def test_pathchirp_duration_is_configured_and_all_lost_fails():
    cfg = PathchirpConfig()
    est = run_pathchirp(fluid_session(30e6).send, cfg)
    assert est.duration_s == 20.0
    assert est.bytes_sent == cfg.num_chirps * len(pathchirp_build_chirp(cfg)) * 1000
    lost = fake_train([0, 10, 20], [None, None, None])
    assert pathchirp_estimate(lost, cfg).status is Status.NO_CONVERGENCE


# -- registry -----------------------------------------------------------------------------

def test_build_config_wires_capacity():
    assert build_config("spruce", C).capacity_bps == C
    assert build_config("pathload", C).rate_max_bps == C
    assert build_config("igi", C, {"train_length": 30}).train_length == 30
    with pytest.raises(ValueError):
        build_config("spruce", C, {"bogus": 1})
    with pytest.raises(ValueError):
        build_config("nope", C)


@pytest.mark.parametrize("tool", ["spruce", "igi", "pathload", "pathchirp"])
def test_estimators_read_only_measured_records(tool):
    """Each tool sees ProbeRecords, which carry no true simulator timestamps."""
    seen = []
    sess = fluid_session(40e6, noise=TimestampNoiseModel())

    def send(schedule):
        out = sess.send(schedule)
        seen.extend(out)
        return out
    est = run_tool(tool, send, build_config(tool, C), np.random.default_rng(0))
    assert est.ok
    assert all(isinstance(r, ProbeRecord) for r in seen)
    assert not hasattr(seen[0], "arrivals")
    assert est.bytes_sent == sum(r.size_bits for r in seen) // 8
