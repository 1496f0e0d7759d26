import pytest
from hypothesis import given
from hypothesis import strategies as st

from abwlab.estimators import Estimate, Status
from abwlab.metrics import (evaluate, ground_truth, ground_truth_from_stats, intrusiveness, link_available,
                            path_available, path_capacity, relative_error, response_time)
from abwlab.simnet import CrossTrafficSpec, PathSpec, ProbeSchedule, TimestampNoiseModel, simulate


def test_path_capacity():
    assert path_capacity([100e6, 100e6, 100e6]) == 100e6
    assert path_capacity(PathSpec.from_capacities([100e6, 97.5e6, 100e6])) == 97.5e6
    assert path_capacity([10e6]) == 10e6
    with pytest.raises(ValueError):
        path_capacity([])


def test_link_available():
    assert link_available(100e6, 0) == 100e6
    assert link_available(100e6, 1) == 0
    assert link_available(100e6, 0.45) == pytest.approx(55e6)
    for bad in (-0.1, 1.1):
        with pytest.raises(ValueError):
            link_available(100e6, bad)


def test_path_available():
    assert path_available([(100e6, 0.5), (50e6, 0.0)]) == 50e6
    assert path_available([(97.5e6, 45 / 97.5)]) == pytest.approx(52.5e6)
    assert path_available([(100e6, 0), (97.5e6, 0)]) == 97.5e6


@given(st.lists(st.tuples(st.floats(1e3, 1e10), st.floats(0, 1)), min_size=1, max_size=6))
def test_available_never_exceeds_capacity(links):
    assert path_available(links) <= path_capacity([c for c, _ in links])


def test_relative_error():
    assert relative_error(50, 50) == 0
    assert relative_error(50, 40) == pytest.approx(0.2)
    assert relative_error(50, 75) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        relative_error(0, 5)


@given(st.floats(1, 1e9), st.floats(0, 1e9), st.floats(1e-3, 1e3))
def test_relative_error_scale_invariant(a_e, a_m, k):
    assert relative_error(k * a_e, k * a_m) == pytest.approx(relative_error(a_e, a_m), rel=1e-9, abs=1e-12)


def test_intrusiveness():
    assert intrusiveness(240e3 / 8, 1.0, 97.5e6) == pytest.approx(0.00246, abs=1e-5)
    assert intrusiveness(0, 1.0, 97.5e6) == 0
    assert intrusiveness(10e6 / 8 * 3, 3.0, 100e6) == pytest.approx(0.10)
    with pytest.raises(ValueError):
        intrusiveness(10, 0, 1e6)


def test_response_time():
    assert response_time([10, 10, 10]) == 10
    assert response_time([12, 14]) == 13
    with pytest.raises(ValueError):
        response_time([])


def test_ground_truth_from_configuration():
    path = PathSpec.from_capacities([100e6, 97.5e6, 100e6])
    gt = ground_truth(path, [CrossTrafficSpec(1, 2, 2, 45e6)])
    assert gt.capacity_bps == 97.5e6
    assert gt.path_available_bps == pytest.approx(52.5e6)
    assert gt.link_available_bps[0] == 100e6


def test_layer2_overhead_lowers_expected_bandwidth():
    path = PathSpec.from_capacities([97.5e6])
    cross = [CrossTrafficSpec(1, 1, 1, 45e6, 12000)]
    plain = ground_truth(path, cross).path_available_bps
    framed = ground_truth(path, cross, overhead_bits=304).path_available_bps
    assert framed == pytest.approx(97.5e6 - 45e6 * (1 + 304 / 12000))
    assert framed < plain


def test_ground_truth_from_simulator_matches_configuration():
    path = PathSpec.from_capacities([100e6, 97.5e6, 100e6])
    cross = [CrossTrafficSpec(1, 2, 2, 45e6)]
    times = [k * 50_000_000 for k in range(40)]
    res = simulate(path, cross, ProbeSchedule.from_times(times, 12000), TimestampNoiseModel.noiseless(), 3)
    measured = ground_truth_from_stats(res.link_stats)
    one_packet = 12000 / (res.link_stats[1].window_ns / 1e9)
    assert measured.path_available_bps == pytest.approx(ground_truth(path, cross).path_available_bps,
                                                        abs=one_packet)


def test_evaluate_excludes_failed_sessions():
    ok = evaluate(Estimate("spruce", 40e6, 30000, 10.0), 50e6, 97.5e6)
    assert ok.relative_error == pytest.approx(0.2)
    assert ok.intrusiveness == pytest.approx(24000 / 97.5e6)
    failed = evaluate(Estimate("pathload", None, 1000, 1.0, Status.ABORTED_LOSS), 5e6, 100e6)
    assert failed.relative_error is None and failed.measured_abw_bps is None
