import math

import numpy as np
import pytest

from relaxed_bvc.bounds import sync_k_matrix, theorem16_bound, theorem20_bound
from relaxed_bvc.errors import ConfigurationError, UsageError
from relaxed_bvc.geometry import hull_distance
from relaxed_bvc.hulls import PLAIN, delta_hull_membership, gamma_region_membership, k_hull_membership
from relaxed_bvc.protocols import (
    AsyncDelta,
    ConsensusConfig,
    ExactDelta,
    ExactK,
    ScalarPerCoord,
    contraction_factor,
    rounds_needed,
    run_algo_sync,
    run_k_relaxed_sync,
    run_protocol,
    run_relaxed_verified_averaging_async,
    run_scalar_per_coord,
)
from relaxed_bvc.simnet import ADVERSARY_KINDS, CRASH, DECIDE, OPTIMIZED_GEOMETRIC, Adversary, max_overtaking

TET = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=float)


def _bitwise_agree(out):
    vals = [np.asarray(v).tobytes() for v in out.decisions.values()]
    return len(set(vals)) == 1


def test_algo_tetrahedron_with_byzantine_vertex():
    cfg = ConsensusConfig(4, 1, 3, ExactDelta(2))
    out = run_algo_sync(cfg, TET, faulty=[4])
    assert out.ok and _bitwise_agree(out)
    assert out.rounds_used == 3
    bound = theorem16_bound(TET[:3], 4)
    assert bound == pytest.approx(math.sqrt(2) / 2)
    assert out.delta_achieved < bound
    assert out.delta_achieved <= out.delta_used + 1e-12


def test_algo_equal_inputs_output_that_input():
    v = np.array([0.5, -1.0, 2.0])
    out = run_algo_sync(ConsensusConfig(4, 1, 3, ExactDelta(2)), np.tile(v, (4, 1)), faulty=[2])
    assert out.ok
    for dec in out.decisions.values():
        np.testing.assert_allclose(dec, v, atol=1e-12)
    assert out.delta_achieved == pytest.approx(0.0, abs=1e-12)


def test_algo_two_faults_below_edge_bound():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((8, 3))
    out = run_algo_sync(ConsensusConfig(8, 2, 3, ExactDelta(2), seed=1), X,
                        Adversary(OPTIMIZED_GEOMETRIC, seed=1, strategy="far"))
    assert out.ok and _bitwise_agree(out)
    assert out.rounds_used == 4
    N = out.inputs[[p - 1 for p in out.decisions]]
    assert out.delta_achieved < theorem20_bound(N, 3)


def test_algo_rejects_too_many_faults():
    with pytest.raises(ConfigurationError):
        run_algo_sync(ConsensusConfig(6, 2, 3, ExactDelta(2)), np.zeros((6, 3)))
    with pytest.raises(UsageError):
        run_algo_sync(ConsensusConfig(4, 1, 3, ExactDelta(2)), np.zeros((4, 2)))


def test_variant_mismatch_rejected():
    with pytest.raises(ConfigurationError):
        run_algo_sync(ConsensusConfig(4, 1, 3, ExactK(2)), TET)
    with pytest.raises(ConfigurationError):
        ConsensusConfig(4, 1, 3, ExactK(4)).validate()
    with pytest.raises(ConfigurationError):
        AsyncDelta(2, epsilon=0.0)


def test_k_relaxed_success_above_bound():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 4))  # n = (d+1)f + 1
    out = run_k_relaxed_sync(ConsensusConfig(6, 1, 4, ExactK(2)), X, faulty=[3])
    assert out.ok and _bitwise_agree(out)
    N = np.delete(out.inputs, 2, axis=0)
    for dec in out.decisions.values():
        assert k_hull_membership(dec, N, 2)


def test_k_relaxed_empty_at_tight_bound():
    Y = sync_k_matrix(3, 1.0, 1.0)
    out = run_k_relaxed_sync(ConsensusConfig(4, 1, 3, ExactK(2)), Y, faulty=[4])
    assert out.status == "empty"
    assert not out.ok


def test_k_equal_d_gives_plain_region_point():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((7, 2))
    out = run_k_relaxed_sync(ConsensusConfig(7, 2, 2, ExactK(2)), X, faulty=[1, 2])
    assert out.ok
    dec = next(iter(out.decisions.values()))
    assert gamma_region_membership(dec, out.inputs, 2, PLAIN)


def test_scalar_per_coordinate_intervals():
    X = np.array([[0, 10], [1, 11], [2, 12], [-50, 99]], dtype=float)
    for kind in ADVERSARY_KINDS:
        out = run_scalar_per_coord(ConsensusConfig(4, 1, 2, ScalarPerCoord()), X, Adversary(kind, seed=2), faulty=[4])
        assert out.ok and _bitwise_agree(out), kind
        dec = next(iter(out.decisions.values()))
        assert 0 <= dec[0] <= 2 and 10 <= dec[1] <= 12


def test_scalar_no_faults_is_median():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((3, 4))
    out = run_scalar_per_coord(ConsensusConfig(3, 0, 4, ScalarPerCoord()), X)
    for dec in out.decisions.values():
        np.testing.assert_array_equal(dec, np.median(X, axis=0))
    same = run_scalar_per_coord(ConsensusConfig(4, 1, 4, ScalarPerCoord()), np.tile(X[0], (4, 1)), faulty=[1])
    for dec in same.decisions.values():
        np.testing.assert_array_equal(dec, X[0])


def test_async_crash_reaches_epsilon_agreement():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((6, 3))
    cfg = ConsensusConfig(6, 1, 3, AsyncDelta(2, 1e-3), seed=7)
    out = run_relaxed_verified_averaging_async(cfg, X, Adversary(CRASH, crash_tick=10), faulty=[2])
    assert out.ok, out.status
    assert out.agreement_residual <= 1e-3
    N = np.delete(out.inputs, 1, axis=0)
    for dec in out.decisions.values():
        assert delta_hull_membership(dec, N, out.delta_used, 2)
    # five correct processes in R^3 with one fault: the plain region is non-empty
    assert out.delta_used == pytest.approx(0.0, abs=1e-9)
    assert max_overtaking(out.transcript) <= 36


def test_async_no_faults_converges():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((4, 2))
    out = run_relaxed_verified_averaging_async(ConsensusConfig(4, 0, 2, AsyncDelta(2, 1e-3), seed=3), X)
    assert out.ok
    assert out.agreement_residual <= 1e-3
    spread = float(np.ptp(X, axis=0).max())
    assert out.rounds_used == rounds_needed(spread, 1e-3, 4, 0)


def test_async_fixed_delta_region_empty_reported():
    Y = sync_k_matrix(3, 1.0, 1.0)
    out = run_relaxed_verified_averaging_async(ConsensusConfig(4, 1, 3, AsyncDelta(2, 1e-3, delta=0.0), seed=1),
                                               Y, faulty=[4])
    assert out.status == "empty"


def test_round_count_formula():
    assert contraction_factor(6, 1) == pytest.approx(0.8)
    assert rounds_needed(1.0, 2.0, 6, 1) == 1
    r = rounds_needed(1.0, 1e-3, 6, 1)
    assert 0.8 ** r <= 1e-3 < 0.8 ** (r - 1)


def test_run_protocol_dispatch_and_serialization():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((4, 2))
    out = run_protocol(ConsensusConfig(4, 1, 2, ExactDelta("INF")), X, faulty=[1])
    d = out.to_dict()
    assert d["status"] == "ok" and d["norm"] == "inf"
    assert set(d["decisions"]) == {"2", "3", "4"}
    decide = [e for e in out.transcript.events if e[1] == DECIDE]
    assert len(decide) == 3 and all(e[0] == 3 for e in decide)
