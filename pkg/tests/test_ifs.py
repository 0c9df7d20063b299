import math

import mpmath
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cantor_system, circle_mobius_system, sierpinski_system
from rigidlab.errors import BracketError, ParameterError, ResourceError, SeparationError
from rigidlab.ifs import (CIFS, a1_index, bowen_parameter, bowen_report, check_separation, code_point,
                          cylinder_weight, make_antoine, make_example_a1, pressure, sample_limit_set,
                          system_from_json, system_to_json)
from rigidlab.mobius import make_similarity
from rigidlab.regions import Box


def interval_system(ratios, offsets):
    return CIFS([make_similarity(r, None, [b]) for r, b in zip(ratios, offsets)], Box([0.0], [1.0]))


def moran_root(ratios):
    # independent oracle: 40-digit root of Σ r^δ = 1
    with mpmath.workdps(40):
        return float(mpmath.findroot(lambda s: sum(mpmath.mpf(r) ** s for r in ratios) - 1, 0.5))


LOG2_LOG3 = float(mpmath.log(2) / mpmath.log(3))


# -- separation ---------------------------------------------------------------

def test_cantor_is_ssc_with_gap_one_third():
    cert = check_separation(cantor_system())
    assert cert.status == "SSC"
    assert cert.gap == pytest.approx(1 / 3, rel=1e-12)


def test_touching_halves_are_osc():
    assert interval_system([0.5, 0.5], [0.0, 0.5]).certificate.status == "OSC"


def test_overlapping_maps_fail_with_witness():
    cert = interval_system([0.6, 0.6], [0.0, 0.4]).certificate
    assert cert.status == "FAIL"
    assert cert.pair == (0, 1)
    assert cert.gap < 0


def test_sierpinski_is_osc():
    assert sierpinski_system().certificate.status == "OSC"


def test_mobius_system_certified():
    assert circle_mobius_system().certificate.status == "SSC"


def test_non_contracting_or_escaping_maps_rejected():
    with pytest.raises(ParameterError):
        interval_system([1.0], [0.0])
    with pytest.raises(ParameterError):
        interval_system([0.5], [0.7])


# -- pressure and Bowen parameter ---------------------------------------------

def test_pressure_values():
    C = cantor_system()
    assert pressure(C, 0.0) == pytest.approx(math.log(2))
    assert pressure(C, LOG2_LOG3) == pytest.approx(0.0, abs=1e-12)
    assert pressure(interval_system([0.5, 0.5], [0, 0.5]), 1.0) == pytest.approx(0.0, abs=1e-15)


def test_similarity_pressure_independent_of_n():
    C = sierpinski_system()
    assert pressure(C, 0.8, n=1) == pytest.approx(pressure(C, 0.8, n=3))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.01, 1.0))
def test_pressure_strictly_decreasing(d1, step):
    C = circle_mobius_system()
    assert pressure(C, d1, n=3) > pressure(C, d1 + step, n=3)


def test_word_budget():
    with pytest.raises(ResourceError):
        pressure(circle_mobius_system(), 1.0, n=20)


def test_bowen_cantor():
    assert bowen_parameter(cantor_system()) == pytest.approx(LOG2_LOG3, abs=1e-9)
    assert LOG2_LOG3 == pytest.approx(0.6309297536, abs=1e-10)


@pytest.mark.parametrize("m", [2, 3, 5, 7])
def test_bowen_equal_ratio_one_over_m(m):
    C = interval_system([1 / m] * m, [i / m for i in range(m)])
    assert bowen_parameter(C) == pytest.approx(1.0, abs=1e-9)


def test_bowen_single_map_is_zero():
    assert bowen_parameter(interval_system([0.5], [0.0])) == 0.0


@pytest.mark.parametrize("ratios", [[0.5, 0.25], [0.2, 0.3, 0.1], [0.45, 0.05, 0.3]])
def test_bowen_is_moran_root(ratios):
    offs = np.concatenate([[0.0], np.cumsum(ratios)[:-1] + 0.01 * np.arange(1, len(ratios))])
    assert bowen_parameter(interval_system(ratios, offs)) == pytest.approx(moran_root(ratios), abs=1e-9)


def test_bowen_bracket_error():
    with pytest.raises(BracketError):
        bowen_report(cantor_system(), delta_hi=0.5)


def test_mobius_bowen_brackets_conjugated_dimension():
    # conjugation preserves dimension, so log 3 / log 4 lies between the inf- and sup-norm roots
    res = bowen_report(circle_mobius_system())
    true = math.log(3) / math.log(4)
    assert res.lower_delta <= true <= res.delta
    assert res.distortion >= 1.0


# -- coding and weights ------------------------------------------------------

def test_code_point_cantor():
    C = cantor_system()
    for n in (5, 12):
        assert code_point(C, [0] * n)[0] == pytest.approx(0.0, abs=3.0**-n)
        assert code_point(C, [1] * n)[0] == pytest.approx(1.0, abs=3.0**-n)
    assert code_point(C, [0, 1] * 10)[0] == pytest.approx(0.25, abs=1e-8)
    with pytest.raises(ParameterError):
        code_point(C, [0], basepoint=[2.0])
    with pytest.raises(ParameterError):
        code_point(C, [2])


def test_cylinder_weights():
    C = cantor_system()
    for n in (1, 4, 9):
        assert cylinder_weight(C, [0, 1] * n, LOG2_LOG3) == pytest.approx(2.0 ** (-2 * n), rel=1e-12)
    assert cylinder_weight(C, [], 0.7) == 1.0
    S = interval_system([0.5, 0.25], [0.0, 0.6])
    delta = bowen_parameter(S)
    assert cylinder_weight(S, [0], delta) == pytest.approx((math.sqrt(5) - 1) / 2, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 2), max_size=6))
def test_cylinder_additivity(word):
    C = sierpinski_system()
    delta = bowen_parameter(C)
    total = sum(cylinder_weight(C, word + [a], delta) for a in range(3))
    assert total == pytest.approx(cylinder_weight(C, word, delta), rel=1e-10)


# -- sampling ---------------------------------------------------------------

def cantor_level_distance(x, n):
    """Distance from x to the n-th stage of the Cantor construction."""
    if n == 0:
        return max(0.0, -x, x - 1.0)
    if x <= 0.5:
        return cantor_level_distance(3 * x, n - 1) / 3
    return cantor_level_distance(3 * x - 2, n - 1) / 3


def test_cantor_samples_lie_on_cantor_set():
    cloud = sample_limit_set(cantor_system(), 10_000, 30, rng_seed=3)
    assert cloud.n_points == 10_000
    assert cloud.weights.sum() == pytest.approx(1.0, abs=1e-12)
    worst = max(cantor_level_distance(x, 30) for x in cloud.points[:, 0])
    assert worst <= 3.0**-30 + 1e-15


def test_sampling_deterministic_across_threads():
    C = circle_mobius_system()
    a = sample_limit_set(C, 20_000, 12, rng_seed=42, threads=1)
    b = sample_limit_set(C, 20_000, 12, rng_seed=42, threads=4)
    np.testing.assert_array_equal(a.points, b.points)
    c = sample_limit_set(C, 20_000, 12, rng_seed=43)
    assert not np.array_equal(a.points, c.points)


def test_sampling_refuses_failed_separation():
    with pytest.raises(SeparationError):
        sample_limit_set(interval_system([0.6, 0.6], [0.0, 0.4]), 10, 5)


def in_cylinder_union(C, x, depth, tol=1e-7):
    """Oracle: does x lie in the union of the depth-level cylinder images?

    Walks addresses backwards, keeping every branch whose image region
    contains the current point, so touching images are handled.
    """
    inverses = [g.inverse() for g in C.maps]
    frontier = [np.asarray(x, dtype=float)]
    for _ in range(depth):
        nxt = []
        for y in frontier:
            for (img, _), h in zip(C.images, inverses):
                if img.contains(y, tol):
                    nxt.append(h.apply_many(y[None, :])[0])
        if not nxt:
            return False
        frontier = nxt[:64]
    return any(C.seed.contains(y, tol) for y in frontier)


@pytest.mark.parametrize("make", [sierpinski_system, circle_mobius_system])
def test_attractor_invariance(make):
    C = make()
    depth = 12
    cloud = sample_limit_set(C, 300, depth, rng_seed=1)
    for g in C.maps:
        moved = g.apply_many(cloud.points)
        assert all(in_cylinder_union(C, x, depth) for x in moved)
    # the oracle itself rejects a point of the seed that misses every image
    off = C.seed.center + 0.45 * C.seed.diameter * np.eye(C.dim)[1]
    assert not in_cylinder_union(C, off, depth)


def test_membership_oracle_rejects_sierpinski_hole():
    assert not in_cylinder_union(sierpinski_system(), np.array([0.5, math.sqrt(3) / 6]), 12)
    assert in_cylinder_union(sierpinski_system(), np.array([0.5, 0.0]), 12)


def test_json_round_trip():
    C = sierpinski_system()
    D = system_from_json(system_to_json(C))
    np.testing.assert_allclose(D.ratios, C.ratios)
    assert D.certificate.status == C.certificate.status
    with pytest.raises(ParameterError):
        system_from_json({"maps": []})


# -- Antoine's necklace -----------------------------------------------------

def test_antoine_default():
    A = make_antoine(20, 0.1)
    assert A.certificate.status == "SSC"
    assert check_separation(A).status == "SSC"
    assert A.meta["moran_dimension"] == pytest.approx(math.log(20) / math.log(10), rel=1e-12)
    assert bowen_parameter(A) == pytest.approx(1.3010299956639813, abs=1e-9)


def test_antoine_infeasible_names_pair():
    with pytest.raises(SeparationError) as info:
        make_antoine(20, 0.2)
    assert info.value.pair == (0, 1)
    with pytest.raises(ParameterError):
        make_antoine(2, 0.1)


def test_antoine_links_alternate():
    A = make_antoine(6, 0.1, 1.0, 0.3)
    # the normal of a link's core plane is O e_z: horizontal for even links, vertical for odd
    for k, g in enumerate(A.maps):
        normal = np.asarray(g.rotation)[:, 2]
        assert abs(normal[2]) == pytest.approx(0.0 if k % 2 == 0 else 1.0, abs=1e-12)


# -- truncated curve system ---------------------------------------------------

def test_a1_dimensions_and_errors():
    E = make_example_a1(2.0, 6)
    assert E.dim == 1 + 2**7 - 2
    assert make_example_a1().dim == 8191
    with pytest.raises(ParameterError):
        make_example_a1(1.0)
    with pytest.raises(ParameterError):
        make_example_a1(math.sqrt(2))
    with pytest.raises(ParameterError):
        make_example_a1(2.0, 1)


def test_a1_curve_start():
    E = make_example_a1(2.0, 5)
    F0 = E.curve([0.0]).toarray()[0]
    expected = np.zeros(E.dim)
    for k in range(1, 6):
        expected[a1_index(k, 0)] = 2.0 * 2.0**-k
    np.testing.assert_allclose(F0, expected)


def test_a1_curve_expands_parameter(rng):
    E = make_example_a1(2.5, 7)
    t = np.sort(rng.random(200))
    X = E.curve(t).toarray()
    D = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=2)
    assert np.all(D + 1e-12 >= np.abs(t[:, None] - t[None, :]))


def test_a1_bowen_and_certificates():
    E = make_example_a1()
    for C in (E.cifs_r1, E.cifs_r2):
        assert C.certificate.status == "SSC"
        assert C.certificate.gap == pytest.approx(2.0 / math.sqrt(2))
        assert bowen_parameter(C) == pytest.approx(1.0, abs=1e-9)


def test_a1_coding_matches_curve():
    # u_a(F(t)) = F((a + t)/2), so coding a word gives F at the dyadic parameter it spells
    E = make_example_a1(2.0, 8)
    for word in ([0, 1, 1], [1, 0, 1, 1, 0, 1], [1] * 8):
        t = sum(a * 2.0 ** -(i + 1) for i, a in enumerate(word))
        x = code_point(E.cifs_r1, word)
        np.testing.assert_allclose(x, E.curve([t]).toarray()[0], atol=1e-12)


def test_a1_separation_witness():
    E = make_example_a1(2.0, 6)
    for C in (E.cifs_r1, E.cifs_r2):
        cloud = sample_limit_set(C, 500, 10, rng_seed=0)
        for a in (0, 1):
            img = C.maps[a].apply_many(cloud.points)
            img = img.toarray() if sp.issparse(img) else img
            np.testing.assert_allclose(img[:, a1_index(1, a)], 1.0)
            np.testing.assert_allclose(img[:, a1_index(1, 1 - a)], 0.0)


def test_a1_projection_drops_first_coordinate():
    E = make_example_a1(2.0, 5)
    X = E.curve([0.3, 0.8])
    P = E.pi_star(X).toarray()
    np.testing.assert_array_equal(P[:, 0], 0.0)
    np.testing.assert_array_equal(P[:, 1:], X.toarray()[:, 1:])


def test_a1_truncated_attractor_is_curve():
    E = make_example_a1(2.0, 6)
    cloud = sample_limit_set(E.cifs_r1, 300, 30, rng_seed=5)
    X = cloud.points.toarray()
    t = X[:, 0]
    np.testing.assert_allclose(X, E.curve(np.clip(t, 0, 1)).toarray(), atol=E.tail_bound)
