import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rigidlab.errors import ParameterError, SingularityError
from rigidlab.mobius import (INFINITY, HalfSpacePoint, MapKind, apply, compose, derivative_scale,
                             hyperbolic_distance, iota, lift_projective, lorentz_defect, lorentz_gram,
                             make_similarity, make_sphere_inversion, map_from_json, map_from_lorentz,
                             map_to_json, poincare_extension_apply, quadratic_form)


def random_rotation(rng, d):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def random_map(rng, d):
    if rng.random() < 0.5:
        return make_similarity(rng.uniform(0.2, 3.0), random_rotation(rng, d), rng.standard_normal(d))
    return make_sphere_inversion(rng.standard_normal(d), rng.uniform(0.3, 2.0))


def random_word(rng, d, length):
    return [random_map(rng, d) for _ in range(length)]


def test_inversion_matches_closed_form():
    c, r = np.array([1.0, -2.0, 0.5]), 1.7
    g = make_sphere_inversion(c, r)
    x = np.array([0.3, 0.4, -1.0])
    expected = c + r**2 * (x - c) / np.sum((x - c) ** 2)
    np.testing.assert_allclose(apply(g, x), expected, rtol=1e-13, atol=1e-15)
    assert g.kind is MapKind.SPHERE_INVERSION


def test_inversion_fixes_sphere_and_swaps_center_with_infinity():
    g = make_sphere_inversion([0.0, 0.0], 2.0)
    np.testing.assert_allclose(apply(g, [2.0, 0.0]), [2.0, 0.0], atol=1e-15)
    assert apply(g, [0.0, 0.0]) is INFINITY
    np.testing.assert_allclose(apply(g, INFINITY), [0.0, 0.0], atol=1e-15)


def test_similarity_apply_and_infinity():
    O = np.array([[0.0, -1.0], [1.0, 0.0]])
    g = make_similarity(2.0, O, [1.0, 1.0])
    np.testing.assert_allclose(apply(g, [1.0, 0.0]), [1.0, 3.0])
    assert apply(g, INFINITY) is INFINITY
    assert g.pole is INFINITY


def test_non_orthogonal_rotation_rejected():
    with pytest.raises(ParameterError):
        make_similarity(1.0, [[1.0, 0.1], [0.0, 1.0]], [0.0, 0.0])


def test_nonpositive_radius_rejected():
    with pytest.raises(ParameterError):
        make_sphere_inversion([0.0], 0.0)


def test_derivative_matches_finite_differences(rng):
    g = compose(make_sphere_inversion([0.5, 0.2], 0.8), make_similarity(0.7, random_rotation(rng, 2), [1, 0]))
    x = np.array([0.1, -0.4])
    h = 1e-6
    Jac = np.column_stack([(apply(g, x + h * e) - apply(g, x - h * e)) / (2 * h) for e in np.eye(2)])
    # conformal: the Jacobian is |g'| times an orthogonal matrix
    s = np.linalg.svd(Jac, compute_uv=False)
    assert derivative_scale(g, x) == pytest.approx(s[0], rel=1e-7)
    assert s[0] == pytest.approx(s[1], rel=1e-7)


def test_inversion_derivative_closed_form():
    g = make_sphere_inversion([0.0, 0.0, 0.0], 1.5)
    x = np.array([1.0, 2.0, 2.0])
    assert derivative_scale(g, x) == pytest.approx(1.5**2 / 9.0, rel=1e-14)


def test_derivative_at_pole_raises():
    g = make_sphere_inversion([1.0, 1.0], 1.0)
    with pytest.raises(SingularityError):
        derivative_scale(g, [1.0, 1.0])
    np.testing.assert_allclose(g.pole, [1.0, 1.0], atol=1e-14)


def test_iota_is_null():
    x = np.array([0.3, -2.0, 5.0])
    assert quadratic_form(iota(x)) == pytest.approx(0.0, abs=1e-12)


def test_lift_sign_normalized():
    g = make_sphere_inversion([0.0, 0.0], 1.0)
    M = lift_projective(g)
    assert M[0, 0] + M[1, 1] >= 0
    np.testing.assert_allclose(lift_projective([g, g]), np.eye(4), atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3, 5]), st.integers(1, 6))
def test_words_preserve_q(seed, d, length):
    rng = np.random.default_rng(seed)
    M = compose(*random_word(rng, d, length)).lorentz
    assert lorentz_defect(M) <= 1e-9 * max(1.0, np.max(np.abs(M))) ** 2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_composition_is_sequential_application(seed, d):
    rng = np.random.default_rng(seed)
    f, g, h = random_word(rng, d, 3)
    x = rng.standard_normal(d)
    y = apply(f, apply(g, apply(h, x)))
    np.testing.assert_allclose(apply(compose(f, g, h), x), y, rtol=1e-8, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 4]))
def test_inverse_round_trip(seed, d):
    rng = np.random.default_rng(seed)
    g = compose(*random_word(rng, d, 3))
    x = rng.standard_normal(d)
    np.testing.assert_allclose(apply(g.inverse(), apply(g, x)), x, rtol=1e-7, atol=1e-7)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_chain_rule(seed):
    rng = np.random.default_rng(seed)
    f, g = random_word(rng, 3, 2)
    x = rng.standard_normal(3)
    lhs = derivative_scale(compose(f, g), x)
    rhs = derivative_scale(f, apply(g, x)) * derivative_scale(g, x)
    assert lhs == pytest.approx(rhs, rel=1e-8)


def _arccosh_distance(p, q):
    # independent oracle: cosh d = 1 + |p − q|² / (2 h_p h_q)
    sq = (p.height - q.height) ** 2 + np.sum((p.base - q.base) ** 2)
    return math.acosh(1 + sq / (2 * p.height * q.height))


def test_hyperbolic_distance_vertical_geodesic():
    p = HalfSpacePoint(1.0, [0.0, 0.0])
    q = HalfSpacePoint(8.0, [0.0, 0.0])
    assert hyperbolic_distance(p, q) == pytest.approx(math.log(8.0), rel=1e-14)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hyperbolic_distance_matches_arccosh_form(seed):
    rng = np.random.default_rng(seed)
    p = HalfSpacePoint(rng.uniform(0.1, 3), rng.standard_normal(2))
    q = HalfSpacePoint(rng.uniform(0.1, 3), rng.standard_normal(2))
    assert hyperbolic_distance(p, q) == pytest.approx(_arccosh_distance(p, q), rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_extension_is_isometry(seed):
    rng = np.random.default_rng(seed)
    g = compose(*random_word(rng, 2, 3))
    p = HalfSpacePoint(rng.uniform(0.2, 2), rng.standard_normal(2))
    q = HalfSpacePoint(rng.uniform(0.2, 2), rng.standard_normal(2))
    d0 = hyperbolic_distance(p, q)
    d1 = hyperbolic_distance(poincare_extension_apply(g, p), poincare_extension_apply(g, q))
    assert d1 == pytest.approx(d0, rel=1e-7, abs=1e-9)


def test_extension_extends_boundary_map():
    g = compose(make_sphere_inversion([0.3, 0.0], 1.1), make_similarity(0.5, None, [1.0, 2.0]))
    x = np.array([0.7, -0.2])
    image = poincare_extension_apply(g, HalfSpacePoint(1e-9, x))
    np.testing.assert_allclose(image.base, apply(g, x), atol=1e-7)


def test_json_round_trip():
    g = compose(make_sphere_inversion([1.0, 2.0], 0.5), make_similarity(0.3, [[0, 1], [-1, 0]], [1, 1]))
    h = map_from_json(map_to_json(g))
    x = np.array([[0.3, 0.7], [-1.0, 4.0]])
    np.testing.assert_allclose(h.apply_many(x), g.apply_many(x), rtol=1e-12)
    s = make_similarity(2.0, None, [1.0, 0.0])
    assert map_from_json(map_to_json(s)).scale == 2.0


def test_word_json():
    obj = {"type": "word", "factors": [{"type": "sphere_inversion", "center": [0, 0], "radius": 1},
                                       {"type": "similarity", "scale": 2, "translation": [1, 0]}]}
    g = map_from_json(obj)
    np.testing.assert_allclose(apply(g, [0.0, 0.0]), [1.0, 0.0])


def test_json_errors():
    with pytest.raises(ParameterError):
        map_from_json({"type": "shear"})
    with pytest.raises(ParameterError):
        map_from_json({"type": "similarity"})
    with pytest.raises(ParameterError):
        map_from_lorentz(2 * lorentz_gram(2))


@pytest.mark.parametrize("x, expected", [([2.0, 0.0], [0.5, 0.0]), ([1.0, 0.0], [1.0, 0.0]), ([0.5, 0.0], [2.0, 0.0])])
def test_unit_inversion_values(x, expected):
    np.testing.assert_allclose(apply(make_sphere_inversion([0.0, 0.0], 1.0), x), expected, atol=1e-15)


def test_unit_inversion_derivative_against_finite_differences():
    g = make_sphere_inversion([0.0, 0.0], 1.0)
    x, h = np.array([2.0, 0.0]), 1e-6
    fd = np.linalg.norm(apply(g, x + [0, h]) - apply(g, x - [0, h])) / (2 * h)
    assert derivative_scale(g, x) == pytest.approx(0.25, rel=1e-12)
    assert fd == pytest.approx(0.25, rel=1e-6)


def test_similarity_values():
    u = make_similarity(1 / 3, None, [2 / 3])
    assert apply(u, [1.0])[0] == pytest.approx(1.0, abs=1e-15)
    assert derivative_scale(u, [0.3]) == pytest.approx(1 / 3)
    rot90 = [[0.0, -1.0], [1.0, 0.0]]
    np.testing.assert_allclose(apply(make_similarity(0.5, rot90, [0, 0]), [1.0, 0.0]), [0.0, 0.5], atol=1e-16)
    ident = make_similarity(1.0, None, [0.0, 0.0])
    np.testing.assert_allclose(lift_projective(ident), np.eye(4))


def test_iota_values():
    np.testing.assert_array_equal(iota([0.0]), [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(iota([1.0, 0.0]), [1.0, -0.5, 1.0, 0.0])


@pytest.mark.parametrize("g", [make_similarity(2.0, None, [0.0]), make_sphere_inversion([0.0, 0.0], math.sqrt(2))])
def test_projective_conjugacy(g, rng):
    M = lift_projective(g)
    X = rng.standard_normal((100, g.dim)) + 0.1
    for x in X:
        v = M @ iota(x)
        np.testing.assert_allclose(v / v[0], iota(apply(g, x)), rtol=1e-10, atol=1e-10)


def test_inversion_radius_sqrt2_swaps_t0_t1():
    M = lift_projective(make_sphere_inversion([0.0, 0.0], math.sqrt(2)))
    # up to the overall sign, the lift exchanges t0 and t1 (with factor 2) and fixes x
    assert M[0, 0] == M[1, 1] == 0
    assert abs(M[0, 1] * M[1, 0]) == pytest.approx(1.0)
    np.testing.assert_allclose(np.abs(M[2:, 2:]), np.eye(2))


def test_distance_unit_vertical_segment():
    assert hyperbolic_distance(HalfSpacePoint(1.0, [0.0]), HalfSpacePoint(math.e, [0.0])) == pytest.approx(1.0)
    p = HalfSpacePoint(0.7, [1.0, 2.0])
    assert hyperbolic_distance(p, p) == 0.0
    with pytest.raises(ParameterError):
        HalfSpacePoint(0.0, [0.0])


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_distance_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    p, q, r = (HalfSpacePoint(rng.uniform(0.05, 5), rng.standard_normal(3)) for _ in range(3))
    assert hyperbolic_distance(p, r) <= hyperbolic_distance(p, q) + hyperbolic_distance(q, r) + 1e-10
    assert hyperbolic_distance(p, q) == pytest.approx(hyperbolic_distance(q, p), rel=1e-14)


def test_similarity_extension():
    O = np.array([[0.0, -1.0], [1.0, 0.0]])
    g = make_similarity(0.5, O, [1.0, 2.0])
    q = poincare_extension_apply(g, HalfSpacePoint(2.0, [1.0, 1.0]))
    assert q.height == pytest.approx(1.0)
    np.testing.assert_allclose(q.base, 0.5 * O @ [1.0, 1.0] + [1.0, 2.0])
