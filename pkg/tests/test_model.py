"""Gauge model invariants and the vortex-configuration operations."""

import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from csvortex.model import (
    ADMISSIBLE_PAIRS,
    GaugeModel,
    UnsupportedConfigurationError,
    build_model,
    cartan_pair,
    center_vortices,
    is_excluded_case,
    lambda_of,
    reject_excluded_case,
    solution_type_limits,
)


def test_cartan_pair_examples():
    assert cartan_pair("SU3") == (1, 1)
    assert cartan_pair("SU(3)", "ba") == (1, 1)
    assert cartan_pair("SO5", "ab") == (1, 2)
    assert cartan_pair("SO(5)", "ba") == (2, 1)
    assert cartan_pair("G2", "ba") == (3, 1)
    assert cartan_pair("G2", "ab") == (1, 3)


def test_cartan_pair_unknown_tag():
    with pytest.raises(UnsupportedConfigurationError):
        cartan_pair("SU4")
    with pytest.raises(UnsupportedConfigurationError):
        cartan_pair("SO5", "xy")


def test_lambda_examples():
    assert lambda_of(GaugeModel(1, 1)) == 1
    m = GaugeModel(1, 1, p_points=((0.0, 0.0),))
    assert m.lam == Fraction(3, 2) and not m.lam_is_integer
    m = GaugeModel(1, 2, p_points=((0.5, 0.0), (-0.5, 0.0)))
    assert m.lam == 3 and m.lam_is_integer


def test_admissible_pair_invariants():
    seen_ab3 = set()
    for a, b in ADMISSIBLE_PAIRS:
        assert 4 - a * b > 0
        assert (4 - a * b) * (2 + b) > 0
        assert a * b**3 != 16
        seen_ab3.add(a * b**3)
    assert seen_ab3 == {1, 2, 3, 8, 27}
    with pytest.raises(UnsupportedConfigurationError):
        GaugeModel(2, 2)


def test_center_single_point_moves_to_origin():
    p, q = center_vortices([(2.0, 0.0)], [], b=1)
    assert p == ((0.0, 0.0),) and q == ()


def test_center_already_centered_unchanged():
    p, q = center_vortices([(1.0, 0.0), (-1.0, 0.0)], [], b=1)
    assert p == ((1.0, 0.0), (-1.0, 0.0))


def test_center_mixed_family_shift():
    # solve b*sum(p - s) + 2*sum(q - s) = 0: s = (1, 0) here
    p, q = center_vortices([(1.0, 0.0)], [(1.0, 0.0)], b=2)
    assert p == ((0.0, 0.0),) and q == ((0.0, 0.0),)


@given(
    st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), max_size=5),
    st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), max_size=5),
    st.sampled_from([1, 2, 3]),
)
def test_center_idempotent_and_balanced(p, q, b):
    p1, q1 = center_vortices(p, q, b)
    sx = b * sum(x for x, _ in p1) + 2 * sum(x for x, _ in q1)
    sy = b * sum(y for _, y in p1) + 2 * sum(y for _, y in q1)
    assert abs(sx) < 1e-9 and abs(sy) < 1e-9
    p2, q2 = center_vortices(p1, q1, b)
    for u, v in zip(p1 + q1, p2 + q2):
        assert math.isclose(u[0], v[0], abs_tol=1e-12)
        assert math.isclose(u[1], v[1], abs_tol=1e-12)


def test_lambda_integer_detection_is_exact():
    # b = 1 with odd N1 must never be classified as integer
    for n1 in (1, 3, 5, 7):
        m = GaugeModel(1, 1, p_points=tuple((0.0, 0.0) for _ in range(n1)))
        assert not m.lam_is_integer
        assert m.lam == Fraction(n1, 2) + 1


def test_excluded_case_detection():
    mirrored = GaugeModel(1, 1, p_points=((1.0, 0.0), (-1.0, 0.0)))
    assert is_excluded_case(mirrored)
    with pytest.raises(UnsupportedConfigurationError):
        reject_excluded_case(mirrored)

    coincident = GaugeModel(1, 1, p_points=((0.0, 0.0), (0.0, 0.0)))
    assert not is_excluded_case(coincident)
    reject_excluded_case(coincident)

    b2 = GaugeModel(1, 2, p_points=((1.0, 0.0), (-1.0, 0.0)))
    assert not is_excluded_case(b2)
    reject_excluded_case(b2)


def test_excluded_case_detected_after_centering():
    # uncentered mirrored pair: centering reveals p2 = -p1
    m = GaugeModel(1, 1, p_points=((2.0, 0.0), (0.0, 0.0)))
    assert is_excluded_case(m)


def test_solution_type_limits():
    su3 = solution_type_limits(GaugeModel(1, 1))
    assert su3.topological_limit_1 == pytest.approx(0.0)
    assert su3.topological_limit_2 == pytest.approx(0.0)
    assert su3.mixed_limit_u1 == pytest.approx(-math.log(2.0))

    so5 = solution_type_limits(GaugeModel(1, 2))
    assert so5.topological_limit_1 == pytest.approx(math.log(3.0 / 2.0))
    assert so5.topological_limit_2 == pytest.approx(math.log(2.0))
    assert so5.mixed_limit_u1 == pytest.approx(-math.log(2.0))


def test_build_model_centers():
    m = build_model("SO5", "ab", p_points=[(1.0, 1.0)], q_points=[])
    assert m.is_centered()
    assert m.p_points == ((0.0, 0.0),)
    assert (m.a, m.b) == (1, 2)


def test_model_immutable():
    m = GaugeModel(1, 1)
    with pytest.raises(AttributeError):
        m.a = 2
