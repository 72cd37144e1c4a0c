import numpy as np
import pytest

from epigraph_prox import (
    PExponent,
    ProxError,
    boundary_polynomial,
    project_epigraph,
    project_epigraph_l1,
    project_epigraph_lp,
    real_roots,
)

D_GRID = np.linspace(-4.0, 4.0, 160001)


def _grid_distance(x, t, p):
    """Squared distance to the epigraph scanned over d; the best t for a fixed d is max(t, |d|^p)."""
    ts = np.maximum(t, np.abs(D_GRID) ** p)
    return float(np.min((D_GRID - x) ** 2 + (ts - t) ** 2))


def _bisect_roots(coeffs, lo=-10.0, hi=10.0, n=20001):
    xs = np.linspace(lo, hi, n)
    vals = np.polyval(coeffs, xs)
    roots = []
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        a, b = xs[i], xs[i + 1]
        for _ in range(200):
            m = 0.5 * (a + b)
            if np.sign(np.polyval(coeffs, m)) == np.sign(np.polyval(coeffs, a)):
                a = m
            else:
                b = m
        roots.append(0.5 * (a + b))
    return roots


def test_exponent_parsing():
    assert PExponent.from_string("1/2") == PExponent(1, 2)
    assert PExponent.from_string("2/4") == PExponent(1, 2)
    assert PExponent.from_string("1") == PExponent(1, 1)
    assert PExponent(2, 3).p == pytest.approx(2 / 3)
    assert str(PExponent(1, 3)) == "1/3"
    assert PExponent(1, 1).is_l1


@pytest.mark.parametrize("text", ["abc", "3/2", "-1/2", "1/0"])
def test_exponent_rejects(text):
    with pytest.raises(ProxError):
        PExponent.from_string(text)


def test_exponent_requires_lowest_terms():
    with pytest.raises(ProxError):
        PExponent(2, 4)


def test_boundary_polynomial_square_root():
    coeffs = boundary_polynomial(1.5, 0.4, PExponent(1, 2))
    assert coeffs.tolist() == pytest.approx([1.0, 0.0, 0.5 - 1.5, -0.2])


def test_real_roots_known_cubic():
    coeffs = np.poly([-2.5, 0.3, 1.7])
    assert real_roots(coeffs) == pytest.approx([-2.5, 0.3, 1.7], abs=1e-9)


def test_real_roots_skips_complex():
    assert real_roots(np.array([1.0, 0.0, 1.0])) == []
    coeffs = np.polymul(np.poly([-1.2, 0.8]), [1.0, 0.0, 1.0])
    assert real_roots(coeffs) == pytest.approx([-1.2, 0.8], abs=1e-9)


def test_real_roots_against_bisection(rng):
    for _ in range(20):
        roots = np.sort(rng.uniform(-5, 5, 4))
        if np.min(np.diff(roots)) < 0.05:
            continue
        coeffs = np.polymul(np.poly(roots), [1.0, 0.3, 2.0]) * rng.uniform(0.5, 3.0)
        assert real_roots(coeffs) == pytest.approx(_bisect_roots(coeffs), abs=1e-7)


def test_real_roots_bad_input():
    with pytest.raises(ProxError):
        real_roots(np.array([1.0]))
    with pytest.raises(ProxError):
        real_roots(np.array([0.0, 1.0, 2.0]))


def test_inside_points_are_fixed():
    assert project_epigraph_lp(0.25, 0.6, PExponent(1, 2)) == (0.25, 0.6)
    assert project_epigraph_l1(-0.5, 1.0) == (-0.5, 1.0)


@pytest.mark.parametrize("p", [PExponent(1, 2), PExponent(1, 3), PExponent(2, 3)])
def test_lp_projection_against_grid_scan(rng, p):
    for _ in range(60):
        x, t = rng.uniform(-3.0, 3.0), rng.uniform(-2.0, 2.0)
        d, tt = project_epigraph_lp(x, t, p)
        assert tt >= abs(d) ** p.p - 1e-9
        ours = (d - x) ** 2 + (tt - t) ** 2
        assert ours <= _grid_distance(x, t, p.p) + 1e-8


def test_lp_projection_is_odd_in_x():
    p = PExponent(1, 2)
    d_pos, t_pos = project_epigraph_lp(2.0, 0.1, p)
    d_neg, t_neg = project_epigraph_lp(-2.0, 0.1, p)
    assert d_neg == pytest.approx(-d_pos)
    assert t_neg == pytest.approx(t_pos)


def test_lp_projection_can_snap_to_zero():
    d, t = project_epigraph_lp(0.01, -1.0, PExponent(1, 2))
    assert d == 0.0 and t == 0.0


def test_lp_rejects_l1():
    with pytest.raises(ProxError):
        project_epigraph_lp(1.0, 0.0, PExponent(1, 1))


@pytest.mark.parametrize(
    "x,t,expected",
    [(3.0, 1.0, (2.0, 2.0)), (-3.0, 1.0, (-2.0, 2.0)), (1.0, -2.0, (0.0, 0.0)), (0.0, 0.0, (0.0, 0.0))],
)
def test_l1_closed_form(x, t, expected):
    assert project_epigraph_l1(x, t) == pytest.approx(expected)


def test_vectorized_matches_scalar(rng):
    x = rng.uniform(-3, 3, 40)
    t = rng.uniform(-2, 2, 40)
    for p in (PExponent(1, 1), PExponent(1, 2)):
        d, tt = project_epigraph(x, t, p)
        scalar = project_epigraph_l1 if p.is_l1 else (lambda a, b, p=p: project_epigraph_lp(a, b, p))
        for i in range(40):
            assert (d[i], tt[i]) == pytest.approx(scalar(x[i], t[i]))


def test_vectorized_shape_mismatch():
    with pytest.raises(ProxError):
        project_epigraph(np.zeros(3), np.zeros(2), PExponent(1, 2))
