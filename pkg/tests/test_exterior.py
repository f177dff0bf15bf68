import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hklab.constants import TOL_ALGEBRAIC, TOL_FD
from hklab import exterior as ext
from hklab.exterior import (
    CART4, POLAR4, DifferentialForm, Diffeo, MetricField, combos,
    constant_form, coordinate_differential, exterior_derivative, flat_metric,
    form_norm, function_form, hodge_star, interior_product, volume_form, wedge,
)

RNG = np.random.default_rng(7)


def random_form(chart, degree, seed):
    rng = np.random.default_rng(seed)
    ncomp = len(combos(chart.dim, degree))
    weights = rng.normal(size=(ncomp, chart.dim))
    phases = rng.normal(size=ncomp)

    def coeff(pts):
        return np.sin(pts @ weights.T + phases)

    return DifferentialForm(chart, degree, coeff, f"rand{degree}")


def random_spd_metric(chart, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(chart.dim, chart.dim))
    M = A @ A.T + chart.dim * np.eye(chart.dim)

    def matrix(pts):
        # mild point dependence keeps the test honest
        s = 1.0 + 0.1 * np.sin(pts[:, 0])[:, None, None] ** 2
        return s * M

    return MetricField(chart, matrix)


def pts4(n=40, seed=3):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.5, 2.5, size=(n, 4))


@pytest.mark.parametrize("k,l", [(0, 1), (1, 1), (1, 2), (2, 2), (1, 3), (0, 4)])
def test_wedge_graded_commutativity(k, l):
    a = random_form(CART4, k, 11 + k)
    b = random_form(CART4, l, 23 + l)
    pts = pts4()
    lhs = wedge(a, b)(pts)
    rhs = wedge(b, a)(pts) * (-1.0) ** (k * l)
    assert np.max(np.abs(lhs - rhs)) < TOL_ALGEBRAIC


@given(st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_wedge_associative_constant(sa, sb, sc):
    rng = np.random.default_rng(sa * 10**6 + sb * 10**3 + sc)
    a = constant_form(CART4, 1, rng.normal(size=4))
    b = constant_form(CART4, 1, rng.normal(size=4))
    c = constant_form(CART4, 2, rng.normal(size=6))
    pts = pts4(10)
    lhs = wedge(wedge(a, b), c)(pts)
    rhs = wedge(a, wedge(b, c))(pts)
    assert np.max(np.abs(lhs - rhs)) < TOL_ALGEBRAIC


@pytest.mark.parametrize("k", [0, 1, 2])
def test_dd_is_zero(k):
    f = random_form(CART4, k, 31 + k)
    pts = pts4()
    ddf = exterior_derivative(exterior_derivative(f, step=1e-3), step=1e-3)(pts)
    # mixed central differences commute, so only roundoff survives
    assert np.max(np.abs(ddf)) < 1e-6


def test_fd_derivative_matches_closed_form():
    # w = sin(x)cos(y) dx + x*y dt2; dw = -sin(x)sin(y) dy^dx? compute:
    # d(sin x cos y) ^ dx = -sin x sin y dy^dx = sin x sin y dx^dy
    # d(xy) ^ dt2 = y dx^dt2 + x dy^dt2
    def coeff(pts):
        out = np.zeros((pts.shape[0], 4))
        out[:, 0] = np.sin(pts[:, 0]) * np.cos(pts[:, 1])
        out[:, 2] = pts[:, 0] * pts[:, 1]
        return out

    w = DifferentialForm(CART4, 1, coeff)
    pts = pts4()
    dw = exterior_derivative(w)(pts)
    expect = np.zeros((pts.shape[0], 6))
    expect[:, 0] = np.sin(pts[:, 0]) * np.sin(pts[:, 1])   # dx^dy
    expect[:, 1] = pts[:, 1]                               # dx^dt2
    expect[:, 3] = pts[:, 0]                               # dy^dt2
    assert np.max(np.abs(dw - expect)) < TOL_FD


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_double_hodge_sign(k):
    g = random_spd_metric(CART4, 5)
    f = random_form(CART4, k, 41 + k)
    pts = pts4()
    twice = hodge_star(hodge_star(f, g), g)(pts)
    sign = (-1.0) ** (k * (4 - k))
    assert np.max(np.abs(twice - sign * f(pts))) < TOL_ALGEBRAIC


def test_hodge_flat_oracle():
    g = flat_metric(CART4)
    pts = pts4()
    dx = coordinate_differential(CART4, 0)
    # *dx = dy^dt2^dt3 in a flat oriented chart
    res = hodge_star(dx, g)(pts)
    expect = np.zeros((pts.shape[0], 4))
    expect[:, 3] = 1.0  # components of 3-forms: (x,y,t2),(x,y,t3),(x,t2,t3),(y,t2,t3)
    assert np.max(np.abs(res - expect)) < TOL_ALGEBRAIC
    dxdy = wedge(dx, coordinate_differential(CART4, 1))
    res2 = hodge_star(dxdy, g)(pts)
    expect2 = np.zeros((pts.shape[0], 6))
    expect2[:, 5] = 1.0  # dt2^dt3
    assert np.max(np.abs(res2 - expect2)) < TOL_ALGEBRAIC


def test_form_norm_oracle():
    v = 2.7
    g = flat_metric(CART4, diag=[v, v, v, 1.0 / v])
    pts = pts4()
    dx = coordinate_differential(CART4, 0)
    dy = coordinate_differential(CART4, 1)
    assert np.max(np.abs(form_norm(dx, g, pts) - v ** -0.5)) < TOL_ALGEBRAIC
    assert np.max(np.abs(form_norm(wedge(dx, dy), g, pts) - 1.0 / v)) < TOL_ALGEBRAIC


def test_volume_form_oracle():
    v = 1.9
    g = flat_metric(CART4, diag=[v, v, v, 1.0 / v])
    pts = pts4()
    assert np.max(np.abs(volume_form(g)(pts)[:, 0] - v)) < TOL_ALGEBRAIC


def polar_to_cart():
    def fn(pts):
        out = np.empty_like(pts)
        out[:, 0] = pts[:, 0] * np.cos(pts[:, 1])
        out[:, 1] = pts[:, 0] * np.sin(pts[:, 1])
        out[:, 2:] = pts[:, 2:]
        return out

    def jac(pts):
        n = pts.shape[0]
        J = np.zeros((n, 4, 4))
        r, t1 = pts[:, 0], pts[:, 1]
        J[:, 0, 0] = np.cos(t1)
        J[:, 0, 1] = -r * np.sin(t1)
        J[:, 1, 0] = np.sin(t1)
        J[:, 1, 1] = r * np.cos(t1)
        J[:, 2, 2] = 1.0
        J[:, 3, 3] = 1.0
        return J

    return Diffeo(POLAR4, CART4, fn, jac)


def test_pullback_oracle_and_fd_jacobian():
    phi = polar_to_cart()
    phi_fd = Diffeo(POLAR4, CART4, phi.fn)  # finite-difference jacobian
    rng = np.random.default_rng(9)
    pts = np.column_stack([
        rng.uniform(0.5, 2.0, 30), rng.uniform(0.1, 6.0, 30),
        rng.uniform(0, 6, 30), rng.uniform(0, 6, 30)])
    dx = coordinate_differential(CART4, 0)
    got = phi.pullback(dx)(pts)
    expect = np.zeros((30, 4))
    expect[:, 0] = np.cos(pts[:, 1])
    expect[:, 1] = -pts[:, 0] * np.sin(pts[:, 1])
    assert np.max(np.abs(got - expect)) < TOL_ALGEBRAIC
    assert np.max(np.abs(phi_fd.pullback(dx)(pts) - expect)) < TOL_FD


def test_pullback_commutes_with_wedge_and_d():
    phi = polar_to_cart()
    rng = np.random.default_rng(10)
    pts = np.column_stack([
        rng.uniform(0.5, 2.0, 25), rng.uniform(0.1, 6.0, 25),
        rng.uniform(0, 6, 25), rng.uniform(0, 6, 25)])
    a = random_form(CART4, 1, 55)
    b = random_form(CART4, 1, 56)
    lhs = phi.pullback(wedge(a, b))(pts)
    rhs = wedge(phi.pullback(a), phi.pullback(b))(pts)
    assert np.max(np.abs(lhs - rhs)) < TOL_ALGEBRAIC
    lhs_d = phi.pullback(exterior_derivative(a))(pts)
    rhs_d = exterior_derivative(phi.pullback(a))(pts)
    assert np.max(np.abs(lhs_d - rhs_d)) < 1e-4


def test_pullback_metric_polar_oracle():
    phi = polar_to_cart()
    g = flat_metric(CART4)
    gp = phi.pullback_metric(g)
    pts = np.array([[1.7, 0.8, 0.1, 0.2], [0.6, 2.0, 1.0, 3.0]])
    got = gp(pts)
    for i, (r, _) in enumerate(pts[:, :2]):
        expect = np.diag([1.0, r**2, 1.0, 1.0])
        assert np.max(np.abs(got[i] - expect)) < TOL_ALGEBRAIC


def test_interior_product_antiderivation():
    a = random_form(CART4, 1, 61)
    b = random_form(CART4, 2, 62)
    vec = lambda pts: np.cos(pts[:, [1, 2, 3, 0]])
    pts = pts4()
    lhs = interior_product(wedge(a, b), vec)(pts)
    rhs = (wedge(interior_product(a, vec), b)
           - wedge(a, interior_product(b, vec)))(pts)
    assert np.max(np.abs(lhs - rhs)) < TOL_ALGEBRAIC


def test_interior_product_squares_to_zero():
    b = random_form(CART4, 3, 63)
    vec = lambda pts: np.sin(pts[:, [2, 3, 0, 1]])
    pts = pts4()
    res = interior_product(interior_product(b, vec), vec)(pts)
    assert np.max(np.abs(res)) < TOL_ALGEBRAIC


def test_chart_reduce_periodic():
    p = CART4.reduce(np.array([1.0, -2.0, 7.0, 9.0]))
    assert abs(p[2] - (7.0 - 2 * np.pi)) < 1e-14
    assert p[3] == 9.0  # t3 period left open (depends on the model)
