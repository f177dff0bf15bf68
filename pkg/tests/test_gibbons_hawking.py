import math

import numpy as np
import pytest

from hklab.constants import TOL_ALGEBRAIC, TOL_FD, TWO_PI
from hklab import exterior as ext
from hklab.exterior import CART4, POLAR4
from hklab.gibbons_hawking import (HarmonicPotential, build_gh_triple,
                                   closedness_residual, monopole_flux,
                                   q_identity_residual, self_dual_residual)
from hklab import models
from hklab.models import (ALGStarParams, algstar_connection,
                          algstar_model_triple, deck_transformations,
                          gauge_maps, gauge_perturbed_connection,
                          iota_involution, polar_to_cart_map)

P = ALGStarParams(nu=2, kappa0=0.7)


def cart_pts(n=60, seed=1, rmin=None):
    rng = np.random.default_rng(seed)
    rmin = P.R if rmin is None else rmin
    r = rng.uniform(rmin * 1.05, rmin * 4.0, n)
    t1 = rng.uniform(0.3, TWO_PI - 0.3, n)
    return np.column_stack([r * np.cos(t1), r * np.sin(t1),
                            rng.uniform(0.3, 6.0, n), rng.uniform(0, 6, n)])


def polar_pts(n=60, seed=2):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(P.R * 1.05, P.R * 4.0, n),
                            rng.uniform(0.3, TWO_PI - 0.3, n),
                            rng.uniform(0.3, 6.0, n),
                            rng.uniform(0.0, 6.0, n)])


def test_q_identity_and_selfdual_cartesian():
    tri = algstar_model_triple(P)
    pts = cart_pts()
    assert q_identity_residual(tri, pts) < TOL_ALGEBRAIC
    assert self_dual_residual(tri, pts) < 1e-9


def test_metric_closed_form():
    tri = algstar_model_triple(P, scale=1.0)
    pts = cart_pts(20)
    got = tri.metric(pts)
    nu, k0 = P.nu, P.kappa0
    for i, q in enumerate(pts):
        x, y, t2 = q[0], q[1], q[2]
        r2 = x * x + y * y
        V = k0 + (nu / math.pi) * 0.5 * math.log(r2)
        th = (nu / math.pi) * np.array([t2 * y / r2, -t2 * x / r2, 0.0, 1.0])
        expect = V * np.diag([1.0, 1.0, 1.0, 0.0]) + np.outer(th, th) / V
        assert np.max(np.abs(got[i] - expect)) < TOL_ALGEBRAIC


def test_closedness_exact_and_fd():
    tri = algstar_model_triple(P)
    pts = cart_pts()
    assert closedness_residual(tri, pts, use_closed=False) < TOL_FD


def test_closedness_fails_for_nonharmonic_potential():
    # same connection, potential spoiled by a non-harmonic (and non-matching)
    # term: some dw_i picks up the mismatch at order 1
    base = P.potential()
    eps = 0.1
    spoiled = HarmonicPotential(
        lambda pts3: base.value(pts3) + eps * pts3[:, 0] ** 2,
        name="Vbad")
    tri = build_gh_triple(CART4, spoiled, algstar_connection(P), name="bad")
    pts = cart_pts()
    assert closedness_residual(tri, pts, use_closed=False) > 1e-2
    # and the spoiled potential is indeed not harmonic
    assert np.max(np.abs(spoiled.laplacian_fd(pts[:, :3]))) > 1e-2


def test_polar_chart_matches_cartesian_pullback():
    tri_c = algstar_model_triple(P)
    tri_p = algstar_model_triple(P, chart=POLAR4)
    phi = polar_to_cart_map()
    pts = polar_pts()
    for wc, wp in zip(tri_c.omegas, tri_p.omegas):
        diff = phi.pullback(wc)(pts) - wp(pts)
        assert np.max(np.abs(diff)) < TOL_ALGEBRAIC
    gm = phi.pullback_metric(tri_c.metric)(pts) - tri_p.metric(pts)
    assert np.max(np.abs(gm)) < TOL_ALGEBRAIC


def test_polar_triple_algebra():
    tri = algstar_model_triple(P, chart=POLAR4)
    pts = polar_pts()
    assert q_identity_residual(tri, pts) < TOL_ALGEBRAIC
    assert self_dual_residual(tri, pts) < 1e-9
    assert closedness_residual(tri, pts, use_closed=False) < TOL_FD


def test_iota_fixes_triple():
    tri = algstar_model_triple(P, chart=POLAR4)
    iota = iota_involution()
    pts = polar_pts()
    for w in tri.omegas:
        assert np.max(np.abs(iota.pullback(w)(pts) - w(pts))) < TOL_ALGEBRAIC
    # iota is an involution up to the t1 period
    twice = iota(iota(pts))
    assert np.max(np.abs(POLAR4.reduce(twice) - POLAR4.reduce(pts))) < 1e-12 or \
        np.max(np.abs((twice - pts)[:, 1] - TWO_PI)) < 1e-12


def test_deck_invariance():
    tri = algstar_model_triple(P, chart=POLAR4)
    pts = polar_pts()
    for s in deck_transformations(P):
        for w in tri.omegas:
            assert np.max(np.abs(s.pullback(w)(pts) - w(pts))) < TOL_ALGEBRAIC


def test_monopole_flux_log_end():
    # V = kappa0 + (nu/pi) log r has total flux 4 pi nu through any torus
    for radius in (0.5, 2.0, 7.3):
        flux = monopole_flux(P.potential(), radius=radius, n=128)
        assert abs(flux - 4 * math.pi * P.nu) < 1e-10


def test_gauge_normalization_recovers_connection():
    q = 0.15

    def f_fn(pts):
        return 0.3 * np.sin(pts[:, 1]) + 0.2 * pts[:, 2]

    def grad_f(pts):
        n = pts.shape[0]
        return np.column_stack([np.zeros(n), 0.3 * np.cos(pts[:, 1]),
                                0.2 * np.ones(n)])

    theta_t = gauge_perturbed_connection(P, f_fn, grad_f, pq=(0.0, q))
    theta = algstar_connection(P, POLAR4).theta
    _, _, comp = gauge_maps(f_fn, grad_f, c=0.0, q=q)
    pts = polar_pts()
    assert np.max(np.abs(comp.pullback(theta_t)(pts) - theta(pts))) < TOL_ALGEBRAIC


def test_gauge_normalization_rotates_JK_plane():
    q = 0.4

    def f_fn(pts):
        return np.zeros(pts.shape[0])

    def grad_f(pts):
        return np.zeros((pts.shape[0], 3))

    from hklab.gibbons_hawking import LocalConnection
    theta_t = gauge_perturbed_connection(P, f_fn, grad_f, pq=(0.0, q))
    tri_t = build_gh_triple(POLAR4, models.algstar_polar_potential(P),
                            LocalConnection(theta_t),
                            base_coframe=models._polar_base_coframe())
    tri = algstar_model_triple(P, chart=POLAR4, scale=1.0)
    _, _, comp = gauge_maps(f_fn, grad_f, c=0.0, q=q)
    pts = polar_pts()
    wI = comp.pullback(tri_t.omegas[0])(pts)
    wJ = comp.pullback(tri_t.omegas[1])(pts)
    wK = comp.pullback(tri_t.omegas[2])(pts)
    o = [w(pts) for w in tri.omegas]
    assert np.max(np.abs(wI - o[0])) < TOL_ALGEBRAIC
    assert np.max(np.abs(wJ - (math.cos(q) * o[1] + math.sin(q) * o[2]))) < TOL_ALGEBRAIC
    assert np.max(np.abs(wK - (math.cos(q) * o[2] - math.sin(q) * o[1]))) < TOL_ALGEBRAIC
