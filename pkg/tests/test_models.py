import math

import numpy as np
import pytest

from hklab.constants import TOL_ALGEBRAIC, TWO_PI
from hklab.gibbons_hawking import (closedness_residual, q_identity_residual,
                                   self_dual_residual)
from hklab.models import (ALGParams, ALGStarParams, TABLE1, alg_model_triple,
                          fiber_area, lattice_translation, parse_model_config,
                          sector_rotation, u_invariant_alg,
                          u_invariant_algstar)

OMEGA = complex(-0.5, 0.5 * math.sqrt(3.0))


def test_table1_contents():
    assert TABLE1["I0*"][0] == 0.5 and TABLE1["I0*"][1] is None
    assert abs(TABLE1["II"][0] - 1 / 6) < 1e-15
    assert abs(TABLE1["II*"][0] - 5 / 6) < 1e-15
    assert TABLE1["III"][0] == 0.25 and TABLE1["III"][1] == 1j
    assert TABLE1["III*"][0] == 0.75 and TABLE1["III*"][1] == 1j
    assert abs(TABLE1["IV"][0] - 1 / 3) < 1e-15
    assert abs(TABLE1["IV*"][0] - 2 / 3) < 1e-15
    for tag in ("II", "II*", "IV", "IV*"):
        assert abs(TABLE1[tag][1] - OMEGA) < 1e-15
    assert [TABLE1[t][2] for t in ("I0*", "II", "II*", "III", "III*", "IV", "IV*")] \
        == [5, 9, 1, 8, 2, 7, 3]
    # beta pairs for dual fibers sum to 1
    for a, b in (("II", "II*"), ("III", "III*"), ("IV", "IV*")):
        assert abs(TABLE1[a][0] + TABLE1[b][0] - 1.0) < 1e-15


def test_alg_params_validation():
    with pytest.raises(ValueError):
        ALGParams(tag="II", tau=1j)  # tag II forces tau = omega
    with pytest.raises(ValueError):
        ALGParams(tag="V")
    p = ALGParams(tag="I0*", tau=0.3 + 1.2j)  # I0* allows any tau
    assert p.beta == 0.5
    with pytest.raises(ValueError):
        ALGParams(tag="I0*", tau=0.3 - 1.2j)
    with pytest.raises(ValueError):
        ALGParams(tag="I0*", L=-1.0)


def test_algstar_params_validation():
    with pytest.raises(ValueError):
        ALGStarParams(nu=0)
    with pytest.raises(ValueError):
        ALGStarParams(nu=1, kappa0=0.0, R=1.0)  # below the log-end threshold
    p = ALGStarParams(nu=2, kappa0=0.7)
    assert p.R > math.exp((math.pi / 2) * 0.3)
    assert abs(p.t3_period - 2 * math.pi**2 / 2) < 1e-15


def rand_alg_pts(n=40, seed=4):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, 4))


def test_alg_triple_algebra():
    p = ALGParams(tag="III")
    tri = alg_model_triple(p)
    pts = rand_alg_pts()
    assert q_identity_residual(tri, pts) < TOL_ALGEBRAIC
    assert self_dual_residual(tri, pts) < TOL_ALGEBRAIC
    assert closedness_residual(tri, pts) < TOL_ALGEBRAIC


@pytest.mark.parametrize("tag", list(TABLE1))
def test_sector_rotation_preserves_triple(tag):
    p = ALGParams(tag=tag)
    tri = alg_model_triple(p)
    rot = sector_rotation(p)
    pts = rand_alg_pts()
    for w in tri.omegas:
        assert np.max(np.abs(rot.pullback(w)(pts) - w(pts))) < TOL_ALGEBRAIC


def test_lattice_translation_preserves_triple():
    p = ALGParams(tag="IV", L=1.7)
    tri = alg_model_triple(p)
    tr = lattice_translation(p, 2, -1)
    pts = rand_alg_pts()
    for w in tri.omegas:
        assert np.max(np.abs(tr.pullback(w)(pts) - w(pts))) < TOL_ALGEBRAIC


@pytest.mark.parametrize("tag,L", [("I0*", 1.0), ("II", 0.5), ("III*", 2.3)])
def test_fiber_area(tag, L):
    p = ALGParams(tag=tag, L=L)
    assert abs(fiber_area(p) - L**2 * p.tau.imag) < 1e-12


def test_u_invariant_alg_sector():
    p = ALGParams(tag="III")  # beta = 1/4
    rng = np.random.default_rng(8)
    n = 25
    r = rng.uniform(0.5, 2.0, n)
    # keep arg U away from the wrap after rotating by 2 pi beta
    arg = rng.uniform(-2.5, math.pi - TWO_PI * p.beta - 0.1, n)
    pts = np.zeros((n, 4))
    pts[:, 0] = r * np.cos(arg)
    pts[:, 1] = r * np.sin(arg)
    pts[:, 2:] = rng.normal(size=(n, 2))
    rot = sector_rotation(p)
    u0 = u_invariant_alg(pts, p.beta)
    u1 = u_invariant_alg(rot(pts), p.beta)
    assert np.max(np.abs(u1 - u0)) < 1e-9


def test_u_invariant_algstar():
    rng = np.random.default_rng(9)
    pts = np.column_stack([rng.uniform(1, 3, 20), rng.uniform(0, 2, 20),
                           rng.normal(size=20), rng.normal(size=20)])
    u0 = u_invariant_algstar(pts)
    flipped = pts.copy()
    flipped[:, 1] += math.pi
    flipped[:, 2:] *= -1
    assert np.max(np.abs(u_invariant_algstar(flipped) - u0)) < 1e-9


def test_parse_model_config():
    p = parse_model_config('{"family": "ALG", "tag": "IV*", "L": 2.0}')
    assert p.beta == TABLE1["IV*"][0] and p.L == 2.0
    p2 = parse_model_config('{"family": "ALG", "beta": 0.25}')
    assert p2.tag == "III"
    q = parse_model_config('{"family": "ALGstar", "nu": 3, "kappa0": 0.5}')
    assert q.nu == 3
    with pytest.raises(ValueError):
        parse_model_config('{"family": "nope"}')
