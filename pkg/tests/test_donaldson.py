import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hklab.donaldson import (NoLocalInverseError, SYMTF3_BASIS, f0_inverse,
                             from_coords, g0_map, ift_solve, linearization,
                             normalize_q, random_symtf3, selftest, tf,
                             to_coords)


def test_basis_orthonormal_tracefree():
    G = np.einsum("aij,bij->ab", SYMTF3_BASIS, SYMTF3_BASIS)
    assert np.max(np.abs(G - np.eye(5))) < 1e-14
    for B in SYMTF3_BASIS:
        assert abs(np.trace(B)) < 1e-15
        assert np.max(np.abs(B - B.T)) == 0.0


def test_tf_examples():
    assert np.max(np.abs(tf(np.eye(3)))) == 0.0
    assert np.max(np.abs(tf(np.diag([1.0, 2.0, 3.0]))
                         - np.diag([-1.0, 0.0, 1.0]))) < 1e-15


def test_tf_idempotent_on_random_symmetric():
    rng = np.random.default_rng(1)
    for _ in range(100):
        M = rng.normal(size=(3, 3))
        S = M + M.T
        assert np.max(np.abs(tf(tf(S)) - tf(S))) < 1e-14


def test_coords_roundtrip():
    rng = np.random.default_rng(2)
    v = rng.normal(size=5)
    assert np.max(np.abs(to_coords(from_coords(v)) - v)) < 1e-14
    A = from_coords(v)
    assert abs(np.trace(A)) < 1e-14


def test_g0_zero_and_expansion_at_identity():
    Q = np.eye(3)
    assert np.max(np.abs(g0_map(np.zeros((3, 3)), Q))) == 0.0
    rng = np.random.default_rng(3)
    S = random_symtf3(rng, 1.0)
    eps = 1e-3
    got = g0_map(eps * S, Q)
    expect = 2 * eps * S + eps**2 * tf(S @ S)
    assert np.max(np.abs(got - expect)) < 1e-15


def test_g0_rejects_unnormalized_q():
    with pytest.raises(ValueError, match="det Q"):
        g0_map(np.zeros((3, 3)), 2.0 * np.eye(3))


def test_f0_trivial_and_linearized():
    assert np.max(np.abs(f0_inverse(np.zeros((3, 3))))) == 0.0
    eps = 1e-3
    S = np.diag([-eps, 0.0, eps])
    A = f0_inverse(S)
    assert np.linalg.norm(A - S / 2.0) <= eps**2


def test_f0_roundtrip_thousand():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        noise = rng.normal(size=(3, 3)) * 0.05
        Q = normalize_q(np.eye(3) + 0.5 * (noise + noise.T))
        S = random_symtf3(rng, 0.1)
        A = f0_inverse(S, Q)
        worst = max(worst, float(np.linalg.norm(g0_map(A, Q) - S)))
    assert worst < 1e-11


def test_f0_first_order_agreement():
    # ||f0(S) - L^-1 S|| decays quadratically in ||S||
    rng = np.random.default_rng(5)
    Q = normalize_q(np.eye(3) + 0.1 * np.diag([1.0, -0.5, 0.2]))
    Linv = np.linalg.inv(linearization(Q))
    S0 = random_symtf3(rng, 1.0)
    norms, resids = [], []
    for s in (0.08, 0.04, 0.02, 0.01):
        S = s * S0
        diff = to_coords(f0_inverse(S, Q)) - Linv @ to_coords(S)
        norms.append(s)
        resids.append(np.linalg.norm(diff))
    slope = np.polyfit(np.log(norms), np.log(resids), 1)[0]
    assert abs(slope - 2.0) < 0.1


def test_f0_failure_carries_iterate():
    # far outside the invertibility radius the damped Newton reports the
    # last iterate and residual instead of silently wandering off
    with pytest.raises(NoLocalInverseError) as exc:
        f0_inverse(np.diag([-80.0, 0.0, 80.0]), max_iter=3)
    assert exc.value.residual > 0
    assert exc.value.last_iterate.shape == (3, 3)


def test_ift_linear_case_one_step():
    L = np.diag([2.0, 3.0])
    F0 = np.array([1e-4, -2e-4])
    x = ift_solve(F0, L, lambda v: np.zeros(2), C_L=0.5, C_N=1.0, r=0.05)
    assert np.max(np.abs(x + np.linalg.inv(L) @ F0)) < 1e-14


def test_ift_scalar_oracle():
    a = 1e-3
    x = ift_solve(np.array([-a]), np.array([[1.0]]), lambda v: v**2,
                  C_L=1.0, C_N=1.0, r=0.05)
    root = (-1.0 + math.sqrt(1.0 + 4.0 * a)) / 2.0
    assert abs(x[0] - root) < 1e-14
    assert abs(x[0]) <= 2.0 * a
    resid = -a + x[0] + x[0] ** 2
    assert abs(resid) < 1e-14


def test_ift_preconditions_named():
    with pytest.raises(ValueError, match="C_L"):
        ift_solve(np.array([1e-4]), np.array([[0.1]]), lambda v: 0 * v,
                  C_L=1.0, C_N=1.0, r=0.05)
    with pytest.raises(ValueError, match="10 C_L C_N"):
        ift_solve(np.array([1e-4]), np.array([[1.0]]), lambda v: 0 * v,
                  C_L=1.0, C_N=1.0, r=0.5)
    with pytest.raises(ValueError, match=r"\|\|F0\|\|"):
        ift_solve(np.array([4e-3]), np.array([[1.0]]), lambda v: 0 * v,
                  C_L=1.0, C_N=1.0, r=0.03)


def test_ift_divergence_detected():
    # lie about the Lipschitz modulus: the fixed point map is expanding
    with pytest.raises(ValueError, match="not contracting|no convergence"):
        ift_solve(np.array([1e-3]), np.array([[1.0]]), lambda v: 40.0 * v,
                  C_L=1.0, C_N=1e-6, r=1e3)


def test_ift_matches_f0_on_quadratic_instance():
    Q = np.eye(3)
    L = linearization(Q)  # 2 Id
    rng = np.random.default_rng(6)
    S = random_symtf3(rng, 0.004)

    def N(x):
        A = from_coords(x)
        return to_coords(tf(A @ Q @ A.T))

    x = ift_solve(-to_coords(S), L, N, C_L=0.5, C_N=2.0, r=0.04)
    A_ift = from_coords(x)
    A_newton = f0_inverse(S, Q)
    assert np.linalg.norm(A_ift - A_newton) < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-6, 0.1))
def test_norm_bound_property(seed, scale):
    # quantitative norm bound holds for every successful solve
    rng = np.random.default_rng(seed)
    F0 = rng.normal(size=5)
    F0 *= scale * 1e-2 / np.linalg.norm(F0)
    L = linearization(np.eye(3))

    def N(x):
        A = from_coords(x)
        return to_coords(tf(A @ A.T))

    x = ift_solve(F0, L, N, C_L=0.5, C_N=2.0, r=0.09)
    assert np.linalg.norm(x) <= 2 * 0.5 * np.linalg.norm(F0) + 1e-15


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_roundtrip_property(seed):
    rng = np.random.default_rng(seed)
    noise = rng.normal(size=(3, 3)) * 0.05
    Q = normalize_q(np.eye(3) + 0.5 * (noise + noise.T))
    S = random_symtf3(rng, 0.1)
    A = f0_inverse(S, Q)
    assert np.linalg.norm(g0_map(A, Q) - S) < 1e-11


def test_selftest_report():
    rep = selftest(trials=50, seed=7, ift_instances=20)
    assert rep["trials"] == 50
    assert rep["max_roundtrip_residual"] < 1e-11
    assert rep["max_norm_ratio"] <= 1.0
