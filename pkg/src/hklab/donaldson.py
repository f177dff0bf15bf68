"""Definite-triple matrix machinery: the trace-free projection, the
quadratic map G0 and its local inverse F0, and the quantitative
implicit-function solver in finite dimensions.

Matrices use the Frobenius norm throughout; SymTF3 elements are stored in a
5-dimensional orthonormal coordinate system so the trace-free constraint
holds exactly.
"""

import math

import numpy as np

S2, S6 = math.sqrt(2.0), math.sqrt(6.0)

# orthonormal (Frobenius) basis of symmetric trace-free 3x3 matrices
SYMTF3_BASIS = np.array([
    np.diag([1.0, -1.0, 0.0]) / S2,
    np.diag([1.0, 1.0, -2.0]) / S6,
    np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]) / S2,
    np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]) / S2,
    np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]) / S2,
])


def to_coords(A):
    """Symmetric trace-free matrix -> 5 reduced coordinates."""
    A = np.asarray(A, dtype=float)
    return np.einsum("kij,ij->k", SYMTF3_BASIS, A)


def from_coords(v):
    return np.einsum("k,kij->ij", np.asarray(v, dtype=float), SYMTF3_BASIS)


def tf(B):
    """TF(B) = B - (1/3) Tr(B) Id, symmetrized."""
    B = np.asarray(B, dtype=float)
    S = 0.5 * (B + B.T)
    return S - (np.trace(S) / 3.0) * np.eye(3)


def normalize_q(Q):
    """Q -> det(Q)^{-1/3} Q, the unit-volume normalization."""
    Q = np.asarray(Q, dtype=float)
    d = np.linalg.det(Q)
    if d <= 0:
        raise ValueError("normalize_q needs det Q > 0")
    return Q / d ** (1.0 / 3.0)


def _check_normalized(Q):
    Q = np.asarray(Q, dtype=float)
    if abs(np.linalg.det(Q) - 1.0) > 1e-10:
        raise ValueError("g0_map precondition: det Q = 1 within 1e-10")
    return Q


def g0_map(A, Q):
    """The quadratic map A -> TF(Q A^T + A Q + A Q A^T)."""
    Q = _check_normalized(Q)
    A = np.asarray(A, dtype=float)
    return tf(Q @ A.T + A @ Q + A @ Q @ A.T)


def g0_jacobian(A, Q):
    """Directional derivative of g0_map at A as a 5x5 matrix in reduced
    coordinates: B -> TF(Q B^T + B Q + B Q A^T + A Q B^T)."""
    A = np.asarray(A, dtype=float)
    J = np.empty((5, 5))
    for k, B in enumerate(SYMTF3_BASIS):
        img = tf(Q @ B.T + B @ Q + B @ Q @ A.T + A @ Q @ B.T)
        J[:, k] = to_coords(img)
    return J


class NoLocalInverseError(ValueError):
    """Newton for the local inverse failed; carries the last iterate and
    its residual."""

    def __init__(self, msg, last_iterate, residual):
        super().__init__(msg)
        self.last_iterate = last_iterate
        self.residual = residual


def f0_inverse(S, Q=None, tol=1e-12, max_iter=50):
    """The branch of g0_map's inverse through 0: Newton from A = 0 in the
    5 reduced coordinates, analytic Jacobian, step halving (max 10) when a
    full step does not reduce the residual."""
    if Q is None:
        Q = np.eye(3)
    Q = _check_normalized(Q)
    S = np.asarray(S, dtype=float)
    target = to_coords(tf(S))
    x = np.zeros(5)
    res = -target
    for _ in range(max_iter):
        if np.linalg.norm(res) < tol:
            return from_coords(x)
        A = from_coords(x)
        J = g0_jacobian(A, Q)
        try:
            step = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError:
            raise NoLocalInverseError("singular Jacobian in f0_inverse",
                                      A, float(np.linalg.norm(res)))
        t = 1.0
        for _ in range(10):
            x_new = x + t * step
            res_new = to_coords(g0_map(from_coords(x_new), Q)) - target
            if np.linalg.norm(res_new) < np.linalg.norm(res):
                break
            t *= 0.5
        else:
            raise NoLocalInverseError(
                "f0_inverse: damped Newton stalled",
                from_coords(x), float(np.linalg.norm(res)))
        x, res = x_new, res_new
    raise NoLocalInverseError(
        f"f0_inverse: no convergence in {max_iter} iterations",
        from_coords(x), float(np.linalg.norm(res)))


def linearization(Q):
    """L_Q(A) = TF(Q A^T + A Q) as a 5x5 matrix (2 Id at Q = Id)."""
    Q = np.asarray(Q, dtype=float)
    J = np.empty((5, 5))
    for k, B in enumerate(SYMTF3_BASIS):
        J[:, k] = to_coords(tf(Q @ B.T + B @ Q))
    return J


def ift_solve(F0, L, N, C_L, C_N, r, tol=1e-13, max_iter=200):
    """Quantitative implicit-function fixed point for F0 + L x + N(x) = 0.

    Hypotheses checked before iterating: ||L^-1|| <= C_L (smallest singular
    value), r < (10 C_L C_N)^-1, ||F0|| <= r / (10 C_L).  Iterates
    x_{k+1} = -L^-1 (F0 + N(x_k)) from 0 and returns x with residual < tol
    and ||x|| <= 2 C_L ||F0||.
    """
    F0 = np.atleast_1d(np.asarray(F0, dtype=float))
    n = F0.shape[0]
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape != (n, n):
        raise ValueError("ift_solve: L must be square and match F0")
    smin = float(np.linalg.svd(L, compute_uv=False)[-1])
    if smin == 0.0 or 1.0 / smin > C_L * (1.0 + 1e-12):
        raise ValueError(
            f"ift_solve precondition violated: ||L^-1|| = {1.0 / smin if smin else math.inf:.3e} > C_L = {C_L:.3e}")
    if not r < 1.0 / (10.0 * C_L * C_N):
        raise ValueError(
            f"ift_solve precondition violated: r = {r:.3e} >= (10 C_L C_N)^-1 = {1.0 / (10 * C_L * C_N):.3e}")
    nF0 = float(np.linalg.norm(F0))
    if not nF0 <= r / (10.0 * C_L):
        raise ValueError(
            f"ift_solve precondition violated: ||F0|| = {nF0:.3e} > r / (10 C_L) = {r / (10 * C_L):.3e}")
    lu = np.linalg.inv(L)
    x = np.zeros(n)
    deltas = []
    for _ in range(max_iter):
        x_new = -lu @ (F0 + np.atleast_1d(np.asarray(N(x), dtype=float)))
        deltas.append(float(np.linalg.norm(x_new - x)))
        x = x_new
        if len(deltas) >= 6:
            recent = deltas[-5:]
            if recent[0] > tol and recent[-1] >= recent[0]:
                raise ValueError("ift_solve: iteration not contracting "
                                 f"(last deltas {recent})")
        res = F0 + L @ x + np.atleast_1d(np.asarray(N(x), dtype=float))
        if float(np.linalg.norm(res)) < tol:
            bound = 2.0 * C_L * nF0
            if float(np.linalg.norm(x)) > bound + 1e-15:
                raise ValueError("ift_solve: solution violates the norm "
                                 "bound 2 C_L ||F0||")
            return x
    raise ValueError(f"ift_solve: no convergence in {max_iter} iterations")


def random_symtf3(rng, norm=0.1):
    v = rng.normal(size=5)
    v *= norm * rng.uniform(0, 1) ** 0.2 / np.linalg.norm(v)
    return from_coords(v)


def selftest(trials=1000, seed=20260823, ift_instances=100):
    """Round-trip and fixed-point batch check; returns a JSON-ready dict."""
    rng = np.random.default_rng(seed)
    max_rt = 0.0
    for _ in range(trials):
        noise = rng.normal(size=(3, 3)) * 0.05
        Q = normalize_q(np.eye(3) + 0.5 * (noise + noise.T))
        S = random_symtf3(rng, 0.1)
        A = f0_inverse(S, Q)
        max_rt = max(max_rt, float(np.linalg.norm(g0_map(A, Q) - S)))
    max_ratio = 0.0
    for _ in range(ift_instances):
        Q = np.eye(3)
        L = linearization(Q)
        C_L, C_N = 0.5, 2.0
        r = 0.09
        F0 = rng.normal(size=5)
        F0 *= (r / (10 * C_L)) * rng.uniform(0.1, 1.0) / np.linalg.norm(F0)

        def N(x):
            A = from_coords(x)
            return to_coords(tf(A @ A.T))

        x = ift_solve(F0, L, N, C_L, C_N, r)
        max_ratio = max(max_ratio,
                        float(np.linalg.norm(x))
                        / (2 * C_L * float(np.linalg.norm(F0))))
    return {"trials": trials, "max_roundtrip_residual": max_rt,
            "max_norm_ratio": max_ratio}
