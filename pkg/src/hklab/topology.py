"""Intersection lattices of the fibration models: extended Dynkin Gram
matrices with their marked null fiber class, -2 class enumeration and
period nondegeneracy, monodromy Mayer-Vietoris first Betti numbers, and
the glued-manifold Betti bookkeeping.

Everything here is exact integer/rational arithmetic except real-valued
period functionals.
"""

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

# fiber tag -> second Betti number of the open space
TABLE1_B2 = {"I0*": 5, "II": 9, "II*": 1, "III": 8, "III*": 2,
             "IV": 7, "IV*": 3}

# fiber tag -> monodromy order in SL(2, Z)
MONODROMY_ORDER = {"I0*": 2, "II": 6, "II*": 6, "III": 4, "III*": 4,
                   "IV": 3, "IV*": 3}


# --- exact linear algebra -----------------------------------------------------

def _fraction_matrix(M):
    return [[Fraction(int(v)) for v in row] for row in np.asarray(M)]


def _row_reduce(rows):
    """In-place reduced row echelon form; returns the pivot columns."""
    pivots = []
    r = 0
    ncols = len(rows[0]) if rows else 0
    for c in range(ncols):
        pivot = next((i for i in range(r, len(rows)) if rows[i][c] != 0),
                     None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        inv = rows[r][c]
        rows[r] = [v / inv for v in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return pivots


def rational_rank(M):
    rows = _fraction_matrix(M)
    if not rows:
        return 0
    return len(_row_reduce(rows))


def rational_kernel(M):
    """Basis of the rational null space as primitive integer vectors."""
    M = np.asarray(M)
    n = M.shape[1]
    rows = _fraction_matrix(M)
    pivots = _row_reduce(rows)
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fc in free:
        v = [Fraction(0)] * n
        v[fc] = Fraction(1)
        for r, pc in enumerate(pivots):
            v[pc] = -rows[r][fc]
        mult = math.lcm(*(f.denominator for f in v))
        ints = [int(f * mult) for f in v]
        g = math.gcd(*(abs(i) for i in ints))
        ints = [i // g for i in ints]
        if sum(ints) < 0:
            ints = [-i for i in ints]
        basis.append(ints)
    return basis


def _leading_minors(M):
    """Leading principal minors, exact (fraction-free would do; Fractions
    are simple and fast at these ranks)."""
    M = np.asarray(M)
    out = []
    for k in range(1, M.shape[0] + 1):
        rows = _fraction_matrix(M[:k, :k])
        det = Fraction(1)
        for c in range(k):
            pivot = next((i for i in range(c, k) if rows[i][c] != 0), None)
            if pivot is None:
                det = Fraction(0)
                break
            if pivot != c:
                rows[c], rows[pivot] = rows[pivot], rows[c]
                det = -det
            det *= rows[c][c]
            for i in range(c + 1, k):
                f = rows[i][c] / rows[c][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[c])]
        out.append(det)
    return out


def is_negative_definite(M):
    """Sylvester test: (-1)^k det(M_k) > 0 for every leading minor."""
    return all((-minor if k % 2 == 0 else minor) > 0
               for k, minor in enumerate(_leading_minors(M)))


# --- lattices -----------------------------------------------------------------

@dataclass
class IntersectionLattice:
    rank: int
    gram: np.ndarray
    labels: tuple
    fiber_class: tuple

    def __post_init__(self):
        self.gram = np.asarray(self.gram, dtype=np.int64)
        if self.gram.shape != (self.rank, self.rank):
            raise ValueError("Gram matrix shape does not match the rank")
        if np.any(self.gram != self.gram.T):
            raise ValueError("Gram matrix must be symmetric")
        if len(self.labels) != self.rank or len(self.fiber_class) != self.rank:
            raise ValueError("labels and fiber class must match the rank")
        F = np.asarray(self.fiber_class, dtype=np.int64)
        if self.dot(F, F) != 0:
            raise ValueError("fiber class must be null")
        if np.any(self.gram @ F != 0):
            raise ValueError("fiber class must pair to zero with every "
                             "basis vector")

    def dot(self, u, v):
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        return int(u @ self.gram @ v)

    def to_json(self):
        return json.dumps({"rank": self.rank,
                           "gram": self.gram.tolist(),
                           "labels": list(self.labels),
                           "fiber_class": list(self.fiber_class)},
                          sort_keys=True)


def _graph_lattice(n, edges, labels):
    """Gram matrix -2 Id + adjacency of a simply laced diagram; the fiber
    class is the primitive positive kernel vector (the affine null root)."""
    gram = -2 * np.eye(n, dtype=np.int64)
    for i, j in edges:
        gram[i, j] += 1
        gram[j, i] += 1
    ker = rational_kernel(gram)
    if len(ker) != 1 or any(v <= 0 for v in ker[0]):
        raise ValueError("diagram is not of affine type")
    return IntersectionLattice(n, gram, labels, tuple(ker[0]))


def _chain_edges(seq):
    return [(a, b) for a, b in zip(seq, seq[1:])]


def dynkin_lattice(tag):
    """Extended Dynkin lattice of the fiber tag, with the marked null
    fiber class; rank matches the tabulated b2."""
    if tag == "I0*":
        # star: E1 the central node, F = 2 E1 + E2 + E3 + E4 + E5
        return _graph_lattice(5, [(0, j) for j in (1, 2, 3, 4)],
                              tuple(f"E{i}" for i in range(1, 6)))
    if tag == "II":   # affine E8
        edges = _chain_edges([0, 1, 2, 3, 4, 5, 6, 7]) + [(8, 2)]
        return _graph_lattice(9, edges, tuple(f"E{i}" for i in range(1, 10)))
    if tag == "III":  # affine E7
        edges = _chain_edges([0, 1, 2, 3, 4, 5, 6]) + [(7, 3)]
        return _graph_lattice(8, edges, tuple(f"E{i}" for i in range(1, 9)))
    if tag == "IV":   # affine E6
        edges = _chain_edges([0, 1, 2, 3, 4]) + [(5, 2), (6, 5)]
        return _graph_lattice(7, edges, tuple(f"E{i}" for i in range(1, 8)))
    if tag == "II*":  # rank 1, the fiber class only
        return IntersectionLattice(1, np.zeros((1, 1), dtype=np.int64),
                                   ("F",), (1,))
    if tag == "III*":  # affine A1 with the doubled bond, rank 2
        gram = np.array([[-2, 2], [2, -2]], dtype=np.int64)
        return IntersectionLattice(2, gram, ("E1", "E2"), (1, 1))
    if tag == "IV*":  # affine A2 cycle, rank 3
        return _graph_lattice(3, [(0, 1), (1, 2), (2, 0)],
                              ("E1", "E2", "E3"))
    raise ValueError(f"unknown fiber tag {tag!r}")


def delete_node(L, k):
    """Sublattice with basis vector k removed (no fiber class)."""
    keep = [i for i in range(L.rank) if i != k]
    return L.gram[np.ix_(keep, keep)]


# --- -2 classes and periods ---------------------------------------------------

def enumerate_roots(L, M):
    """All integer classes with coefficients in [-M, M] and C.C = -2."""
    if M < 1:
        raise ValueError("coefficient bound M must be >= 1")
    axis = np.arange(-M, M + 1)
    grids = np.meshgrid(*([axis] * L.rank), indexing="ij")
    V = np.stack([g.ravel() for g in grids], axis=1)
    qq = np.einsum("ni,ij,nj->n", V, L.gram, V)
    return [tuple(int(c) for c in row) for row in V[qq == -2]]


def root_cosets(L, M):
    """Canonical representatives of the F-cosets of the -2 classes."""
    F = np.asarray(L.fiber_class, dtype=np.int64)
    ones = np.nonzero(F == 1)[0]
    if ones.size == 0:
        raise ValueError("fiber class has no unit coefficient to reduce by")
    i0 = int(ones[0])
    reps = {tuple(int(c) for c in (np.asarray(r) - r[i0] * F))
            for r in enumerate_roots(L, M)}
    return sorted(reps)


@dataclass
class PeriodTriple:
    """Values of the three 2-form classes on the lattice basis."""
    w1: tuple
    w2: tuple
    w3: tuple

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(tuple(obj["w1"]), tuple(obj["w2"]), tuple(obj["w3"]))

    def pairings(self, C):
        C = np.asarray(C, dtype=float)
        return (float(np.dot(self.w1, C)), float(np.dot(self.w2, C)),
                float(np.dot(self.w3, C)))


def nondegeneracy_check(periods, L, M, tol=1e-12):
    """(passed, witness): fails when some -2 class pairs to (0, 0, 0) with
    all three periods; the witness is that class."""
    for C in enumerate_roots(L, M):
        if all(abs(v) <= tol for v in periods.pairings(C)):
            return False, C
    return True, None


# --- monodromy ----------------------------------------------------------------

FINITE_TAGS = tuple(MONODROMY_ORDER)


@dataclass
class MonodromyMatrix:
    mat: np.ndarray
    fiber_tag: str = "Id"

    def __post_init__(self):
        self.mat = np.asarray(self.mat, dtype=np.int64)
        if self.mat.shape != (2, 2):
            raise ValueError("monodromy must be a 2x2 integer matrix")
        det = int(round(np.linalg.det(self.mat.astype(float))))
        if det != 1:
            raise ValueError("monodromy must have det = 1")
        if self.fiber_tag in FINITE_TAGS and self.order() is None:
            raise ValueError(f"tag {self.fiber_tag} needs finite order <= 6")

    def order(self, k_max=6):
        A = np.eye(2, dtype=np.int64)
        for k in range(1, k_max + 1):
            A = A @ self.mat
            if np.array_equal(A, np.eye(2, dtype=np.int64)):
                return k
        return None


# standard finite-order SL(2, Z) representatives, validated by order
MONODROMY_REPRESENTATIVES = {
    1: np.eye(2, dtype=np.int64),
    2: -np.eye(2, dtype=np.int64),
    3: np.array([[0, -1], [1, -1]], dtype=np.int64),
    4: np.array([[0, -1], [1, 0]], dtype=np.int64),
    6: np.array([[0, -1], [1, 1]], dtype=np.int64),
}


def mv_b1(A):
    """b1 of the mapping-torus 3-manifold: the connecting H0 contribution
    plus dim ker(A - Id) over Q."""
    mat = A.mat if isinstance(A, MonodromyMatrix) else \
        MonodromyMatrix(A).mat
    return 1 + (2 - rational_rank(mat - np.eye(2, dtype=np.int64)))


def mv_b2(A):
    """Equal to mv_b1 by duality on the closed oriented 3-manifold."""
    return mv_b1(A)


# --- glued Betti numbers ------------------------------------------------------

def b2_x_nu(nu):
    """Second Betti number of the open space in the nu family."""
    if not 1 <= nu <= 4:
        raise ValueError("nu must be in 1..4")
    return 5 - nu


def moduli_dimension(nu):
    """3 (b2 - 1) = 12 - 3 nu."""
    return 3 * (b2_x_nu(nu) - 1)


def kthree_piece_data(nu=1):
    """Piece Betti data whose Mayer-Vietoris bookkeeping yields the K3
    values; the seam 3-manifold has b1 = b2 = 1."""
    return {"b1_U": 0, "b1_V": 0, "b2_U": 17 + nu, "b2_V": b2_x_nu(nu),
            "b1_seam": 1, "b2_seam": 1, "b2_plus": 3}


def glued_betti(piece):
    """Betti numbers of the glued 4-manifold from the exact-sequence rank
    bookkeeping; raises naming the failing rank equation."""
    p = dict(piece)
    b2_plus = p.pop("b2_plus", 3)
    b1u, b1v = p["b1_U"], p["b1_V"]
    b2u, b2v = p["b2_U"], p["b2_V"]
    b1s = p["b1_seam"]
    b2s = p.get("b2_seam", b1s)
    if b1u + b1v > b1s:
        raise ValueError("exactness violated: H1(U) + H1(V) -> H1(seam) "
                         "cannot be injective")
    if b2s > b2u + b2v:
        raise ValueError("exactness violated: H2(U) + H2(V) -> H2(seam) "
                         "cannot be surjective")
    b1 = 0
    b2 = (b1s - b1u - b1v) + (b2u + b2v - b2s)
    if b2 < b2_plus:
        raise ValueError("exactness violated: b2 smaller than the "
                         "self-dual rank")
    return {"b1": b1, "b2_plus": b2_plus, "b2_minus": b2 - b2_plus,
            "chi": 2 - 2 * b1 + b2}
