"""Exterior calculus on coordinate charts with batched numpy evaluators.

A k-form is stored as a callable producing its coefficients with respect to
the coordinate coframe, in lexicographic order of the index combinations.
All evaluators are vectorized over an (N, dim) array of points.
"""

import itertools
from functools import lru_cache

import numpy as np

from .constants import FD_STEP, TWO_PI


class Chart:
    """A named coordinate chart.  `periods[i]` is the period of coordinate i
    or None for a non-periodic coordinate."""

    def __init__(self, name, coords, periods=None):
        self.name = name
        self.coords = tuple(coords)
        self.dim = len(self.coords)
        self.periods = tuple(periods) if periods is not None else (None,) * self.dim

    def __repr__(self):
        return f"Chart({self.name!r}, dim={self.dim})"

    def reduce(self, pts):
        """Wrap periodic coordinates into [0, period)."""
        pts = np.array(pts, dtype=float, copy=True)
        for i, p in enumerate(self.periods):
            if p is not None:
                pts[..., i] = np.mod(pts[..., i], p)
        return pts


# charts used throughout the package
CART4 = Chart("cart4", ("x", "y", "t2", "t3"), (None, None, TWO_PI, None))
POLAR4 = Chart("polar4", ("r", "t1", "t2", "t3"))
NECK4 = Chart("neck4", ("xt", "yt", "t2", "t3"), (None, None, TWO_PI, None))
ALG4 = Chart("alg4", ("u1", "u2", "v1", "v2"))
BASE3 = Chart("base3", ("x", "y", "t2"), (None, None, TWO_PI))


@lru_cache(maxsize=None)
def combos(dim, k):
    return tuple(itertools.combinations(range(dim), k))


@lru_cache(maxsize=None)
def combo_index(dim, k):
    return {c: i for i, c in enumerate(combos(dim, k))}


def _perm_sign(seq):
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@lru_cache(maxsize=None)
def wedge_table(dim, k, l):
    """List of (i, j, sign, target_index) for the wedge of a k- and l-form."""
    table = []
    tgt = combo_index(dim, k + l)
    for i, I in enumerate(combos(dim, k)):
        for j, J in enumerate(combos(dim, l)):
            if set(I) & set(J):
                continue
            merged = I + J
            table.append((i, j, _perm_sign(merged), tgt[tuple(sorted(merged))]))
    return tuple(table)


@lru_cache(maxsize=None)
def levi_civita(dim):
    eps = np.zeros((dim,) * dim)
    for perm in itertools.permutations(range(dim)):
        eps[perm] = _perm_sign(perm)
    return eps


def _as_batch(pts, dim):
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        if pts.shape[0] != dim:
            raise ValueError(f"point has dim {pts.shape[0]}, chart has dim {dim}")
        return pts[None, :], True
    if pts.shape[-1] != dim:
        raise ValueError(f"points have dim {pts.shape[-1]}, chart has dim {dim}")
    return pts, False


class DifferentialForm:
    """A k-form on a chart, given by coefficients in lexicographic combo order.

    coeff(pts) must accept an (N, dim) array and return (N, C(dim, k)).
    An optional `dform` carries the closed-form exterior derivative.
    """

    def __init__(self, chart, degree, coeff, name="", dform=None):
        if not 0 <= degree <= chart.dim:
            raise ValueError("degree out of range")
        self.chart = chart
        self.degree = degree
        self.coeff = coeff
        self.name = name
        self.dform = dform

    @property
    def ncomp(self):
        return len(combos(self.chart.dim, self.degree))

    def __call__(self, pts):
        pts, single = _as_batch(pts, self.chart.dim)
        out = np.asarray(self.coeff(pts), dtype=float)
        if out.shape != (pts.shape[0], self.ncomp):
            raise ValueError(
                f"coefficient fn for {self.name or 'form'} returned {out.shape}, "
                f"expected {(pts.shape[0], self.ncomp)}"
            )
        return out[0] if single else out

    def with_d(self, dform):
        self.dform = dform
        return self

    def _binary(self, other, op, name):
        if isinstance(other, DifferentialForm):
            if other.chart is not self.chart or other.degree != self.degree:
                raise ValueError("form mismatch in " + name)
            f = lambda pts: op(self.coeff(pts), other.coeff(pts))
            d = None
            if self.dform is not None and other.dform is not None:
                d = self.dform._binary(other.dform, op, name)
            return DifferentialForm(self.chart, self.degree, f,
                                    f"({self.name}{name}{other.name})", d)
        raise TypeError

    def __add__(self, other):
        return self._binary(other, lambda a, b: np.asarray(a) + np.asarray(b), "+")

    def __sub__(self, other):
        return self._binary(other, lambda a, b: np.asarray(a) - np.asarray(b), "-")

    def __neg__(self):
        d = -self.dform if self.dform is not None else None
        return DifferentialForm(self.chart, self.degree,
                                lambda pts: -np.asarray(self.coeff(pts)),
                                f"(-{self.name})", d)

    def __mul__(self, c):
        c = float(c)
        d = self.dform * c if self.dform is not None else None
        return DifferentialForm(self.chart, self.degree,
                                lambda pts: c * np.asarray(self.coeff(pts)),
                                f"({c}*{self.name})", d)

    __rmul__ = __mul__

    def scale_fn(self, fn, name="f"):
        """Multiply by a scalar function of the point (drops any closed-form d)."""
        return DifferentialForm(
            self.chart, self.degree,
            lambda pts: np.asarray(fn(pts))[:, None] * np.asarray(self.coeff(pts)),
            f"({name}*{self.name})")


def constant_form(chart, degree, values, name=""):
    values = np.asarray(values, dtype=float)
    ncomp = len(combos(chart.dim, degree))
    if values.shape != (ncomp,):
        raise ValueError("wrong number of components")
    form = DifferentialForm(chart, degree,
                            lambda pts: np.broadcast_to(values, (pts.shape[0], ncomp)).copy(),
                            name)
    if degree < chart.dim:
        form.dform = zero_form(chart, degree + 1)
    return form


def zero_form(chart, degree):
    z = constant_form(chart, degree, np.zeros(len(combos(chart.dim, degree))), "0")
    return z


def coordinate_differential(chart, i):
    """The 1-form d(coord_i)."""
    v = np.zeros(chart.dim)
    v[i] = 1.0
    return constant_form(chart, 1, v, f"d{chart.coords[i]}")


def function_form(chart, fn, name="f"):
    """A 0-form from a scalar function of (N, dim) points."""
    return DifferentialForm(chart, 0, lambda pts: np.asarray(fn(pts))[:, None], name)


def wedge(a, b):
    if a.chart is not b.chart:
        raise ValueError("wedge on different charts")
    k, l = a.degree, b.degree
    dim = a.chart.dim
    if k + l > dim:
        return zero_form(a.chart, dim)  # degenerate; never used with k+l>dim
    table = wedge_table(dim, k, l)
    ntgt = len(combos(dim, k + l))

    def coeff(pts):
        ca = np.asarray(a.coeff(pts))
        cb = np.asarray(b.coeff(pts))
        out = np.zeros((pts.shape[0], ntgt))
        for i, j, s, t in table:
            out[:, t] += s * ca[:, i] * cb[:, j]
        return out

    d = None
    if a.dform is not None and b.dform is not None:
        # d(a ^ b) = da ^ b + (-1)^k a ^ db
        da_b = wedge(a.dform, b)
        a_db = wedge(a, b.dform) * ((-1.0) ** k)
        d = da_b + a_db
    return DifferentialForm(a.chart, k + l, coeff, f"({a.name}^{b.name})", d)


def exterior_derivative(f, step=FD_STEP, use_closed=True):
    """Exterior derivative.  Uses an attached closed-form derivative when
    available, otherwise symmetric finite differences of the coefficients."""
    if use_closed and f.dform is not None:
        return f.dform
    chart, k = f.chart, f.degree
    dim = chart.dim
    if k == dim:
        return zero_form(chart, dim)
    src = combos(dim, k)
    tgt_index = combo_index(dim, k + 1)

    def coeff(pts):
        n = pts.shape[0]
        out = np.zeros((n, len(combos(dim, k + 1))))
        # all partials of all coefficients: 2*dim evaluations of f.coeff
        for axis in range(dim):
            ha = np.zeros(dim)
            ha[axis] = step
            dcoef = (np.asarray(f.coeff(pts + ha)) - np.asarray(f.coeff(pts - ha))) / (2 * step)
            for ci, I in enumerate(src):
                if axis in I:
                    continue
                merged = (axis,) + I
                s = _perm_sign(merged)
                out[:, tgt_index[tuple(sorted(merged))]] += s * dcoef[:, ci]
        return out

    return DifferentialForm(chart, k + 1, coeff, f"d{f.name}")


def interior_product(f, vec_fn, name="V"):
    """i_V f for a vector field given as vec_fn(pts) -> (N, dim) components."""
    chart, k = f.chart, f.degree
    if k == 0:
        raise ValueError("interior product of a 0-form")
    dim = chart.dim
    src = combos(dim, k)
    tgt_index = combo_index(dim, k - 1)

    def coeff(pts):
        w = np.asarray(f.coeff(pts))
        v = np.asarray(vec_fn(pts))
        out = np.zeros((pts.shape[0], len(combos(dim, k - 1))))
        for ci, I in enumerate(src):
            for pos, idx in enumerate(I):
                rest = I[:pos] + I[pos + 1:]
                out[:, tgt_index[rest]] += ((-1.0) ** pos) * v[:, idx] * w[:, ci]
        return out

    return DifferentialForm(chart, k - 1, coeff, f"(i_{name} {f.name})")


class MetricField:
    """A Riemannian metric on a chart: matrix(pts) -> (N, dim, dim).

    `orientation` is +1 if the coordinate frame is positively oriented."""

    def __init__(self, chart, matrix, orientation=1, name="g"):
        self.chart = chart
        self.matrix = matrix
        self.orientation = orientation
        self.name = name

    def __call__(self, pts):
        pts, single = _as_batch(pts, self.chart.dim)
        m = np.asarray(self.matrix(pts), dtype=float)
        return m[0] if single else m

    def inverse_and_density(self, pts):
        m = np.asarray(self.matrix(pts), dtype=float)
        det = np.linalg.det(m)
        return np.linalg.inv(m), np.sqrt(np.abs(det))


def flat_metric(chart, diag=None, name="delta"):
    dim = chart.dim
    d = np.ones(dim) if diag is None else np.asarray(diag, dtype=float)
    mat = np.diag(d)
    return MetricField(chart, lambda pts: np.broadcast_to(mat, (pts.shape[0], dim, dim)).copy(),
                       name=name)


def _raise_full(comps, ginv, dim, k):
    """Build the fully contravariant antisymmetric tensor (N, dim^k) from
    lexicographic components and an inverse metric."""
    n = comps.shape[0]
    W = np.zeros((n,) + (dim,) * k)
    for ci, I in enumerate(combos(dim, k)):
        for perm in itertools.permutations(I):
            W[(slice(None),) + perm] = _perm_sign(perm) * comps[:, ci]
    # raise every index
    letters = "abcdefgh"[:k]
    upper = "ABCDEFGH"[:k]
    spec = ",".join(f"n{lo}{up}" for lo, up in zip(letters, upper))
    Wu = np.einsum(f"n{letters},{spec}->n{upper}", W,
                   *([ginv] * k)) if k > 0 else W
    return W, Wu


def hodge_star(f, g):
    """Hodge star of a k-form with respect to metric g (same chart)."""
    if f.chart is not g.chart:
        raise ValueError("hodge_star: chart mismatch")
    chart, k = f.chart, f.degree
    dim = chart.dim
    m = dim - k
    eps = levi_civita(dim)
    tgt_combos = combos(dim, m)

    def coeff(pts):
        comps = np.asarray(f.coeff(pts))
        ginv, dens = g.inverse_and_density(pts)
        dens = dens * g.orientation
        if k == 0:
            full = np.einsum("n,...->n...", comps[:, 0], eps)
        else:
            _, full_up = _raise_full(comps, ginv, dim, k)
            lk = "abcdefgh"[:k]
            lm = "uvwxyz"[:m]
            full = np.einsum(f"n{lk},{lk}{lm}->n{lm}", full_up, eps) / float(_factorial(k))
        out = np.zeros((pts.shape[0], len(tgt_combos)))
        for ci, J in enumerate(tgt_combos):
            out[:, ci] = dens * full[(slice(None),) + J]
        return out

    return DifferentialForm(chart, m, coeff, f"*{f.name}")


def form_norm(f, g, pts):
    """Pointwise tensor norm |f|_g at pts -> (N,)."""
    pts, single = _as_batch(pts, f.chart.dim)
    comps = np.asarray(f.coeff(pts))
    k, dim = f.degree, f.chart.dim
    ginv, _ = g.inverse_and_density(pts)
    if k == 0:
        out = np.abs(comps[:, 0])
        return out[0] if single else out
    full, full_up = _raise_full(comps, ginv, dim, k)
    letters = "abcdefgh"[:k]
    sq = np.einsum(f"n{letters},n{letters}->n", full, full_up) / float(
        _factorial(k))
    sq = np.maximum(sq, 0.0)
    out = np.sqrt(sq)
    return out[0] if single else out


def _factorial(k):
    out = 1
    for i in range(2, k + 1):
        out *= i
    return out


def volume_form(g):
    chart = g.chart
    dim = chart.dim

    def coeff(pts):
        _, dens = g.inverse_and_density(pts)
        return (g.orientation * dens)[:, None]

    return DifferentialForm(chart, dim, coeff, "vol")


class Diffeo:
    """A map between charts with pullback of forms and metrics.

    fn(pts) -> image points; jac(pts) -> (N, dim_to, dim_from), finite
    differences of fn when omitted.
    """

    def __init__(self, chart_from, chart_to, fn, jac=None, name="phi", step=FD_STEP):
        self.chart_from = chart_from
        self.chart_to = chart_to
        self.fn = fn
        self.name = name
        self.step = step
        self._jac = jac

    def __call__(self, pts):
        pts, single = _as_batch(pts, self.chart_from.dim)
        out = np.asarray(self.fn(pts), dtype=float)
        return out[0] if single else out

    def jacobian(self, pts):
        if self._jac is not None:
            return np.asarray(self._jac(pts), dtype=float)
        dim_f = self.chart_from.dim
        cols = []
        for axis in range(dim_f):
            h = np.zeros(dim_f)
            h[axis] = self.step
            cols.append((np.asarray(self.fn(pts + h)) - np.asarray(self.fn(pts - h)))
                        / (2 * self.step))
        return np.stack(cols, axis=-1)  # (N, dim_to, dim_from)

    def pullback(self, form):
        if form.chart is not self.chart_to:
            raise ValueError("pullback: form lives on the wrong chart")
        k = form.degree
        dim_f = self.chart_from.dim
        dim_t = self.chart_to.dim
        src = combos(dim_t, k)
        tgt = combos(dim_f, k)

        def coeff(pts):
            img = np.asarray(self.fn(pts), dtype=float)
            J = self.jacobian(pts)
            w = np.asarray(form.coeff(img))
            if k == 0:
                return w
            out = np.zeros((pts.shape[0], len(tgt)))
            for ti, I in enumerate(tgt):
                for si, K in enumerate(src):
                    sub = J[:, K, :][:, :, I]
                    out[:, ti] += w[:, si] * np.linalg.det(sub)
            return out

        return DifferentialForm(self.chart_from, k, coeff,
                                f"{self.name}*{form.name}")

    def pullback_metric(self, g):
        if g.chart is not self.chart_to:
            raise ValueError("pullback_metric: chart mismatch")

        def matrix(pts):
            img = np.asarray(self.fn(pts), dtype=float)
            J = self.jacobian(pts)
            G = np.asarray(g.matrix(img), dtype=float)
            return np.einsum("nia,nij,njb->nab", J, G, J)

        return MetricField(self.chart_from, matrix, orientation=g.orientation,
                           name=f"{self.name}*{g.name}")


def compose(outer, inner):
    """outer after inner, as a Diffeo."""
    if inner.chart_to is not outer.chart_from:
        raise ValueError("compose: chart mismatch")

    def fn(pts):
        return outer.fn(np.asarray(inner.fn(pts), dtype=float))

    def jac(pts):
        mid = np.asarray(inner.fn(pts), dtype=float)
        return np.einsum("nij,njk->nik", outer.jacobian(mid), inner.jacobian(pts))

    return Diffeo(inner.chart_from, outer.chart_to, fn, jac,
                  name=f"{outer.name}o{inner.name}")
