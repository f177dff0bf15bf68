"""Gibbons-Hawking ansatz: build a triple of 2-forms and the associated
metric from a positive harmonic potential on a 3-dimensional base and a
fiber connection 1-form, and check the hyperkahler algebra numerically.

Conventions: on a 4-chart with base coframe (e1, e2, e3) and fiber 1-form
Theta^ the triple is

    w1 = V e1^e2 + e3^Theta^
    w2 = V e1^e3 - e2^Theta^
    w3 = e1^Theta^ + V e2^e3

with metric g = V(e1^2 + e2^2 + e3^2) + V^-1 Theta^2 and volume form
V e1^e2^e3^Theta^.  A potential is a function of the first three chart
coordinates.
"""

from dataclasses import dataclass, field

import numpy as np

from .constants import FD_STEP_COARSE, TWO_PI
from . import exterior as ext
from .exterior import (DifferentialForm, MetricField, coordinate_differential,
                       exterior_derivative, wedge)


class HarmonicPotential:
    """Positive potential on the 3-dimensional base of a chart.

    value(pts3) -> (N,);  gradient(pts3) -> (N, 3) (finite differences if
    not supplied).  `poles` records monopole locations in base coordinates.
    """

    def __init__(self, value, gradient=None, poles=None, name="V",
                 fd_step=FD_STEP_COARSE):
        self._value = value
        self._gradient = gradient
        self.poles = np.zeros((0, 3)) if poles is None else np.asarray(poles, float)
        self.name = name
        self.fd_step = fd_step

    def value(self, pts3):
        pts3 = np.atleast_2d(np.asarray(pts3, dtype=float))
        return np.asarray(self._value(pts3), dtype=float)

    __call__ = value

    def gradient(self, pts3):
        pts3 = np.atleast_2d(np.asarray(pts3, dtype=float))
        if self._gradient is not None:
            return np.asarray(self._gradient(pts3), dtype=float)
        out = np.empty_like(pts3)
        for axis in range(3):
            h = np.zeros(3)
            h[axis] = self.fd_step
            out[:, axis] = (self.value(pts3 + h) - self.value(pts3 - h)) / (2 * self.fd_step)
        return out

    def laplacian_fd(self, pts3, step=None):
        """Finite-difference base Laplacian, for harmonicity checks."""
        pts3 = np.atleast_2d(np.asarray(pts3, dtype=float))
        step = step or self.fd_step
        v0 = self.value(pts3)
        out = np.zeros(pts3.shape[0])
        for axis in range(3):
            h = np.zeros(3)
            h[axis] = step
            out += (self.value(pts3 + h) - 2 * v0 + self.value(pts3 - h)) / step**2
        return out


@dataclass
class LocalConnection:
    """Fiber connection 1-form on the cut chart, with its known curvature.

    theta: the 1-form Theta^ (dform attached when the curvature is known in
    closed form)."""
    theta: DifferentialForm
    name: str = "Theta"


@dataclass
class HKTripleField:
    """A triple of 2-forms with its metric and reference volume form."""
    chart: object
    omegas: list
    metric: MetricField
    volume0: DifferentialForm
    potential: HarmonicPotential = None
    connection: LocalConnection = None
    name: str = ""

    def q_matrix(self, pts):
        return q_matrix(self, pts)


def base_value_fn(potential):
    """Lift a base potential to a function of 4-chart points (first three
    coordinates are the base)."""
    return lambda pts: potential.value(pts[:, :3])


def build_gh_triple(chart, potential, connection, base_coframe=None,
                    scale=1.0, name="gh"):
    """Assemble the Gibbons-Hawking triple, metric, and volume form.

    base_coframe: three 1-forms (defaults to the differentials of the first
    three chart coordinates).  `scale` multiplies the metric and the triple
    by scale^2 (and the volume by scale^4).
    """
    if base_coframe is None:
        base_coframe = [coordinate_differential(chart, i) for i in range(3)]
    e1, e2, e3 = base_coframe
    th = connection.theta
    Vfn = base_value_fn(potential)
    s2 = float(scale) ** 2

    def vs(form):  # V * form, as a 2-form factor
        return form.scale_fn(Vfn, potential.name)

    w1 = (vs(wedge(e1, e2)) + wedge(e3, th)) * s2
    w2 = (vs(wedge(e1, e3)) - wedge(e2, th)) * s2
    w3 = (wedge(e1, th) + vs(wedge(e2, e3))) * s2

    # closed-form exterior derivatives when the pieces carry them:
    # d(V e^ij) needs dV, handled by FD on demand; we attach d only for the
    # constant-coefficient parts, so exterior_derivative falls back to FD
    # unless the caller attaches better data.

    frame = [e1, e2, e3, th]

    def matrix(pts):
        V = Vfn(pts)
        rows = np.stack([np.asarray(f.coeff(pts)) for f in frame], axis=1)  # (N,4,4)
        w = np.stack([V, V, V, 1.0 / V], axis=1)  # (N,4)
        return s2 * np.einsum("nf,nfa,nfb->nab", w, rows, rows)

    g = MetricField(chart, matrix, name=f"g[{name}]")

    def vol_coeff(pts):
        V = Vfn(pts)
        prod = wedge(wedge(e1, e2), wedge(e3, th))
        return (s2 * s2) * V[:, None] * np.asarray(prod.coeff(pts))

    vol = DifferentialForm(chart, 4, vol_coeff, f"vol[{name}]")
    return HKTripleField(chart, [w1, w2, w3], g, vol, potential, connection, name)


def q_matrix(triple, pts):
    """Q_ij = (w_i ^ w_j) / (2 vol0) at each point -> (N, 3, 3)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    vol = triple.volume0(pts)[:, 0]
    Q = np.empty((pts.shape[0], 3, 3))
    for i in range(3):
        for j in range(i, 3):
            wij = wedge(triple.omegas[i], triple.omegas[j])(pts)[:, 0]
            Q[:, i, j] = Q[:, j, i] = wij / (2.0 * vol)
    return Q


def q_identity_residual(triple, pts):
    Q = q_matrix(triple, pts)
    return float(np.max(np.abs(Q - np.eye(3))))


def self_dual_residual(triple, pts):
    """max_i sup |*w_i - w_i| over pts (components, coordinate coframe)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    worst = 0.0
    for w in triple.omegas:
        sw = ext.hodge_star(w, triple.metric)(pts)
        worst = max(worst, float(np.max(np.abs(sw - w(pts)))))
    return worst


def closedness_residual(triple, pts, step=FD_STEP_COARSE, use_closed=True):
    """max_i sup |(dw_i)_components| over pts."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    worst = 0.0
    for w in triple.omegas:
        dw = exterior_derivative(w, step=step, use_closed=use_closed)(pts)
        worst = max(worst, float(np.max(np.abs(dw))))
    return worst


def monopole_flux(potential, center=(0.0, 0.0), radius=1.0, n=512):
    """Flux of grad V through the torus {plane circle of `radius` around
    `center`} x S^1 in the flat base R^2 x S^1.

    Both directions are periodic, so the trapezoid rule is spectrally
    accurate.  A potential (nu/pi) log r gives 4*pi*nu; each enclosed
    monopole of a periodic Green's function contributes -2*pi.
    """
    phi = TWO_PI * np.arange(n) / n
    t2 = TWO_PI * np.arange(n) / n
    P, T = np.meshgrid(phi, t2, indexing="ij")
    pts = np.column_stack([
        center[0] + radius * np.cos(P).ravel(),
        center[1] + radius * np.sin(P).ravel(),
        T.ravel()])
    grad = potential.gradient(pts)
    normal = np.column_stack([np.cos(P).ravel(), np.sin(P).ravel(),
                              np.zeros(n * n)])
    integrand = np.sum(grad * normal, axis=1)
    return float(radius * (TWO_PI / n) ** 2 * np.sum(integrand))
