"""Model hyperkahler geometries: the exact multi-log ALG* end and the flat
sector ALG end, with their deck transformations, involutions, gauge
normalization, and the fiber-area and holomorphic invariants.
"""

import cmath
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import TWO_PI
from . import exterior as ext
from .exterior import (ALG4, CART4, POLAR4, Diffeo, DifferentialForm,
                       MetricField, constant_form, coordinate_differential,
                       wedge)
from .gibbons_hawking import (HarmonicPotential, HKTripleField,
                              LocalConnection, build_gh_triple)

_OMEGA = complex(-0.5, 0.5 * math.sqrt(3.0))  # primitive cube root of unity

# fibration tag -> (beta, tau or None for unconstrained, b2 of the
# corresponding rational elliptic fiber complement)
TABLE1 = {
    "I0*": (0.5, None, 5),
    "II": (1.0 / 6.0, _OMEGA, 9),
    "II*": (5.0 / 6.0, _OMEGA, 1),
    "III": (0.25, 1j, 8),
    "III*": (0.75, 1j, 2),
    "IV": (1.0 / 3.0, _OMEGA, 7),
    "IV*": (2.0 / 3.0, _OMEGA, 3),
}


@dataclass
class ALGParams:
    tag: str = "I0*"
    L: float = 1.0
    tau: complex = None

    def __post_init__(self):
        if self.tag not in TABLE1:
            raise ValueError(f"unknown fibration tag {self.tag!r}")
        beta, tau_fixed, b2 = TABLE1[self.tag]
        self.beta = beta
        self.b2 = b2
        if self.tau is None:
            self.tau = tau_fixed if tau_fixed is not None else 1j
        elif tau_fixed is not None and abs(complex(self.tau) - tau_fixed) > 1e-12:
            raise ValueError(f"tag {self.tag} forces tau = {tau_fixed}")
        self.tau = complex(self.tau)
        if self.tau.imag <= 0:
            raise ValueError("tau must lie in the upper half plane")
        if self.L <= 0:
            raise ValueError("L must be positive")


@dataclass
class ALGStarParams:
    nu: int = 1
    kappa0: float = 1.0
    R: float = None
    L: float = 1.0

    def __post_init__(self):
        if int(self.nu) != self.nu or self.nu < 1:
            raise ValueError("nu must be a positive integer")
        self.nu = int(self.nu)
        r_min = math.exp((math.pi / self.nu) * (1.0 - self.kappa0))
        if self.R is None:
            self.R = 2.0 * r_min
        if self.R <= r_min:
            raise ValueError(f"need R > exp((pi/nu)(1-kappa0)) = {r_min:g}")
        if self.L <= 0:
            raise ValueError("L must be positive")

    @property
    def t3_period(self):
        # third deck transformation shifts t3 by 2 pi^2 / nu
        return 2.0 * math.pi**2 / self.nu

    def potential(self):
        nu, k0 = self.nu, self.kappa0

        def value(pts3):
            r2 = pts3[:, 0] ** 2 + pts3[:, 1] ** 2
            return k0 + (nu / math.pi) * 0.5 * np.log(r2)

        def gradient(pts3):
            r2 = pts3[:, 0] ** 2 + pts3[:, 1] ** 2
            g = np.zeros_like(pts3)
            g[:, 0] = (nu / math.pi) * pts3[:, 0] / r2
            g[:, 1] = (nu / math.pi) * pts3[:, 1] / r2
            return g

        return HarmonicPotential(value, gradient, name="V*")


def algstar_connection(p, chart=CART4):
    """Theta = (nu/pi)(dt3 - t2 dt1) on the cut chart, with dTheta attached."""
    c = p.nu / math.pi
    if chart is CART4:
        def coeff(pts):
            x, y, t2 = pts[:, 0], pts[:, 1], pts[:, 2]
            r2 = x * x + y * y
            out = np.zeros((pts.shape[0], 4))
            out[:, 0] = c * t2 * y / r2      # dt1 = (x dy - y dx)/r^2
            out[:, 1] = -c * t2 * x / r2
            out[:, 3] = c
            return out

        def dcoeff(pts):
            x, y = pts[:, 0], pts[:, 1]
            r2 = x * x + y * y
            out = np.zeros((pts.shape[0], 6))
            out[:, 1] = -c * y / r2          # dx^dt2 component of (c) dt1^dt2
            out[:, 3] = c * x / r2           # dy^dt2
            return out

        theta = DifferentialForm(chart, 1, coeff, "Theta")
        theta.dform = DifferentialForm(chart, 2, dcoeff, "dTheta")
        theta.dform.dform = ext.zero_form(chart, 3)
    elif chart is POLAR4:
        def coeff(pts):
            out = np.zeros((pts.shape[0], 4))
            out[:, 1] = -c * pts[:, 2]
            out[:, 3] = c
            return out

        dvals = np.zeros(6)
        dvals[3] = c                          # dt1^dt2
        theta = DifferentialForm(chart, 1, coeff, "Theta")
        theta.dform = constant_form(chart, 2, dvals, "dTheta")
    else:
        raise ValueError("unsupported chart")
    return LocalConnection(theta, "Theta*")


def _polar_base_coframe():
    """(dx, dy, dt2) expressed on the polar chart."""
    def ex(pts):
        out = np.zeros((pts.shape[0], 4))
        out[:, 0] = np.cos(pts[:, 1])
        out[:, 1] = -pts[:, 0] * np.sin(pts[:, 1])
        return out

    def ey(pts):
        out = np.zeros((pts.shape[0], 4))
        out[:, 0] = np.sin(pts[:, 1])
        out[:, 1] = pts[:, 0] * np.cos(pts[:, 1])
        return out

    e1 = DifferentialForm(POLAR4, 1, ex, "dx")
    e1.dform = ext.zero_form(POLAR4, 2)
    e2 = DifferentialForm(POLAR4, 1, ey, "dy")
    e2.dform = ext.zero_form(POLAR4, 2)
    e3 = coordinate_differential(POLAR4, 2)
    return [e1, e2, e3]


def algstar_polar_potential(p):
    nu, k0 = p.nu, p.kappa0
    return HarmonicPotential(
        lambda pts3: k0 + (nu / math.pi) * np.log(pts3[:, 0]),
        lambda pts3: np.column_stack([(nu / math.pi) / pts3[:, 0],
                                      np.zeros(pts3.shape[0]),
                                      np.zeros(pts3.shape[0])]),
        name="V*")


def algstar_model_triple(p, chart=CART4, scale=None):
    """The multi-log model triple; `scale` defaults to p.L."""
    scale = p.L if scale is None else scale
    conn = algstar_connection(p, chart)
    if chart is CART4:
        return build_gh_triple(CART4, p.potential(), conn, scale=scale,
                               name="ALG*")
    return build_gh_triple(POLAR4, algstar_polar_potential(p), conn,
                           base_coframe=_polar_base_coframe(), scale=scale,
                           name="ALG*")


def polar_to_cart_map():
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
        J[:, 0, 0], J[:, 0, 1] = np.cos(t1), -r * np.sin(t1)
        J[:, 1, 0], J[:, 1, 1] = np.sin(t1), r * np.cos(t1)
        J[:, 2, 2] = J[:, 3, 3] = 1.0
        return J

    return Diffeo(POLAR4, CART4, fn, jac, name="pol2cart")


def _linear_diffeo(chart, A, b=None, name="aff"):
    A = np.asarray(A, dtype=float)
    b = np.zeros(chart.dim) if b is None else np.asarray(b, dtype=float)

    def fn(pts):
        return pts @ A.T + b

    return Diffeo(chart, chart, fn,
                  lambda pts: np.broadcast_to(A, (pts.shape[0],) + A.shape).copy(),
                  name=name)


def iota_involution():
    """(r, t1, t2, t3) -> (r, t1 + pi, -t2, -t3) on the polar chart."""
    A = np.diag([1.0, 1.0, -1.0, -1.0])
    return _linear_diffeo(POLAR4, A, b=[0.0, math.pi, 0.0, 0.0], name="iota")


def deck_transformations(p):
    """The three deck maps of the ALG* end on the polar chart."""
    s1 = _linear_diffeo(POLAR4, np.eye(4), b=[0, TWO_PI, 0, 0], name="s1")

    def s2_fn(pts):
        out = pts.copy()
        out[:, 2] += TWO_PI
        out[:, 3] += TWO_PI * pts[:, 1]
        return out

    def s2_jac(pts):
        J = np.tile(np.eye(4), (pts.shape[0], 1, 1))
        J[:, 3, 1] = TWO_PI
        return J

    s2 = Diffeo(POLAR4, POLAR4, s2_fn, s2_jac, name="s2")
    s3 = _linear_diffeo(POLAR4, np.eye(4), b=[0, 0, 0, p.t3_period], name="s3")
    return s1, s2, s3


def gauge_maps(f_fn, grad_f_fn, c, q):
    """The normalizing diffeomorphisms phi_f, phi_q on the polar chart.

    f_fn(pts) is the fiber-shift generator f(r, t1, t2) with
    f(r, t1, t2) + f(r, t1 + pi, -t2) = c;  q is the residual flat constant.
    Returns (phi_f, phi_q, composite) with composite = phi_f o phi_q, so the
    pullback of a form runs phi_q^* then phi_f^* ... composition order is
    chosen so that composite.pullback(Theta_tilde) = Theta.
    """

    def phi_f_fn(pts):
        out = pts.copy()
        out[:, 3] += 0.5 * c - np.asarray(f_fn(pts))
        return out

    def phi_f_jac(pts):
        J = np.tile(np.eye(4), (pts.shape[0], 1, 1))
        g = np.asarray(grad_f_fn(pts))  # (N,3): df/dr, df/dt1, df/dt2
        J[:, 3, 0] -= g[:, 0]
        J[:, 3, 1] -= g[:, 1]
        J[:, 3, 2] -= g[:, 2]
        return J

    phi_f = Diffeo(POLAR4, POLAR4, phi_f_fn, phi_f_jac, name="phi_f")

    def phi_q_fn(pts):
        out = pts.copy()
        out[:, 1] -= q
        out[:, 3] -= q * pts[:, 2]
        return out

    def phi_q_jac(pts):
        J = np.tile(np.eye(4), (pts.shape[0], 1, 1))
        J[:, 3, 2] = -q
        return J

    phi_q = Diffeo(POLAR4, POLAR4, phi_q_fn, phi_q_jac, name="phi_q")
    return phi_f, phi_q, ext.compose(phi_f, phi_q)


def gauge_perturbed_connection(p, f_fn, grad_f_fn, pq=(0.0, 0.0)):
    """Theta~ = (nu/pi)(dt3 - t2 dt1 + df + p dt1 + q dt2) on the polar chart."""
    c = p.nu / math.pi
    pp, qq = pq

    def coeff(pts):
        g = np.asarray(grad_f_fn(pts))
        out = np.zeros((pts.shape[0], 4))
        out[:, 0] = c * g[:, 0]
        out[:, 1] = c * (-pts[:, 2] + g[:, 1] + pp)
        out[:, 2] = c * (g[:, 2] + qq)
        out[:, 3] = c
        return out

    return DifferentialForm(POLAR4, 1, coeff, "Theta~")


def u_invariant_algstar(pts_polar):
    """u = r^2 e^{2 i t1}, invariant under iota and the deck maps."""
    pts = np.atleast_2d(np.asarray(pts_polar, dtype=float))
    return (pts[:, 0] ** 2) * np.exp(2j * pts[:, 1])


# --- flat sector (ALG) model -------------------------------------------------

def alg_model_triple(p):
    """Flat triple on the (U, V) chart: coordinates (u1, u2, v1, v2)."""
    w1 = constant_form(ALG4, 2, [1, 0, 0, 0, 0, 1], "w1")   # du1^du2 + dv1^dv2
    w2 = constant_form(ALG4, 2, [0, 1, 0, 0, -1, 0], "w2")  # du1^dv1 - du2^dv2
    w3 = constant_form(ALG4, 2, [0, 0, 1, 1, 0, 0], "w3")   # du1^dv2 + du2^dv1
    g = ext.flat_metric(ALG4, name="g[ALG]")
    vol = constant_form(ALG4, 4, [1.0], "vol")
    return HKTripleField(ALG4, [w1, w2, w3], g, vol, name="ALG")


def sector_rotation(p):
    """(U, V) -> (e^{2 pi i beta} U, e^{-2 pi i beta} V)."""
    a = TWO_PI * p.beta
    R = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    A = np.zeros((4, 4))
    A[:2, :2] = R
    A[2:, 2:] = R.T  # opposite rotation
    return _linear_diffeo(ALG4, A, name="sector")


def lattice_translation(p, m, n):
    """V -> V + (m + n tau) L."""
    sh = (m + n * p.tau) * p.L
    return _linear_diffeo(ALG4, np.eye(4), b=[0, 0, sh.real, sh.imag],
                          name="latt")


def fiber_area(p, n=8):
    """Integral of w1 over a fundamental cell of the V-lattice (equals
    L^2 Im tau), computed by pulling back along the cell parametrization."""
    tri = alg_model_triple(p)
    tau, L = p.tau, p.L
    cell = ext.Chart("cell", ("s", "t"))

    def fn(pts):
        out = np.zeros((pts.shape[0], 4))
        z = L * (pts[:, 0] + pts[:, 1] * tau)
        out[:, 2] = z.real
        out[:, 3] = z.imag
        return out

    def jac(pts):
        J = np.zeros((pts.shape[0], 4, 2))
        J[:, 2, 0] = L
        J[:, 2, 1] = L * tau.real
        J[:, 3, 1] = L * tau.imag
        return J

    emb = Diffeo(cell, ALG4, fn, jac, name="cell")
    pulled = emb.pullback(tri.omegas[0])
    s = (np.arange(n) + 0.5) / n
    S, T = np.meshgrid(s, s, indexing="ij")
    pts = np.column_stack([S.ravel(), T.ravel()])
    return float(np.mean(pulled(pts)[:, 0]))


def u_invariant_alg(pts_alg, beta):
    """u = U^{1/beta} (principal branch), invariant under the sector
    rotation when arg U is tracked continuously."""
    pts = np.atleast_2d(np.asarray(pts_alg, dtype=float))
    U = pts[:, 0] + 1j * pts[:, 1]
    r = np.abs(U)
    arg = np.angle(U)
    return r ** (1.0 / beta) * np.exp(1j * arg / beta)


# --- configuration -----------------------------------------------------------

def parse_model_config(source):
    """Parse a JSON model configuration.

    Keys: family ("ALG" | "ALGstar"), and the matching parameters
    (tag/beta, tau, L for ALG; nu, kappa0, R, L for ALGstar).
    `source` is a path or a JSON string.
    """
    text = source
    if not source.lstrip().startswith("{"):
        with open(source) as fh:
            text = fh.read()
    raw = json.loads(text)
    family = raw.get("family")
    if family == "ALG":
        tag = raw.get("tag")
        if tag is None and "beta" in raw:
            matches = [t for t, (b, _, _) in TABLE1.items()
                       if abs(b - float(raw["beta"])) < 1e-12]
            if not matches:
                raise ValueError(f"beta {raw['beta']} is not in the table")
            tag = matches[0]
        tau = raw.get("tau")
        if isinstance(tau, str):
            tau = complex(tau)
        elif isinstance(tau, (list, tuple)):
            tau = complex(tau[0], tau[1])
        return ALGParams(tag=tag or "I0*", L=float(raw.get("L", 1.0)), tau=tau)
    if family == "ALGstar":
        return ALGStarParams(nu=int(raw.get("nu", 1)),
                             kappa0=float(raw.get("kappa0", 1.0)),
                             R=raw.get("R"), L=float(raw.get("L", 1.0)))
    raise ValueError("config key 'family' must be 'ALG' or 'ALGstar'")
