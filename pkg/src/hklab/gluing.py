"""Cutoff gluing of the rescaled multi-log model, the balanced neck, and the
semi-flat triple over the collapsing cylinder, with radial-homotopy
primitives and error-scaling scans.

All triples live on the tilde chart (x~, y~, t2, t3) and are built through
the Gibbons-Hawking ansatz with base coframe (dx~, dy~, lam dt2) and fiber
form Theta^ = lam * Theta, so the three pieces share one bundle
identification and differ only in (V, Theta^).  The differences between the
pieces are available in closed form, which keeps the assembled triple free
of finite differences.
"""

import math
from dataclasses import dataclass

import numpy as np

from .constants import BISECT_TOL, QUAD_TOL, TWO_PI
from .numerics import bisect, loglog_fit, smoothstep, smoothstep_deriv
from . import exterior as ext
from .exterior import (NECK4, DifferentialForm, coordinate_differential,
                       form_norm, wedge)
from .gibbons_hawking import (HarmonicPotential, HKTripleField,
                              LocalConnection, build_gh_triple)
from . import greens as gr
from .greens import (NeckPotentialParams, balanced_pole_set, flux_function,
                     green_neck, green_neck_grad_tilde, green_zero,
                     green_zero_grad_tilde)

LOG2 = math.log(2.0)


def _memoized(coeff, maxsize=8):
    """Cache coefficient evaluations by point-array content; the scans
    evaluate the same grids repeatedly through q_matrix wedges."""
    cache, order = {}, []

    def wrapped(pts):
        key = (pts.shape, pts.tobytes())
        if key in cache:
            return cache[key]
        val = coeff(pts)
        cache[key] = val
        order.append(key)
        if len(order) > maxsize:
            cache.pop(order.pop(0), None)
        return val

    return wrapped


@dataclass
class GluingParams:
    """Scales of one gluing configuration; sigma = lam / t must be < 1."""
    lam: float
    t: float
    nu: int = 1
    b: int = 1
    kappa0: float = 0.0
    L: float = 1.0
    h_coeffs: tuple = (0.0,)
    angle0: float = 0.39269908169872414

    def __post_init__(self):
        if not (0 < self.lam < 1 and 0 < self.t < 1):
            raise ValueError("lam and t must lie in (0, 1)")
        if self.sigma >= 1:
            raise ValueError("need sigma = lam / t < 1")
        poles, _ = balanced_pole_set(self.nu, self.b, self.kappa0,
                                     self.h_coeffs, self.angle0)
        self.neck = NeckPotentialParams(self.nu, self.b, self.kappa0,
                                        self.lam, poles, tuple(self.h_coeffs))
        self._r_lambda = None

    @property
    def sigma(self):
        return self.lam / self.t

    @property
    def lam_tilde(self):
        return self.lam ** (self.nu / self.b)

    @property
    def T(self):
        return (self.nu / math.pi) * math.log(1.0 / self.lam)

    @property
    def T_flat(self):
        return (2 * self.nu + 1) / TWO_PI * math.log(1.0 / self.lam)

    def V_sigma_inv(self):
        """V(sigma^-1) = kappa0 + (nu/pi) log(t/lam), the log factor of the
        damage-zone bounds."""
        return self.kappa0 + (self.nu / math.pi) * math.log(1.0 / self.sigma)

    @property
    def r_lambda(self):
        """Outermost radius with G_lambda = 1 on a probe ray (bisection).

        The neck potential tops out near T = (nu/pi) log(1/lam), so the
        level 1 is the largest one reachable at desk scale; the result is
        comparable to 1/lam_tilde and satisfies 1 <= G_lambda(r_lambda) <= 100.
        """
        if self._r_lambda is None:
            if self.T <= 1.0:
                raise ValueError("no outer G_lambda = 1 crossing: T <= 1")
            ang = self.angle0 + math.pi / self.neck.n_poles
            direction = np.array([math.cos(ang), math.sin(ang)])

            def f(rt):
                xt = np.array([[rt * direction[0], rt * direction[1], 0.0]])
                return float(green_neck(self.neck, xt)[0]) - 1.0

            lo = 2.0 * float(np.max(self.neck.pole_distances))
            hi = 10.0 * math.exp((math.pi / self.b) * (self.T - 1.0)) + 10.0
            if f(lo) <= 0:
                raise ValueError("probe ray starts below the G_lambda = 1 level")
            self._r_lambda = bisect(f, lo, hi, tol=BISECT_TOL)
        return self._r_lambda


@dataclass
class AnnulusSpec:
    """Sampling annulus t_inner <= r~ <= t_outer with per-axis counts."""
    inner: float
    outer: float
    n_r: int = 8
    n_ang: int = 8
    n_t2: int = 8
    n_t3: int = 8

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("need 0 < inner < outer")
        for n in (self.n_r, self.n_ang, self.n_t2, self.n_t3):
            if n < 8:
                raise ValueError("need at least 8 samples per axis")

    def grid(self):
        rt = np.exp(np.linspace(math.log(self.inner), math.log(self.outer),
                                self.n_r))
        ang = TWO_PI * (np.arange(self.n_ang) + 0.37) / self.n_ang
        t2 = TWO_PI * (np.arange(self.n_t2) + 0.29) / self.n_t2
        t3 = TWO_PI * (np.arange(self.n_t3) + 0.41) / self.n_t3
        R, A, T2, T3 = np.meshgrid(rt, ang, t2, t3, indexing="ij")
        return np.column_stack([(R * np.cos(A)).ravel(), (R * np.sin(A)).ravel(),
                                T2.ravel(), T3.ravel()])


# --- cutoffs -----------------------------------------------------------------

def cutoff_phi(rt, t):
    """1 for r~ <= t, 0 for r~ >= 2t, quintic smoothstep in log r~."""
    rt = np.asarray(rt, dtype=float)
    return 1.0 - smoothstep(np.log(rt / t) / LOG2)


def cutoff_phi_deriv(rt, t):
    """d phi / d r~."""
    rt = np.asarray(rt, dtype=float)
    return -smoothstep_deriv(np.log(rt / t) / LOG2) / (rt * LOG2)


def cutoff_psi(rt, r_lam):
    """0 for r~ <= r_lambda, 1 for r~ >= 2 r_lambda."""
    rt = np.asarray(rt, dtype=float)
    return smoothstep(np.log(rt / r_lam) / LOG2)


def cutoff_psi_deriv(rt, r_lam):
    rt = np.asarray(rt, dtype=float)
    return smoothstep_deriv(np.log(rt / r_lam) / LOG2) / (rt * LOG2)


# --- the three GH pieces on the tilde chart ----------------------------------

def _psi_cut(rho, t2):
    """Flux function on the cut chart t2 in (0, 2 pi): the branch with
    psi -> t2 / (2 pi) at large rho, so the Dirac string sits on t2 = 0.

    This keeps sum_m psi_m dphi_m - ((nu+b)/pi) t2 dtheta1 decaying at
    infinity, which the outer radial homotopy needs.
    """
    t2 = np.asarray(t2, dtype=float)
    wind = np.floor((t2 + math.pi) / TWO_PI)
    return flux_function(rho, t2) + wind


def _base_coframe(lam):
    return [coordinate_differential(NECK4, 0),
            coordinate_differential(NECK4, 1),
            coordinate_differential(NECK4, 2) * lam]


def _dtheta1_parts(pts):
    x, y = pts[:, 0], pts[:, 1]
    r2 = x * x + y * y
    return -y / r2, x / r2  # (coefficients of dx~, dy~ in dtheta1)


def model_potential(gp):
    c = gp.nu / math.pi
    T, k0 = gp.T, gp.kappa0

    def value(pts3):
        return T + k0 + c * 0.5 * np.log(pts3[:, 0] ** 2 + pts3[:, 1] ** 2)

    def gradient(pts3):
        r2 = pts3[:, 0] ** 2 + pts3[:, 1] ** 2
        out = np.zeros_like(pts3)
        out[:, 0] = c * pts3[:, 0] / r2
        out[:, 1] = c * pts3[:, 1] / r2
        return out

    return HarmonicPotential(value, gradient, name="Vmod")


def model_connection(gp):
    """Theta^ = lam (nu/pi)(dt3 - t2 dtheta1) with exact curvature."""
    c = gp.lam * gp.nu / math.pi

    def coeff(pts):
        ax, ay = _dtheta1_parts(pts)
        out = np.zeros((pts.shape[0], 4))
        out[:, 0] = -c * pts[:, 2] * ax
        out[:, 1] = -c * pts[:, 2] * ay
        out[:, 3] = c
        return out

    def dcoeff(pts):
        ax, ay = _dtheta1_parts(pts)
        out = np.zeros((pts.shape[0], 6))
        out[:, 1] = c * ax   # dx~ ^ dt2 component of c dtheta1 ^ dt2
        out[:, 3] = c * ay   # dy~ ^ dt2
        return out

    th = DifferentialForm(NECK4, 1, coeff, "Th_mod")
    th.dform = DifferentialForm(NECK4, 2, dcoeff, "dTh_mod")
    th.dform.dform = ext.zero_form(NECK4, 3)
    return LocalConnection(th, "Th_mod")


def _star_grad_2form(lam, grad_fn, name):
    """lam * star_Q(dV) as a 2-form in tilde components, from the tilde
    gradient (dV/dx~, dV/dy~, dV/dt2)."""

    def coeff(pts):
        g = np.asarray(grad_fn(pts))
        out = np.zeros((pts.shape[0], 6))
        out[:, 0] = g[:, 2] / lam      # dx~ ^ dy~
        out[:, 1] = -lam * g[:, 1]     # dx~ ^ dt2
        out[:, 3] = lam * g[:, 0]      # dy~ ^ dt2
        return out

    f = DifferentialForm(NECK4, 2, coeff, name)
    return f


def neck_connection(gp):
    """Theta^_lam = lam Theta_lam on the cut chart, with the monopole
    equation curvature attached in closed form."""
    lam = gp.lam
    c = lam * gp.nu / math.pi
    poles = gp.neck.poles
    lt = gp.neck.lam_tilde
    h_coeffs = gp.neck.h_coeffs

    def coeff(pts):
        ax, ay = _dtheta1_parts(pts)
        out = np.zeros((pts.shape[0], 4))
        out[:, 0] = -c * pts[:, 2] * ax
        out[:, 1] = -c * pts[:, 2] * ay
        out[:, 3] = c
        for p in poles:
            dx = pts[:, 0] - p[0]
            dy = pts[:, 1] - p[1]
            s2 = dx * dx + dy * dy
            psi = _psi_cut(np.sqrt(s2) / lam, pts[:, 2])
            out[:, 0] += lam * psi * (-dy / s2)   # psi dphi_m
            out[:, 1] += lam * psi * (dx / s2)
        hre = gr.poly_eval(h_coeffs, lt * (pts[:, 0] + 1j * pts[:, 1])).real
        out[:, 2] -= lam * hre
        return out

    th = DifferentialForm(NECK4, 1, coeff, "Th_neck")
    th.dform = _star_grad_2form(lam, lambda pts: green_neck_grad_tilde(gp.neck, pts[:, :3]),
                                "dTh_neck")
    th.dform.dform = ext.zero_form(NECK4, 3)
    return LocalConnection(th, "Th_neck")


def neck_potential(gp):
    return HarmonicPotential(lambda p3: green_neck(gp.neck, p3),
                             lambda p3: green_neck_grad_tilde(gp.neck, p3),
                             poles=gp.neck.poles, name="Glam")


def semiflat_potential_fns(gp):
    lt = gp.neck.lam_tilde
    T, b = gp.T, gp.b

    def value(pts3):
        rt2 = pts3[:, 0] ** 2 + pts3[:, 1] ** 2
        z = lt * (pts3[:, 0] + 1j * pts3[:, 1])
        return T - (b / math.pi) * 0.5 * np.log(rt2) + gr.poly_eval(gp.h_coeffs, z).imag

    def gradient(pts3):
        rt2 = pts3[:, 0] ** 2 + pts3[:, 1] ** 2
        hp = gr.poly_eval(gr.poly_deriv(gp.h_coeffs),
                          lt * (pts3[:, 0] + 1j * pts3[:, 1]))
        out = np.zeros_like(pts3)
        out[:, 0] = -(b / math.pi) * pts3[:, 0] / rt2 + (lt * hp).imag
        out[:, 1] = -(b / math.pi) * pts3[:, 1] / rt2 + (lt * hp).real
        return out

    return value, gradient


def semiflat_connection(gp):
    """Theta^_SF = lam[(nu/pi) dt3 + (b/pi) t2 dtheta1 - Re h(lam~ zeta~) dt2]."""
    lam, lt = gp.lam, gp.neck.lam_tilde
    cb = lam * gp.b / math.pi

    def coeff(pts):
        ax, ay = _dtheta1_parts(pts)
        out = np.zeros((pts.shape[0], 4))
        out[:, 0] = cb * pts[:, 2] * ax
        out[:, 1] = cb * pts[:, 2] * ay
        hre = gr.poly_eval(gp.h_coeffs, lt * (pts[:, 0] + 1j * pts[:, 1])).real
        out[:, 2] = -lam * hre
        out[:, 3] = lam * gp.nu / math.pi
        return out

    _, gradfn = semiflat_potential_fns(gp)
    th = DifferentialForm(NECK4, 1, coeff, "Th_sf")
    th.dform = _star_grad_2form(lam, lambda pts: gradfn(pts[:, :3]), "dTh_sf")
    th.dform.dform = ext.zero_form(NECK4, 3)
    return LocalConnection(th, "Th_sf")


def rescaled_model_triple(gp):
    """The lam^2-rescaled multi-log model (exact GH data on the tilde chart)."""
    return build_gh_triple(NECK4, model_potential(gp), model_connection(gp),
                           base_coframe=_base_coframe(gp.lam), name="model")


def neck_triple(gp):
    return build_gh_triple(NECK4, neck_potential(gp), neck_connection(gp),
                           base_coframe=_base_coframe(gp.lam), name="neck")


def semiflat_triple(gp):
    value, gradient = semiflat_potential_fns(gp)
    pot = HarmonicPotential(value, gradient, name="Vsf")
    return build_gh_triple(NECK4, pot, semiflat_connection(gp),
                           base_coframe=_base_coframe(gp.lam), name="semiflat")


# --- closed-form difference triples ------------------------------------------

def _gh_difference_forms(gp, dV_fn, dV_grad_fn, dTheta_form, name):
    """The componentwise difference of two GH triples sharing the base
    coframe: dV = V1 - V2, dTheta = Theta^_1 - Theta^_2.  Exterior
    derivatives are attached in closed form (d dTheta = lam star d(dV))."""
    e1, e2, e3 = _base_coframe(gp.lam)
    dTheta_form = dTheta_form.with_d(_star_grad_2form(
        gp.lam, lambda pts: dV_grad_fn(pts[:, :3]), f"d({name}Th)"))
    dTheta_form.dform.dform = ext.zero_form(NECK4, 3)

    def dv_wedge(a, b):
        w = wedge(a, b)  # constant coefficients
        base = w(np.zeros((1, 4)))[0]

        def coeff(pts):
            return np.asarray(dV_fn(pts[:, :3]))[:, None] * base

        def dcoeff(pts):
            g = np.asarray(dV_grad_fn(pts[:, :3]))  # (N,3) tilde gradient
            dv1 = DifferentialForm(NECK4, 1, lambda q: np.column_stack(
                [g[:, 0], g[:, 1], g[:, 2], np.zeros(q.shape[0])]))
            return wedge(dv1, w)(pts)

        f = DifferentialForm(NECK4, 2, coeff, f"{name}V*{w.name}")
        f.dform = DifferentialForm(NECK4, 3, dcoeff, f"d({name}V*{w.name})")
        return f

    d1 = dv_wedge(e1, e2) + wedge(e3, dTheta_form)
    d2 = dv_wedge(e1, e3) - wedge(e2, dTheta_form)
    d3 = wedge(e1, dTheta_form) + dv_wedge(e2, e3)
    return [d1, d2, d3]


def model_minus_neck_forms(gp):
    """lam^2 w^X - w^N in closed form: dV = Vmod - G_lambda is evaluated
    without log cancellation (the log r~ parts coincide exactly)."""
    nk = gp.neck
    const = gp.kappa0 - ((gp.nu + gp.b) / math.pi) * math.log(1.0 / gp.lam)
    lt = nk.lam_tilde

    def dV(pts3):
        z = lt * (pts3[:, 0] + 1j * pts3[:, 1])
        return const - green_zero(nk, pts3) - gr.poly_eval(nk.h_coeffs, z).imag

    def dV_grad(pts3):
        g = -green_zero_grad_tilde(nk, pts3)
        hp = gr.poly_eval(gr.poly_deriv(nk.h_coeffs),
                          lt * (pts3[:, 0] + 1j * pts3[:, 1]))
        g[:, 0] -= (lt * hp).imag
        g[:, 1] -= (lt * hp).real
        return g

    lam = gp.lam
    poles = nk.poles

    def dTheta_coeff(pts):
        # Theta^_mod - Theta^_neck = -lam[sum psi_m dphi_m - Re h dt2]
        out = np.zeros((pts.shape[0], 4))
        for p in poles:
            dx = pts[:, 0] - p[0]
            dy = pts[:, 1] - p[1]
            s2 = dx * dx + dy * dy
            psi = _psi_cut(np.sqrt(s2) / lam, pts[:, 2])
            out[:, 0] -= lam * psi * (-dy / s2)
            out[:, 1] -= lam * psi * (dx / s2)
        hre = gr.poly_eval(nk.h_coeffs, lt * (pts[:, 0] + 1j * pts[:, 1])).real
        out[:, 2] += lam * hre
        return out

    dTheta = DifferentialForm(NECK4, 1, dTheta_coeff, "dThX")
    return _gh_difference_forms(gp, dV, dV_grad, dTheta, "X")


def neck_minus_semiflat_forms(gp):
    """w^N - w^SF in closed form: dV = E^SF = ((nu+b)/pi) log r + G_0 decays
    like r~^{-(2nu+2b)} for the equally spaced balanced layout.

    Beyond a few pole radii the naive difference of O(log(1/lam)) terms is
    catastrophic cancellation, and the outer homotopy amplifies that noise
    by 1/t^3; there the multipole form in p~/zeta~ is used instead (the
    dropped single-monopole corrections are exp(-dist/lam) small).
    """
    nk = gp.neck
    lam = gp.lam
    cnb = (gp.nu + gp.b) / math.pi
    poles = nk.poles
    pz = poles[:, 0] + 1j * poles[:, 1]
    rho_max = float(np.max(nk.pole_distances))
    far = 4.0 * rho_max
    # pole-power moments M_k = sum_m p_m^k; the symmetric layout zeroes most
    # of them exactly, which is what makes the naive per-pole sums cancel
    # catastrophically at large radius
    kmax = 60
    moments = np.array([np.sum(pz ** k) for k in range(1, kmax + 1)])
    moments[np.abs(moments) < 1e-10 * len(pz) * rho_max
            ** np.arange(1, kmax + 1)] = 0.0

    def _split(pts3):
        rt = np.hypot(pts3[:, 0], pts3[:, 1])
        return rt >= far

    def _series(z, shift):
        """sum_k M_k z^{-k-shift} with full relative accuracy."""
        zin = 1.0 / z
        power = zin ** (1 + shift)
        acc = np.zeros(z.shape[0], dtype=complex)
        for k in range(1, kmax + 1):
            m = moments[k - 1]
            if m != 0.0:
                acc += (m / k if shift == 0 else m) * power
            power = power * zin
        return acc

    def dV(pts3):
        pts3 = np.atleast_2d(pts3)
        out = np.empty(pts3.shape[0])
        f = _split(pts3)
        if np.any(~f):
            q = pts3[~f]
            r = np.hypot(q[:, 0], q[:, 1]) / lam
            out[~f] = cnb * np.log(r) + green_zero(nk, q)
        if np.any(f):
            z = pts3[f, 0] + 1j * pts3[f, 1]
            out[f] = _series(z, 0).real / TWO_PI
        return out

    def dV_grad(pts3):
        pts3 = np.atleast_2d(pts3)
        out = np.zeros((pts3.shape[0], 3))
        f = _split(pts3)
        if np.any(~f):
            q = pts3[~f]
            rt2 = q[:, 0] ** 2 + q[:, 1] ** 2
            g = green_zero_grad_tilde(nk, q)
            g[:, 0] += cnb * q[:, 0] / rt2
            g[:, 1] += cnb * q[:, 1] / rt2
            out[~f] = g
        if np.any(f):
            z = pts3[f, 0] + 1j * pts3[f, 1]
            acc = -_series(z, 1) / TWO_PI
            out[f, 0] = acc.real
            out[f, 1] = -acc.imag
        return out

    def dTheta_coeff(pts):
        # Theta^_lam - Theta^_SF = lam[sum psi_m dphi_m - ((nu+b)/pi) t2 dtheta1]
        out = np.zeros((pts.shape[0], 4))
        f = _split(pts[:, :3])
        if np.any(~f):
            q = pts[~f]
            ax, ay = _dtheta1_parts(q)
            out[~f, 0] = -lam * cnb * q[:, 2] * ax
            out[~f, 1] = -lam * cnb * q[:, 2] * ay
            for p in poles:
                dx = q[:, 0] - p[0]
                dy = q[:, 1] - p[1]
                s2 = dx * dx + dy * dy
                psi = _psi_cut(np.sqrt(s2) / lam, q[:, 2])
                out[~f, 0] += lam * psi * (-dy / s2)
                out[~f, 1] += lam * psi * (dx / s2)
        if np.any(f):
            # (t2 / 2 pi) sum_m (dphi_m - dtheta1), with g = d/dzeta of the
            # log ratio; psi_cut - t2/(2 pi) is exp-small out here
            q = pts[f]
            z = q[:, 0] + 1j * q[:, 1]
            acc = _series(z, 1)
            pref = lam * q[:, 2] / TWO_PI
            out[f, 0] = pref * acc.imag
            out[f, 1] = pref * acc.real
        return out

    dTheta = DifferentialForm(NECK4, 1, dTheta_coeff, "dThSF")
    return _gh_difference_forms(gp, dV, dV_grad, dTheta, "SF")


# --- radial primitives -------------------------------------------------------

def _contract_radial(comps, pts):
    """(i_R w) for R = (x~, y~, 0, 0), w a 2-form with components `comps`
    evaluated at the homotopy image of `pts`; returns (N, 4)."""
    x, y = pts[:, 0], pts[:, 1]
    out = np.empty((pts.shape[0], 4))
    out[:, 0] = -y * comps[:, 0]
    out[:, 1] = x * comps[:, 0]
    out[:, 2] = x * comps[:, 1] + y * comps[:, 3]
    out[:, 3] = x * comps[:, 2] + y * comps[:, 4]
    return out


def _gl_nodes(order=16):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def radial_primitive(w, base="inner", quad_tol=QUAD_TOL, check_closed=True,
                     check_pts=None, max_panels=64):
    """A 1-form eta with d eta = w, by the radial homotopy with base at the
    plane origin ("inner") or at plane infinity ("outer").

    The integrand is analytic, so composite Gauss-Legendre panels are
    doubled until the result is Cauchy within quad_tol.  Requires w closed;
    with check_closed a small FD residual check runs on check_pts.
    """
    if w.degree != 2 or w.chart is not NECK4:
        raise ValueError("radial_primitive expects a 2-form on the tilde chart")
    if check_closed:
        pts = check_pts
        if pts is None:
            ang = np.linspace(0.3, 5.9, 5)
            pts = np.column_stack([1.3 * np.cos(ang), 1.3 * np.sin(ang),
                                   np.full(5, 1.1), np.full(5, 0.7)])
        res = float(np.max(np.abs(ext.exterior_derivative(
            w, step=1e-4, use_closed=False)(pts))))
        if res > 1e-5:
            raise ValueError(f"radial_primitive: input not closed (dw residual {res:.3e})")
    nodes, weights = _gl_nodes()

    def integrand(pts, t):
        y = pts.copy()
        if base == "inner":
            y[:, 0] *= t
            y[:, 1] *= t
            comps = np.asarray(w.coeff(y))
            u = _contract_radial(comps, pts)
            u[:, 0] *= t
            u[:, 1] *= t
            return u
        y[:, 0] /= t
        y[:, 1] /= t
        comps = np.asarray(w.coeff(y))
        u = _contract_radial(comps, pts)
        u[:, 0] /= t
        u[:, 1] /= t
        return -u / t**2

    def integrate(pts):
        prev = None
        panels = 1
        while panels <= max_panels:
            total = np.zeros((pts.shape[0], 4))
            width = 1.0 / panels
            for p in range(panels):
                for tn, tw in zip(nodes, weights):
                    t = (p + tn) * width
                    if t == 0.0:
                        continue
                    total += (tw * width) * integrand(pts, t)
            if prev is not None:
                err = np.max(np.abs(total - prev))
                scale = max(1.0, float(np.max(np.abs(total))))
                if err < quad_tol * scale:
                    return total
            prev = total
            panels *= 2
        return prev

    def coeff(pts):
        return integrate(np.asarray(pts, dtype=float))

    eta = DifferentialForm(NECK4, 1, coeff, f"eta[{w.name}]")
    eta.dform = w
    return eta + _residue_primitive(w, base)


def _residue_primitive(w, base, t_small=1e-6, n_ang=32):
    """Primitive of the scale-invariant part that the radial homotopy
    misses (constant multiples of dt1^dt2, dt1^dt3, dt2^dt3)."""
    t = t_small if base == "inner" else 1.0 / t_small
    ang = TWO_PI * (np.arange(n_ang) + 0.5) / n_ang
    pts = np.column_stack([t * np.cos(ang), t * np.sin(ang),
                           np.full(n_ang, 0.77), np.full(n_ang, 1.23)])
    c = np.asarray(w.coeff(pts))
    x, y = pts[:, 0], pts[:, 1]
    c1 = float(np.mean(x * c[:, 3] - y * c[:, 1]))   # dt1^dt2
    c2 = float(np.mean(x * c[:, 4] - y * c[:, 2]))   # dt1^dt3
    c3 = float(np.mean(c[:, 5]))                     # dt2^dt3
    if abs(c1) < 1e-9 and abs(c2) < 1e-9 and abs(c3) < 1e-9:
        return ext.zero_form(NECK4, 1)

    def coeff(pts):
        ax, ay = _dtheta1_parts(pts)
        out = np.zeros((pts.shape[0], 4))
        out[:, 0] = -(c1 * pts[:, 2] + c2 * pts[:, 3]) * ax
        out[:, 1] = -(c1 * pts[:, 2] + c2 * pts[:, 3]) * ay
        out[:, 2] = -c3 * pts[:, 3]
        return out

    res = DifferentialForm(NECK4, 1, coeff, "eta_res")
    return res


# --- assembly ----------------------------------------------------------------

def _dphi_form(gp):
    t = gp.t

    def coeff(pts):
        rt = np.hypot(pts[:, 0], pts[:, 1])
        d = cutoff_phi_deriv(rt, t) / rt
        out = np.zeros((pts.shape[0], 4))
        out[:, 0] = d * pts[:, 0]
        out[:, 1] = d * pts[:, 1]
        return out

    return DifferentialForm(NECK4, 1, coeff, "dphi")


def _dpsi_form(gp):
    r_lam = gp.r_lambda

    def coeff(pts):
        rt = np.hypot(pts[:, 0], pts[:, 1])
        d = cutoff_psi_deriv(rt, r_lam) / rt
        out = np.zeros((pts.shape[0], 4))
        out[:, 0] = d * pts[:, 0]
        out[:, 1] = d * pts[:, 1]
        return out

    return DifferentialForm(NECK4, 1, coeff, "dpsi")


class ApproximateTriple(HKTripleField):
    """The glued triple with its pieces exposed for tests and scans."""

    def __init__(self, gp):
        self.params = gp
        self.model = rescaled_model_triple(gp)
        self.neck_piece = neck_triple(gp)
        self.semiflat = semiflat_triple(gp)
        self.DX = model_minus_neck_forms(gp)
        self.DSF = neck_minus_semiflat_forms(gp)
        self.eta_x = [radial_primitive(d, "inner", check_closed=False)
                      for d in self.DX]
        self.eta_sf = [radial_primitive(d, "outer", check_closed=False)
                       for d in self.DSF]
        for f in self.eta_x + self.eta_sf:
            f.coeff = _memoized(f.coeff)
        self.dphi = _dphi_form(gp)
        self.dpsi = _dpsi_form(gp)
        omegas = [self._make_omega(i) for i in range(3)]
        super().__init__(NECK4, omegas, self.neck_piece.metric,
                         self._make_volume(), name="glued")

    def _zone_masks(self, pts):
        rt = np.hypot(pts[:, 0], pts[:, 1])
        gp = self.params
        inner = rt <= gp.t
        outer = rt >= 2.0 * gp.r_lambda
        middle = ~(inner | outer)
        return rt, inner, middle, outer

    def _make_omega(self, i):
        gp = self.params

        def coeff(pts):
            pts = np.asarray(pts, dtype=float)
            rt, inner, middle, outer = self._zone_masks(pts)
            out = np.empty((pts.shape[0], 6))
            if np.any(inner):
                out[inner] = self.model.omegas[i](pts[inner])
            if np.any(outer):
                out[outer] = self.semiflat.omegas[i](pts[outer])
            if np.any(middle):
                q = pts[middle]
                rq = rt[middle]
                val = self.neck_piece.omegas[i](q)
                phi = cutoff_phi(rq, gp.t)
                in_phi = (phi > 0) | (rq <= 2.0 * gp.t + 1e-12)
                if np.any(in_phi):
                    qq = q[in_phi]
                    val[in_phi] += (wedge(self.dphi, self.eta_x[i])(qq)
                                    + phi[in_phi, None] * self.DX[i](qq))
                psi = cutoff_psi(rq, gp.r_lambda)
                in_psi = (psi > 0) | (rq >= gp.r_lambda - 1e-12)
                if np.any(in_psi):
                    qq = q[in_psi]
                    val[in_psi] -= (wedge(self.dpsi, self.eta_sf[i])(qq)
                                    + psi[in_psi, None] * self.DSF[i](qq))
                out[middle] = val
            return out

        return DifferentialForm(NECK4, 2, _memoized(coeff), f"glued_w{i + 1}")

    def _make_volume(self):
        def coeff(pts):
            pts = np.asarray(pts, dtype=float)
            _, inner, middle, outer = self._zone_masks(pts)
            out = np.empty((pts.shape[0], 1))
            if np.any(inner):
                out[inner] = self.model.volume0(pts[inner])
            if np.any(middle):
                out[middle] = self.neck_piece.volume0(pts[middle])
            if np.any(outer):
                out[outer] = self.semiflat.volume0(pts[outer])
            return out

        return DifferentialForm(NECK4, 4, coeff, "glued_vol")


def assemble_approximate_triple(gp):
    return ApproximateTriple(gp)


# --- differences, seams, scans -----------------------------------------------

def triple_difference(a, b, annulus, metric):
    """Per-component sup of |a_i - b_i| over the annulus grid, measured in
    the given metric."""
    pts = annulus.grid()
    out = []
    for wa, wb in zip(a.omegas, b.omegas):
        diff = wa - wb
        vals = form_norm(diff, metric, pts)
        if not np.all(np.isfinite(vals)):
            bad = pts[np.argmax(~np.isfinite(vals))]
            raise ValueError(f"triple_difference: evaluation failed at {bad}")
        out.append(float(np.max(vals)))
    return out


def seam_jump(tri, gp, n=64):
    """Max mismatch between adjacent pieces evaluated on the seams."""
    worst = 0.0
    for radius in (gp.t, 2 * gp.t, gp.r_lambda, 2 * gp.r_lambda):
        ang = TWO_PI * (np.arange(n) + 0.5) / n
        pts = np.column_stack([radius * np.cos(ang), radius * np.sin(ang),
                               np.full(n, 1.1), np.full(n, 0.6)])
        inside = pts.copy()
        inside[:, 0] *= 1.0 - 1e-9
        inside[:, 1] *= 1.0 - 1e-9
        outside = pts.copy()
        outside[:, 0] *= 1.0 + 1e-9
        outside[:, 1] *= 1.0 + 1e-9
        for i in range(3):
            jump = np.max(np.abs(tri.omegas[i](inside) - tri.omegas[i](outside)))
            worst = max(worst, float(jump))
    return worst


def q_error(tri, pts):
    """sup |Q - Id| over pts for the assembled triple."""
    from .gibbons_hawking import q_matrix
    Q = q_matrix(tri, pts)
    return float(np.max(np.abs(Q - np.eye(3))))


def inner_class_bound(gp):
    """(lam^2 + lam~ t^3) (t V(sigma^-1)^{1/2})^{-2}: the inner damage-zone
    error class."""
    return ((gp.lam**2 + gp.lam_tilde * gp.t**3)
            / (gp.t**2 * gp.V_sigma_inv()))


def outer_class_bound(gp):
    """lam^2 lam~^2: the semi-flat damage-zone error class."""
    return gp.lam**2 * gp.lam_tilde**2


def model_neck_class(gp):
    """lam~ t V(sigma^-1)^{-1}: the model-vs-neck triple difference class."""
    return gp.lam_tilde * gp.t / gp.V_sigma_inv()


def xi_class(gp):
    """lam~ t^3 (t V(sigma^-1)^{1/2})^{-1}: the primitive size class."""
    return gp.lam_tilde * gp.t**3 / (gp.t * math.sqrt(gp.V_sigma_inv()))


def semiflat_class(gp):
    """lam^2 lam~: the neck-vs-semi-flat triple difference class."""
    return gp.lam**2 * gp.lam_tilde


SCAN_KINDS = ("q_inner", "q_outer", "model_vs_neck", "neck_vs_semiflat",
              "identical")


def error_scan(ladder, kind="q_inner", samples=8):
    """Sup errors along a parameter ladder with a log-log regression.

    Returns a list of row dicts with keys lambda, t, zone, component,
    sup_error, fit_exponent, fit_r2 (exponent with respect to lambda,
    shared across the ladder per component), plus class_value and
    degenerate flags.
    """
    if len(ladder) < 3:
        raise ValueError("error_scan needs at least 3 ladder points")
    if kind not in SCAN_KINDS:
        raise ValueError(f"unknown scan kind {kind!r}")
    records = []
    for gp in ladder:
        if kind in ("q_inner", "model_vs_neck", "identical"):
            ann = AnnulusSpec(gp.t, 2 * gp.t, samples, samples, samples, samples)
        else:
            ann = AnnulusSpec(gp.r_lambda, 2 * gp.r_lambda, samples, samples,
                              samples, samples)
        if kind in ("q_inner", "q_outer"):
            tri = assemble_approximate_triple(gp)
            sup = q_error(tri, ann.grid())
            sups = [sup, sup, sup]
            cls = inner_class_bound(gp) if kind == "q_inner" else outer_class_bound(gp)
        elif kind == "model_vs_neck":
            nk = neck_triple(gp)
            sups = triple_difference(rescaled_model_triple(gp), nk, ann, nk.metric)
            cls = model_neck_class(gp)
        elif kind == "neck_vs_semiflat":
            nk = neck_triple(gp)
            sups = triple_difference(nk, semiflat_triple(gp), ann, nk.metric)
            cls = semiflat_class(gp)
        else:  # identical
            m = rescaled_model_triple(gp)
            sups = triple_difference(m, m, ann, m.metric)
            cls = 1.0
        records.append((gp, sups, cls))
    rows = []
    zone = "inner" if kind in ("q_inner", "model_vs_neck", "identical") else "outer"
    lams = np.array([gp.lam for gp, _, _ in records])
    for comp in range(3):
        errs = np.array([sups[comp] for _, sups, _ in records])
        degenerate = bool(np.all(errs < 1e-14))
        if degenerate:
            expo, r2 = float("nan"), float("nan")
        else:
            expo, _, r2 = loglog_fit(lams, np.maximum(errs, 1e-300))
        for (gp, sups, cls) in records:
            rows.append({
                "lambda": gp.lam,
                "t": gp.t,
                "zone": zone,
                "component": comp + 1,
                "sup_error": sups[comp],
                "fit_exponent": expo,
                "fit_r2": r2,
                "class_value": cls,
                "degenerate": degenerate,
                "kind": kind,
            })
    return rows


CSV_FIELDS = ("lambda", "t", "zone", "component", "sup_error",
              "fit_exponent", "fit_r2")


def scan_to_csv(rows, path):
    with open(path, "w") as fh:
        fh.write(",".join(CSV_FIELDS) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[k]) if isinstance(r[k], float) else str(r[k])
                              for k in CSV_FIELDS) + "\n")
