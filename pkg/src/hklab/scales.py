"""Collapsing-geometry scale functions: the smoothed radius, the near-pole
scale, the logarithmic thickness factor, the regularity-scale proxy s, the
global weight rho, and sampled weighted sup norms.

Points live in the cut-chart tilde coordinates; only the first three
columns (x, y, z) are used, with z periodic of period 2 pi.  The closed
piecewise forms leave transition bands open; we fill them with a quintic
smoothstep in the log of the controlling variable, which keeps every scale
positive, continuous, and two-sidedly comparable to its closed forms.

Distances are approximated by sampling the straight tilde segment against
the local metric density lam~ sqrt(V); this is an upper-bound surrogate for
the collapsed geodesic distance, adequate for comparability checks.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import smoothstep

TWO_PI = 2.0 * math.pi


class UnsupportedRegionError(ValueError):
    """Raised for region tags the weight function does not cover."""


@dataclass
class ScaleParams:
    """Parameters of one collapsing configuration.

    R0 is the model core radius (the inner zone is r~ <= lam R0), iota0 the
    separation constant of the pole layout, r_lam the outer neck radius.
    """
    lam: float
    nu: int
    b: int
    kappa0: float
    R0: float
    iota0: float
    r_lam: float
    poles: np.ndarray = field(repr=False)
    h_im0: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lam must lie in (0, 1)")
        if self.nu < 1 or self.b < 1:
            raise ValueError("nu and b must be positive integers")
        for name in ("kappa0", "R0", "iota0", "r_lam"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        self.poles = np.atleast_2d(np.asarray(self.poles, dtype=float))
        if self.poles.shape[0] == 0 or self.poles.shape[1] < 3:
            raise ValueError("need a nonempty monopole set with 3 columns")
        if self.T_flat <= 2.0:
            raise ValueError("lam too large: the near-pole bands need "
                             "T_flat > 2")
        if self.iota0 >= 2.0 * math.sqrt(2.0):
            raise ValueError("iota0 too large: need iota0/4 < 2/iota0")
        if 2.0 * self.lam * self.R0 >= self.iota0 / 4.0:
            raise ValueError("inner band overlaps the pole band: need "
                             "2 lam R0 < iota0/4")

    @property
    def lam_tilde(self):
        return self.lam ** (self.nu / self.b)

    @property
    def T(self):
        return (self.nu / math.pi) * math.log(1.0 / self.lam)

    @property
    def T_flat(self):
        return (2 * self.nu + 1) / TWO_PI * math.log(1.0 / self.lam)


def params_from_gluing(gp, R0=1.0, iota0=0.25):
    """ScaleParams matching a gluing configuration."""
    if gp.kappa0 <= 0:
        raise ValueError("scale parameters need kappa0 > 0")
    return ScaleParams(lam=gp.lam, nu=gp.nu, b=gp.b, kappa0=gp.kappa0,
                       R0=R0, iota0=iota0, r_lam=gp.r_lambda,
                       poles=np.array(gp.neck.poles[:, :3], dtype=float),
                       h_im0=float(complex(gp.neck.h(0.0)).imag))


# --- geometry helpers ---------------------------------------------------------

def _pts3(pts):
    a = np.atleast_2d(np.asarray(pts, dtype=float))
    if a.shape[1] < 3:
        raise ValueError("points need at least 3 coordinates")
    return a[:, :3]


def r_tilde(pts):
    a = _pts3(pts)
    return np.hypot(a[:, 0], a[:, 1])


def pole_distance(pts, p):
    """Distance to the nearest monopole, z taken modulo the fiber period."""
    a = _pts3(pts)
    d = a[:, None, :] - p.poles[None, :, :3]
    dz = np.mod(d[:, :, 2] + math.pi, TWO_PI) - math.pi
    return np.sqrt(d[:, :, 0] ** 2 + d[:, :, 1] ** 2 + dz ** 2).min(axis=1)


def _band(u, lo, hi):
    """Quintic weight rising 0 -> 1 across [lo, hi] on a log scale."""
    u = np.maximum(np.asarray(u, dtype=float), 1e-300)
    return smoothstep(np.log(u / lo) / math.log(hi / lo))


# --- the scale functions ------------------------------------------------------

def scale_r(pts, p):
    """Smoothed radius: lam R0 inside, r~ in the middle, 2 r_lam outside."""
    rt = np.maximum(r_tilde(pts), 1e-300)
    lo = p.lam * p.R0
    w1 = _band(rt, lo, 2.0 * lo)
    val = (1.0 - w1) * lo + w1 * rt
    w2 = _band(rt, p.r_lam, 2.0 * p.r_lam)
    return (1.0 - w2) * val + w2 * (2.0 * p.r_lam)


def scale_d(pts, p):
    """Near-pole scale in the blown-up distance u = d~/lam.

    Flat T_flat^{-1/2} inside u <= 1/T_flat, then T_flat^{1/2} u, then the
    log-corrected (T_flat + log(1/u)/2pi)^{1/2} u.  The last branch is
    extended smoothly past its stated range and frozen at 8 iota0 / lam,
    well beyond the blend band where the far branch takes over; this keeps
    the two branches within a bounded factor at the hand-off.
    """
    tf = p.T_flat
    u = pole_distance(pts, p) / p.lam
    cap = 8.0 * p.iota0 / p.lam
    uc = np.minimum(np.maximum(u, 1e-300), cap)
    f1 = tf ** -0.5
    f2 = math.sqrt(tf) * uc
    f3 = np.sqrt(np.maximum(tf - np.log(uc) / TWO_PI, 1e-12)) * uc
    w12 = _band(uc, 1.0 / tf, 2.0 / tf)
    w23 = _band(uc, 1.0, 2.0)
    val = (1.0 - w12) * f1 + w12 * f2
    return (1.0 - w23) * val + w23 * f3


def scale_LT(pts, p):
    """Thickness factor: 1 in the core, T + kappa0 + (nu/pi) log r~ across
    the neck, T + Im h(0) - (b/pi) log r~ in the semi-flat region, 1 at the
    outer seam."""
    rt = np.maximum(r_tilde(pts), 1e-300)
    lo = p.lam * p.R0
    rg = np.clip(rt, lo, 2.0 * p.r_lam)
    g2 = p.T + p.kappa0 + (p.nu / math.pi) * np.log(rg)
    g3 = p.T + p.h_im0 - (p.b / math.pi) * np.log(rg)
    w1 = _band(rt, lo, 2.0 * lo)
    val = (1.0 - w1) + w1 * g2
    w2 = _band(rt, p.iota0 / 4.0, 2.0 / p.iota0)
    val = (1.0 - w2) * val + w2 * g3
    w3 = _band(rt, p.r_lam, 2.0 * p.r_lam)
    return (1.0 - w3) * val + w3


def scale_s(pts, p):
    """Regularity-scale proxy: lam~ sqrt(L_T) r away from the monopoles,
    lam~ lam d near them, blended across iota0/4 <= d~ <= 2 iota0."""
    dq = pole_distance(pts, p)
    far = (p.lam_tilde * np.sqrt(np.maximum(scale_LT(pts, p), 1e-12))
           * scale_r(pts, p))
    near = p.lam_tilde * p.lam * scale_d(pts, p)
    w = _band(dq, p.iota0 / 4.0, 2.0 * p.iota0)
    return (1.0 - w) * near + w * far


# --- distances and sampled checks ---------------------------------------------

def _metric_potential(pts, p):
    """Local potential of the collapsed metric surrogate: T_flat plus the
    monopole spike near a pole, the thickness factor elsewhere."""
    dq = np.maximum(pole_distance(pts, p), 1e-12)
    w = _band(dq, p.iota0 / 4.0, 2.0 * p.iota0)
    near = p.T_flat + p.lam / (2.0 * dq)
    return (1.0 - w) * near + w * np.maximum(scale_LT(pts, p), 1e-12)


def path_distance(x, y, p, n_seg=48):
    """Straight-segment distance surrogate from x to each row of y: the
    segment length weighted by the density lam~ sqrt(V) at midpoints."""
    x = np.asarray(x, dtype=float)[:3]
    Y = _pts3(y)
    d = Y - x[None, :]
    d[:, 2] = np.mod(d[:, 2] + math.pi, TWO_PI) - math.pi
    tmid = (np.arange(n_seg) + 0.5) / n_seg
    mids = x[None, None, :] + d[:, None, :] * tmid[None, :, None]
    dens = p.lam_tilde * np.sqrt(_metric_potential(mids.reshape(-1, 3), p))
    seg = np.linalg.norm(d, axis=1) / n_seg
    return dens.reshape(Y.shape[0], n_seg).sum(axis=1) * seg


def sample_sb(p, n, rng):
    """Random points of the collapsed region: log-uniform annulus samples
    plus a cluster near the monopoles."""
    n_pole = n // 5
    n_ann = n - n_pole
    lo = 2.0 * p.lam * p.R0
    r = np.exp(rng.uniform(math.log(lo), math.log(0.9 * p.r_lam), n_ann))
    a = rng.uniform(0.0, TWO_PI, n_ann)
    z = rng.uniform(0.0, TWO_PI, n_ann)
    pts = np.column_stack([r * np.cos(a), r * np.sin(a), z])
    idx = rng.integers(0, p.poles.shape[0], n_pole)
    dd = np.exp(rng.uniform(math.log(p.lam / (5.0 * p.T_flat)),
                            math.log(p.iota0 / 2.0), n_pole))
    dirs = rng.normal(size=(n_pole, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return np.vstack([pts, p.poles[idx, :3] + dd[:, None] * dirs])


def comparability_constant(p, n_x=200, n_y=20, seed=0, n_seg=48):
    """Realized two-sided constant: max of s(y)/s(x) over sampled pairs
    with path distance below s(x)/4."""
    rng = np.random.default_rng(seed)
    xs = sample_sb(p, n_x, rng)
    sx_all = scale_s(xs, p)
    c0 = 1.0
    for x, sx in zip(xs, sx_all):
        dens = p.lam_tilde * math.sqrt(
            float(_metric_potential(x[None, :], p)[0]))
        step = sx / (4.0 * dens)
        dirs = rng.normal(size=(n_y, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        ys = x[None, :] + dirs * (step * rng.uniform(0.05, 0.95, n_y))[:, None]
        for _ in range(12):
            over = path_distance(x, ys, p, n_seg) >= sx / 4.0
            if not np.any(over):
                break
            ys[over] = x[None, :] + (ys[over] - x[None, :]) * 0.5
        sy = scale_s(ys, p)
        c0 = max(c0, float(np.maximum(sy / sx, sx / sy).max()))
    return c0


def lipschitz_ratio(p, n_x=150, n_y=8, seed=1, n_seg=48):
    """Max of |s(x) - s(y)| / d^(x, y) over sampled nearby pairs."""
    rng = np.random.default_rng(seed)
    xs = sample_sb(p, n_x, rng)
    sx_all = scale_s(xs, p)
    worst = 0.0
    for x, sx in zip(xs, sx_all):
        dens = p.lam_tilde * math.sqrt(
            float(_metric_potential(x[None, :], p)[0]))
        step = sx / (4.0 * dens)
        dirs = rng.normal(size=(n_y, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        ys = x[None, :] + dirs * (step * rng.uniform(0.05, 1.0, n_y))[:, None]
        dh = path_distance(x, ys, p, n_seg)
        sy = scale_s(ys, p)
        worst = max(worst, float(np.max(np.abs(sy - sx) / dh)))
    return worst


def ordering_probe(p):
    """(s at a pole, s in the bounded region, s at r~ = r_lam)."""
    pole = p.poles[0, :3] + np.array([p.lam / (4.0 * p.T_flat), 0.0, 0.0])
    angles = np.linspace(0.0, TWO_PI, 16, endpoint=False)
    cand = np.column_stack([np.cos(angles), np.sin(angles),
                            np.full(16, 1.0)])
    mid = cand[int(np.argmax(pole_distance(cand, p)))]
    far = mid * np.array([p.r_lam, p.r_lam, 1.0])
    s = scale_s(np.vstack([pole, mid, far]), p)
    return float(s[0]), float(s[1]), float(s[2])


# --- the weight and weighted norms --------------------------------------------

REGIONS = ("S_b", "regular")


def weight_rho(pts, p, region="S_b"):
    """Global weight: s on the collapsed region (eased to 1 across the
    outer seam band), 1 on the regular region."""
    if region == "I1":
        raise UnsupportedRegionError("I1 regions are out of scope for the "
                                     "weight function")
    if region not in REGIONS:
        raise UnsupportedRegionError(f"unknown region tag {region!r}")
    a = _pts3(pts)
    if region == "regular":
        return np.ones(a.shape[0])
    s = scale_s(a, p)
    w = _band(r_tilde(a), p.r_lam, 2.0 * p.r_lam)
    return (1.0 - w) * s + w


def weighted_c0_norm(fld, mu, samples, p, region="S_b"):
    """max over the samples of rho^{-mu} |fld|; fld is a callable on points
    or an array of pointwise magnitudes."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0:
        raise ValueError("weighted_c0_norm needs a nonempty sample set")
    vals = fld(samples) if callable(fld) else fld
    vals = np.abs(np.asarray(vals, dtype=float))
    if vals.shape[0] != samples.shape[0]:
        raise ValueError("field values do not match the sample set")
    rho = weight_rho(samples, p, region)
    return float(np.max(rho ** (-mu) * vals))


def weighted_class_bound(gp, mu):
    """(lam^2 + lam~ t^3) lam~^{1-mu} t^{-mu-1} V^{(-mu-1)/2} + lam^2 lam~^2:
    the weighted damage-zone error class for a gluing configuration."""
    lt, v = gp.lam_tilde, gp.V_sigma_inv()
    return ((gp.lam ** 2 + lt * gp.t ** 3) * lt ** (1.0 - mu)
            * gp.t ** (-mu - 1.0) * v ** ((-mu - 1.0) / 2.0)
            + gp.lam ** 2 * lt ** 2)


# --- profiles -----------------------------------------------------------------

PROFILE_FIELDS = ("r_tilde", "s", "d", "LT", "rho")


def scale_profile(p, n=160, angle=0.3, z=1.0, r_min=None, r_max=None):
    """Sampled profile of all scales along a probe ray, as CSV-ready rows."""
    if r_min is None:
        r_min = 0.5 * p.lam * p.R0
    if r_max is None:
        r_max = 4.0 * p.r_lam
    r = np.geomspace(r_min, r_max, n)
    pts = np.column_stack([r * math.cos(angle), r * math.sin(angle),
                           np.full(n, float(z))])
    s = scale_s(pts, p)
    d = scale_d(pts, p)
    lt = scale_LT(pts, p)
    rho = weight_rho(pts, p, "S_b")
    return [{"r_tilde": float(r[i]), "s": float(s[i]), "d": float(d[i]),
             "LT": float(lt[i]), "rho": float(rho[i])} for i in range(n)]


def profile_to_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=PROFILE_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: format(row[k], ".12g")
                             for k in PROFILE_FIELDS})
