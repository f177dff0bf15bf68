"""Green's functions on the flat cylinder R^2 x S^1 (circle of length 2 pi),
their flux functions, and the balanced multi-monopole neck potential.

Normalization: -Lap G = 2 pi delta_p, and G - (1/2 pi) log(1/rho) -> 0 as
the plane distance rho -> infinity.  Two evaluators are implemented:

* a Fourier-Bessel series, exact in this normalization:
      G = (1/2 pi) log(1/rho) + (1/pi) sum_{k>=1} K0(k rho) cos(k dz)
* a renormalized image-charge sum over the deck group,
      G = (1/2) sum_n [ 1/r_n - (1 - delta_n0)/(2 pi |n|) ] + C
  whose additive constant C = -(log(4 pi) - gamma)/(2 pi) is forced by the
  decay normalization (matching the k = 0 Fourier mode).

The image sum is used for rho < 2 and the Bessel series for rho >= 2; their
agreement on the overlap is an oracle test.  Image-sum tails are accelerated
with Hurwitz-zeta corrections so both branches reach ~1e-13.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as _g, k0, k1, zeta

from .constants import BISECT_TOL, SERIES_TOL, TWO_PI
from .numerics import bisect

EULER_GAMMA = 0.57721566490153286060651209
C_IMAGE = -(math.log(4.0 * math.pi) - EULER_GAMMA) / TWO_PI
RHO_SPLIT = 2.0
N_IMAGES = 64


def _reduce_z(z):
    """Reduce a fiber offset to [-pi, pi)."""
    return np.mod(np.asarray(z, dtype=float) + math.pi, TWO_PI) - math.pi


def _bessel_terms(rho):
    # K0(k rho) ~ e^{-k rho}; keep terms until below SERIES_TOL
    kmax = int(np.ceil(34.0 / max(float(np.min(rho)), 1e-9))) + 8
    return np.arange(1, kmax + 1)


def _green_bessel(rho, z):
    ks = _bessel_terms(rho)
    kr = np.multiply.outer(rho, ks)
    kz = np.multiply.outer(z, ks)
    series = np.sum(k0(kr) * np.cos(kz), axis=-1)
    return -np.log(rho) / TWO_PI + series / math.pi


def _green_images(rho, z, n_img=N_IMAGES):
    z = _reduce_z(z)
    ns = np.arange(-n_img, n_img + 1)
    w = TWO_PI * ns
    r = np.sqrt(rho[..., None] ** 2 + (z[..., None] - w) ** 2)
    safe_ns = np.where(ns == 0, 1, np.abs(ns))
    renorm = np.where(ns == 0, 0.0, 1.0 / (TWO_PI * safe_ns))
    total = 0.5 * np.sum(1.0 / r - renorm, axis=-1)
    # paired tail sum_{n>N} (s+ + s- - 2u), u = 1/(2 pi n):
    #   (2 z^2 - rho^2) u^3 + (3a^2/4 - 15 z^2 a/2 + 35 z^4/4) u^5 + O(u^7)
    a = z**2 + rho**2
    z3 = zeta(3, n_img + 1) / TWO_PI**3
    z5 = zeta(5, n_img + 1) / TWO_PI**5
    tail = (2 * z**2 - rho**2) * z3 + \
        (0.75 * a**2 - 7.5 * z**2 * a + 8.75 * z**4) * z5
    return total + 0.5 * tail + C_IMAGE


def green_periodic(rho, z):
    """G(rho, dz) for a pole at the origin; vectorized."""
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    rho, z = np.broadcast_arrays(rho, z)
    out = np.empty(rho.shape)
    far = rho >= RHO_SPLIT
    if np.any(far):
        out[far] = _green_bessel(rho[far], z[far])
    if np.any(~far):
        out[~far] = _green_images(rho[~far], _reduce_z(z[~far]))
    return out


def _grad_bessel(rho, z):
    ks = _bessel_terms(rho)
    kr = np.multiply.outer(rho, ks)
    kz = np.multiply.outer(z, ks)
    g_rho = -1.0 / (TWO_PI * rho) - np.sum(ks * k1(kr) * np.cos(kz), axis=-1) / math.pi
    g_z = -np.sum(ks * k0(kr) * np.sin(kz), axis=-1) / math.pi
    return g_rho, g_z


def _grad_images(rho, z, n_img=N_IMAGES):
    z = _reduce_z(z)
    ns = np.arange(-n_img, n_img + 1)
    w = TWO_PI * ns
    dz = z[..., None] - w
    r3 = (rho[..., None] ** 2 + dz**2) ** 1.5
    g_rho = -0.5 * rho * np.sum(1.0 / r3, axis=-1)
    g_z = -0.5 * np.sum(dz / r3, axis=-1)
    # leading zeta tails of the paired sums
    z3 = zeta(3, n_img + 1) / TWO_PI**3
    g_rho += -rho * z3
    g_z += 2.0 * z * z3
    return g_rho, g_z


def green_grad_polar(rho, z):
    """(dG/drho, dG/dz), same dispatch as green_periodic."""
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    rho, z = np.broadcast_arrays(rho, z)
    g_rho = np.empty(rho.shape)
    g_z = np.empty(rho.shape)
    far = rho >= RHO_SPLIT
    if np.any(far):
        g_rho[far], g_z[far] = _grad_bessel(rho[far], z[far])
    if np.any(~far):
        g_rho[~far], g_z[~far] = _grad_images(rho[~far], z[~far])
    return g_rho, g_z


def _flux_bessel(rho, z):
    ks = _bessel_terms(rho)
    kr = np.multiply.outer(rho, ks)
    kz = np.multiply.outer(z, ks)
    return z / TWO_PI + rho * np.sum(k1(kr) * np.sin(kz), axis=-1) / math.pi


def _flux_images(rho, z, n_img=N_IMAGES):
    ns = np.arange(-n_img, n_img + 1)
    w = TWO_PI * ns
    dz = z[..., None] - w
    r = np.sqrt(rho[..., None] ** 2 + dz**2)
    renorm = np.sign(ns)  # +1 for n>0, -1 for n<0, 0 for n=0
    total = 0.5 * np.sum(dz / r + renorm, axis=-1)
    # paired tail: 2 z rho^2 u^3 + O(u^5)
    total += z * rho**2 * zeta(3, n_img + 1) / TWO_PI**3
    return total


def flux_function(rho, z):
    """psi with psi_z = -rho G_rho, psi_rho = rho G_z and psi(rho, 0) = 0.

    eta = psi d(phi) is a local potential for *dG on the cut chart; psi
    jumps by 1 across the fiber period (Dirac string).  z is taken reduced
    to [-pi, pi).
    """
    rho = np.asarray(rho, dtype=float)
    z = _reduce_z(z)
    rho, z = np.broadcast_arrays(rho, z)
    out = np.empty(rho.shape)
    far = rho >= RHO_SPLIT
    if np.any(far):
        out[far] = _flux_bessel(rho[far], z[far])
    if np.any(~far):
        out[~far] = _flux_images(rho[~far], z[~far])
    return out


class PoleProximityError(ValueError):
    pass


def green_single(p, x):
    """G for a pole at base point p = (px, py, pz); x is (N, 3)."""
    p = np.asarray(p, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rho = np.hypot(x[:, 0] - p[0], x[:, 1] - p[1])
    dz = x[:, 2] - p[2]
    dist = np.hypot(rho, _reduce_z(dz))
    if np.any(dist < 1e-8):
        raise PoleProximityError("evaluation point within 1e-8 of the pole")
    return green_periodic(rho, dz)


def green_single_grad(p, x):
    """Gradient of green_single with respect to x -> (N, 3)."""
    p = np.asarray(p, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    dx, dy = x[:, 0] - p[0], x[:, 1] - p[1]
    rho = np.hypot(dx, dy)
    g_rho, g_z = green_grad_polar(rho, x[:, 2] - p[2])
    with np.errstate(invalid="ignore", divide="ignore"):
        cx = np.where(rho > 0, dx / rho, 0.0)
        cy = np.where(rho > 0, dy / rho, 0.0)
    return np.column_stack([g_rho * cx, g_rho * cy, g_z])


# --- balanced neck potential -------------------------------------------------

def poly_eval(coeffs, w):
    """Evaluate sum_j coeffs[j] w^j for complex coeffs and arguments."""
    out = np.zeros_like(np.asarray(w, dtype=complex))
    for c in reversed(list(coeffs)):
        out = out * w + c
    return out


def poly_deriv(coeffs):
    return [j * c for j, c in enumerate(coeffs)][1:] or [0.0]


@dataclass
class NeckPotentialParams:
    """Parameters of the balanced neck potential.

    nu, b: the two end degrees; poles: (2 nu + 2 b, 3) array of rescaled
    base positions (last coordinate 0); h_coeffs: ascending complex
    coefficients of the entire function h.  strict=False skips the pole
    count check (single-pole superposition tests).
    """
    nu: int
    b: int
    kappa0: float
    lam: float
    poles: np.ndarray
    h_coeffs: tuple = (0.0,)
    strict: bool = True

    def __post_init__(self):
        self.poles = np.atleast_2d(np.asarray(self.poles, dtype=float))
        if self.strict:
            if not 1 <= self.nu <= 4:
                raise ValueError("nu must lie in 1..4")
            if not 1 <= self.b <= 14:
                raise ValueError("b must lie in 1..14")
            if self.poles.shape != (2 * self.nu + 2 * self.b, 3):
                raise ValueError("need 2 nu + 2 b poles")
        if not (0 < self.lam < 1):
            raise ValueError("lam must lie in (0, 1)")

    @property
    def n_poles(self):
        return 2 * self.nu + 2 * self.b

    @property
    def T(self):
        return (self.nu / math.pi) * math.log(1.0 / self.lam)

    @property
    def lam_tilde(self):
        return self.lam ** (self.nu / self.b)

    @property
    def T_flat(self):
        return (2 * self.nu + 1) / TWO_PI * math.log(1.0 / self.lam)

    def h(self, w):
        return poly_eval(self.h_coeffs, w)

    def h_prime(self, w):
        return poly_eval(poly_deriv(self.h_coeffs), w)

    @property
    def pole_distances(self):
        return np.hypot(self.poles[:, 0], self.poles[:, 1])


def balancing_residual(params):
    """sum_m log(1/d_m) + 2 pi Im h(0) - 2 pi kappa0 (zero when balanced)."""
    h0 = complex(params.h(0.0))
    return float(np.sum(np.log(1.0 / params.pole_distances))
                 + TWO_PI * h0.imag - TWO_PI * params.kappa0)


def balanced_pole_set(nu, b, kappa0, h_coeffs=(0.0,), angle0=0.39269908169872414,
                      radii_ratio=1.0):
    """Equally spaced balanced pole set, paired antipodally.

    2(nu + b) points at theta2 = 0 on one or two circles (the two-circle
    variant, radii_ratio != 1, keeps the antipodal pairing but breaks the
    higher symmetry; it is used to expose the generic quadrupole decay).
    Returns (poles, radii) with poles[m] and poles[n-1-m] antipodal.
    The common log-radius solves the balancing condition by bisection.
    """
    n = 2 * (nu + b)
    k = n // 2
    h0 = complex(poly_eval(h_coeffs, 0.0))
    target = TWO_PI * kappa0 - TWO_PI * h0.imag
    # radii pattern: alternate rho0 * ratio^(+-1/2) over the first half
    pattern = np.array([radii_ratio ** (0.5 if j % 2 == 0 else -0.5)
                        for j in range(k)])
    pattern = np.concatenate([pattern, pattern[::-1]])  # partner has same radius

    def residual(log_rho0):
        return float(np.sum(-(log_rho0 + np.log(pattern)))) - target

    lo, hi = math.log(1e-6), math.log(1e3)
    log_rho0 = bisect(residual, lo, hi, tol=BISECT_TOL)
    rho0 = math.exp(log_rho0)
    angles = np.empty(n)
    for m in range(k):
        angles[m] = angle0 + TWO_PI * m / n
        angles[n - 1 - m] = angles[m] + math.pi
    radii = rho0 * pattern
    poles = np.column_stack([radii * np.cos(angles), radii * np.sin(angles),
                             np.zeros(n)])
    return poles, radii


def choose_monopole_points(nu, b, kappa0, lam=0.1, h_coeffs=(0.0,),
                           angle0=0.39269908169872414, radii_ratio=1.0):
    """Balanced, antipodally paired pole layout packaged as parameters."""
    poles, _ = balanced_pole_set(nu, b, kappa0, h_coeffs, angle0, radii_ratio)
    return NeckPotentialParams(nu, b, kappa0, lam, poles, tuple(h_coeffs))


def _unrescale(params, xt):
    """Tilde base points -> unrescaled base points and per-pole offsets."""
    xt = np.atleast_2d(np.asarray(xt, dtype=float))
    x = xt.copy()
    x[:, 0] /= params.lam
    x[:, 1] /= params.lam
    return x


def green_zero(params, xt):
    """G_0 = sum_m G_m at tilde base points (x~, y~, t2)."""
    xt = np.atleast_2d(np.asarray(xt, dtype=float))
    x = _unrescale(params, xt)
    out = np.zeros(xt.shape[0])
    for p in params.poles:
        out += green_single([p[0] / params.lam, p[1] / params.lam, p[2]], x)
    return out


def green_zero_grad_tilde(params, xt):
    """Gradient of G_0 with respect to the tilde coordinates -> (N, 3)."""
    xt = np.atleast_2d(np.asarray(xt, dtype=float))
    x = _unrescale(params, xt)
    out = np.zeros((xt.shape[0], 3))
    for p in params.poles:
        g = green_single_grad([p[0] / params.lam, p[1] / params.lam, p[2]], x)
        out += g
    out[:, 0] /= params.lam
    out[:, 1] /= params.lam
    return out


def green_neck(params, xt):
    """The balanced neck potential at tilde base points."""
    xt = np.atleast_2d(np.asarray(xt, dtype=float))
    rt = np.hypot(xt[:, 0], xt[:, 1])
    zt = params.lam_tilde * (xt[:, 0] + 1j * xt[:, 1])
    lead = ((2 * params.nu + params.b) / math.pi) * math.log(1.0 / params.lam)
    return (lead + (params.nu / math.pi) * np.log(rt) + green_zero(params, xt)
            + params.h(zt).imag)


def green_neck_grad_tilde(params, xt):
    xt = np.atleast_2d(np.asarray(xt, dtype=float))
    rt2 = xt[:, 0] ** 2 + xt[:, 1] ** 2
    out = green_zero_grad_tilde(params, xt)
    out[:, 0] += (params.nu / math.pi) * xt[:, 0] / rt2
    out[:, 1] += (params.nu / math.pi) * xt[:, 1] / rt2
    hp = params.h_prime(params.lam_tilde * (xt[:, 0] + 1j * xt[:, 1]))
    out[:, 0] += (params.lam_tilde * hp).imag
    out[:, 1] += (params.lam_tilde * hp).real
    return out


def semiflat_value(params, xt):
    """T - (b/pi) log r~ + Im h(lam~ zeta~): the semi-flat potential."""
    xt = np.atleast_2d(np.asarray(xt, dtype=float))
    rt = np.hypot(xt[:, 0], xt[:, 1])
    zt = params.lam_tilde * (xt[:, 0] + 1j * xt[:, 1])
    return params.T - (params.b / math.pi) * np.log(rt) + params.h(zt).imag


def rescaled_model_value(params, xt):
    """T + kappa0 + (nu/pi) log r~: the rescaled multi-log model potential."""
    xt = np.atleast_2d(np.asarray(xt, dtype=float))
    rt = np.hypot(xt[:, 0], xt[:, 1])
    return params.T + params.kappa0 + (params.nu / math.pi) * np.log(rt)


REGIMES = ("origin", "infinity", "pole", "bounded")


def regime_prediction(params, xt, regime, pole_index=None):
    """Leading model for G_lambda in the given regime."""
    xt = np.atleast_2d(np.asarray(xt, dtype=float))
    if regime == "origin":
        return rescaled_model_value(params, xt)
    if regime == "infinity":
        return semiflat_value(params, xt)
    if regime == "bounded":
        return np.full(xt.shape[0], params.T)
    if regime == "pole":
        p = params.poles[pole_index]
        x = _unrescale(params, xt)
        gm = green_single([p[0] / params.lam, p[1] / params.lam, p[2]], x)
        dm = math.hypot(p[0], p[1])
        return gm + params.T_flat + (params.nu / math.pi) * math.log(dm)
    raise ValueError(f"unknown regime {regime!r}")


def classify_regime(params, xt, origin_fraction=0.1, infinity_factor=10.0):
    """Assign each tilde base point to an asymptotic regime."""
    xt = np.atleast_2d(np.asarray(xt, dtype=float))
    rt = np.hypot(xt[:, 0], xt[:, 1])
    d = params.pole_distances
    sep = np.inf
    for i in range(params.n_poles):
        sep = min(sep, d[i])
        for j in range(i + 1, params.n_poles):
            sep = min(sep, float(np.linalg.norm(params.poles[i, :2]
                                                - params.poles[j, :2])))
    pole_dist = np.full(xt.shape[0], np.inf)
    pole_idx = np.zeros(xt.shape[0], dtype=int)
    for i, p in enumerate(params.poles):
        dist = np.hypot(xt[:, 0] - p[0], xt[:, 1] - p[1])
        closer = dist < pole_dist
        pole_dist[closer] = dist[closer]
        pole_idx[closer] = i
    out = []
    for i in range(xt.shape[0]):
        if pole_dist[i] <= sep / 4.0:
            out.append(("pole", int(pole_idx[i])))
        elif rt[i] <= origin_fraction * d.min():
            out.append(("origin", None))
        elif rt[i] >= infinity_factor * d.max():
            out.append(("infinity", None))
        else:
            out.append(("bounded", None))
    return out


def asymptotic_regime_report(params, xt):
    """Observed vs predicted neck potential per point, as JSON-ready dicts."""
    xt = np.atleast_2d(np.asarray(xt, dtype=float))
    obs = green_neck(params, xt)
    rt = np.hypot(xt[:, 0], xt[:, 1])
    rows = []
    for i, (regime, pidx) in enumerate(classify_regime(params, xt)):
        pred = regime_prediction(params, xt[i:i + 1], regime, pidx)[0]
        if regime == "origin":
            bound_class, bound = "lam_tilde*rt", params.lam_tilde * rt[i]
        elif regime == "infinity":
            bound_class, bound = "lam^2/rt^2", params.lam**2 / rt[i] ** 2
        else:
            bound_class, bound = "const", 1.0
        rows.append({
            "regime": regime,
            "pole_index": pidx,
            "lambda": params.lam,
            "point": [float(v) for v in xt[i]],
            "observed": float(obs[i]),
            "predicted": float(pred),
            "deviation": float(obs[i] - pred),
            "bound_class": bound_class,
            "bound_value": float(bound),
        })
    return rows
