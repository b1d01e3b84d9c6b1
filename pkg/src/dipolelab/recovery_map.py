"""The bi-Lipschitz recovery maps u_eps converging to the dipole limit map.

The reference ball is cut into the thin cylinder c_eps around the segment
[O, P], two small half balls a'_eps (below O) and e'_eps (above P), the
remaining unit half balls a_eps and e_eps, the lower shell b, the slab d_eps
and the outer region f.  In c_eps, a'_eps and e'_eps the map is exactly
incompressible; the other pieces interpolate to the limit map.

The scalar building blocks (f, g, h, H, omega, r_hat, psi) are exposed as
module functions so that the lemma checks can use them directly.
"""
from dataclasses import dataclass

import numpy as np

from ._solve import bracketed_newton
from .errors import OutOfDomain
from .geometry import (
    BALL_RADIUS,
    RegionChart,
    _stack2,
    cylinder_chart,
    outer_shell_chart,
    recovery_labels_rz,
    spherical_chart,
    strip_chart,
)
from .kernels import ProfileEval, ProfileMap, sph_coords_jacobian, sph_to_cyl_profile
from .limit_map import (
    _fan_polyline,
    LimitMap,
    LimitMapConfig,
    _to_rz,
    fan_breaks,
    fan_g,
    fan_square_point,
    fan_square_sz,
    w_of_sz,
)

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class RecoveryParams:
    eps: float
    gamma: float = 1.0 / 3.0

    def __post_init__(self):
        if not (0 < self.eps <= 0.2):
            raise ValueError(f"eps must lie in (0, 0.2], got {self.eps}")
        if not (0 < self.gamma <= 1.0 / 3.0 + 1e-15):
            raise ValueError(f"gamma must lie in (0, 1/3], got {self.gamma}")
        if self.eps ** (2 - 2 * self.gamma) >= 7 / (9 * np.pi * SQRT2):
            raise ValueError("eps too large for the a'_eps radial bounds")

    @property
    def alpha(self):
        return float(np.arctan(self.eps))

    @property
    def eg(self):
        """eps ** gamma, the scale of the bubble gaps."""
        return self.eps ** self.gamma

    @property
    def eta(self):
        e = self.eps
        return float(((2 * self.eg) ** 3 + 3 * e / f_eps_prime(e, self)) ** (1.0 / 3.0))


# ---------------------------------------------------------------- f and its inverse g


def _check_r(r, p):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r > p.eps * (1 + 1e-12)):
        raise OutOfDomain("f_eps is defined on [0, eps]")
    return r


def f_eps(r, p):
    r = _check_r(r, p)
    e = p.eps
    return np.arctan(r / e ** 2) + p.alpha * r / e


def f_eps_prime(r, p):
    r = _check_r(r, p)
    e = p.eps
    return e ** 2 / (e ** 4 + r ** 2) + p.alpha / e


def f_eps_second(r, p):
    r = _check_r(r, p)
    e = p.eps
    return -2 * e ** 2 * r / (e ** 4 + r ** 2) ** 2


def g_eps(phi, p):
    """Inverse of f_eps on [0, pi/2], solved in t = arctan(r / eps^2)."""
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < -1e-15) or np.any(phi > np.pi / 2 + 1e-12):
        raise OutOfDomain("g_eps is defined on [0, pi/2]")
    phi = np.clip(phi, 0.0, np.pi / 2)
    e, ae = p.eps, p.alpha * p.eps
    t_max = np.arctan(1 / e)

    def fun(t):
        tt = np.tan(t)
        return t + ae * tt - phi, 1 + ae * (1 + tt * tt)

    # relative tolerance keeps g accurate for tiny angles
    tol = 1e-13 * np.minimum(1.0, phi) + 1e-300
    t = bracketed_newton(fun, np.zeros_like(phi), np.full_like(phi, t_max), x0=np.minimum(phi, t_max), tol=tol)
    return np.minimum(e ** 2 * np.tan(t), e)


def g_eps_prime(phi, p, g=None):
    g = g_eps(phi, p) if g is None else g
    return 1.0 / f_eps_prime(g, p)


def g_eps_second(phi, p, g=None):
    g = g_eps(phi, p) if g is None else g
    gp = 1.0 / f_eps_prime(g, p)
    return -f_eps_second(g, p) * gp ** 3


@dataclass
class GBlock:
    """g, g', g'' and the coefficient pieces of h at given angles."""

    phi: np.ndarray
    g: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    A0: np.ndarray
    A0p: np.ndarray
    B0: np.ndarray
    B0p: np.ndarray
    B1: np.ndarray
    B1p: np.ndarray


def g_block(phi, p):
    phi = np.asarray(phi, dtype=float)
    e = p.eps
    g = g_eps(phi, p)
    g1 = g_eps_prime(phi, p, g)
    g2 = g_eps_second(phi, p, g)
    sp, cp = np.sin(phi), np.cos(phi)
    small = sp < 1e-8
    with np.errstate(divide="ignore", invalid="ignore"):
        A0 = np.where(small, g1, g / sp)
        A0p = np.where(small, 0.5 * g2, (g1 * sp - g * cp) / sp ** 2)
    B0 = g1 * cp
    B0p = g2 * cp - g1 * sp
    B1 = e - g * sp
    B1p = -(g1 * sp + g * cp)
    return GBlock(phi, g, g1, g2, A0, A0p, B0, B0p, B1, B1p)


# ---------------------------------------------------------------- h and H


def _lin(gb, p):
    a = p.eps - gb.A0
    b = gb.B1 - gb.B0
    return a, b, -gb.A0p, gb.B1p - gb.B0p


def h_eps(s, phi, p, gb=None):
    """Volume factor of the a'_eps chart: dx = 2 pi sin(phi) h ds dphi."""
    gb = g_block(phi, p) if gb is None else gb
    a, b, _, _ = _lin(gb, p)
    return p.eps * (gb.A0 + s * a) * (gb.B0 + s * b)


def dphi_h_eps(s, phi, p, gb=None):
    gb = g_block(phi, p) if gb is None else gb
    a, b, ap, bp = _lin(gb, p)
    return p.eps * ((gb.A0p + s * ap) * (gb.B0 + s * b) + (gb.A0 + s * a) * (gb.B0p + s * bp))


def _poly_int(p0, p1, q0, q1, s):
    return p0 * q0 * s + (p0 * q1 + p1 * q0) * s ** 2 / 2 + p1 * q1 * s ** 3 / 3


def H_eps(s, phi, p, gb=None):
    """int_0^s h_eps(sigma, phi) dsigma in closed form."""
    gb = g_block(phi, p) if gb is None else gb
    a, b, _, _ = _lin(gb, p)
    return p.eps * _poly_int(gb.A0, a, gb.B0, b, s)


def dphi_H_eps(s, phi, p, gb=None):
    gb = g_block(phi, p) if gb is None else gb
    a, b, ap, bp = _lin(gb, p)
    return p.eps * (_poly_int(gb.A0p, ap, gb.B0, b, s) + _poly_int(gb.A0, a, gb.B0p, bp, s))


def K_eps(gb):
    """3 K is the value of 3r / d_r(-cos f) at r = g(phi), i.e. K = g g' / sin(phi)."""
    return gb.A0 * gb.g1, gb.A0p * gb.g1 + gb.A0 * gb.g2


# ---------------------------------------------------------------- radial profiles in a' and e'


def u_rho_a_prime(s, phi, p, gb=None):
    """u_rho in a'_eps with its (s, phi) partials."""
    gb = g_block(phi, p) if gb is None else gb
    c = np.cos(phi) + 2 * p.eg
    u3 = c ** 3 - 3 * H_eps(s, phi, p, gb)
    u = np.cbrt(u3)
    du_ds = -h_eps(s, phi, p, gb) / u ** 2
    du_dphi = -(c ** 2 * np.sin(phi) + dphi_H_eps(s, phi, p, gb)) / u ** 2
    return u, du_ds, du_dphi


def u_rho_e_prime(s, phi, p, gb=None):
    gb = g_block(phi, p) if gb is None else gb
    c = np.cos(phi) + 2 * p.eg
    K, Kp = K_eps(gb)
    u3 = c ** 3 + 3 * K + 3 * H_eps(s, phi, p, gb)
    u = np.cbrt(u3)
    du_ds = h_eps(s, phi, p, gb) / u ** 2
    du_dphi = (-(c ** 2) * np.sin(phi) + Kp + dphi_H_eps(s, phi, p, gb)) / u ** 2
    return u, du_ds, du_dphi


def cap_chart_rz(s, phi, p, center, sign, gb=None):
    """(r, x3) of the a'/e' parametrization and d(r, x3)/d(s, phi).

    ``sign`` is -1 below O (a'_eps) and +1 above P (e'_eps).
    """
    gb = g_block(phi, p) if gb is None else gb
    e = p.eps
    sp, cp = np.sin(phi), np.cos(phi)
    r = (1 - s) * gb.g + s * e * sp
    x3 = center + sign * s * e * cp
    D = _stack2(e * sp - gb.g, (1 - s) * gb.g1 + s * e * cp, sign * e * cp, -sign * s * e * sp)
    return r, x3, D


def _cap_jet(s, phi, p, center, sign, urho_fn):
    gb = g_block(phi, p)
    r, x3, Dx = cap_chart_rz(s, phi, p, center, sign, gb)
    u, us, uf = urho_fn(s, phi, p, gb)
    sp, cp = np.sin(phi), np.cos(phi)
    v = np.stack([u * sp, u * cp], -1)
    A = _stack2(sp, u * cp, cp, -u * sp)
    Dq = A @ _stack2(us, uf, np.zeros_like(u), np.ones_like(u))
    return v, Dq @ np.linalg.inv(Dx)


def cap_det(s, phi, p, center, sign, urho_fn):
    """det Du in a'/e' from the chart: (v1 / r) det(dv/dq) / det(dx/dq).

    Both 2x2 determinants are formed from their factored expressions, which
    avoids the cancellation in det of the strongly anisotropic Cartesian Du.
    """
    gb = g_block(phi, p)
    e = p.eps
    sp, cp = np.sin(phi), np.cos(phi)
    u, us, _ = urho_fn(s, phi, p, gb)
    r = (1 - s) * gb.g + s * e * sp
    det_q = -u * us
    det_x = -sign * ((e * sp - gb.g) * s * e * sp + e * cp * ((1 - s) * gb.g1 + s * e * cp))
    return u * sp / r * det_q / det_x


def invert_cap(r, x3, p, center):
    """Chart coordinates (s, phi) of points of a'_eps (center 0) or e'_eps (center 1)."""
    r = np.asarray(r, dtype=float)
    d = np.abs(np.asarray(x3, dtype=float) - center)
    e = p.eps
    if np.any(np.hypot(r, d) > e * (1 + 1e-12)):
        raise OutOfDomain("point outside the small half ball")
    dn = np.maximum(d, 1e-300)
    phi_max = np.arccos(np.clip(dn / e, 0.0, 1.0))

    def fun(phi):
        s = dn / (e * np.cos(phi))
        gb_g = g_eps(phi, p)
        g1 = g_eps_prime(phi, p, gb_g)
        sp = np.sin(phi)
        ds = s * np.tan(phi)
        F = (1 - s) * gb_g + s * e * sp - r
        dF = -ds * gb_g + (1 - s) * g1 + ds * e * sp + s * e * np.cos(phi)
        return F, dF

    tol = 1e-15 * e
    phi = bracketed_newton(fun, np.zeros_like(r), phi_max, tol=tol, xtol=1e-15)
    s = np.clip(dn / (e * np.cos(phi)), 0.0, 1.0)
    return s, phi


# ---------------------------------------------------------------- region d building blocks


def r_hat(r, p):
    """Radial stretch of d_eps sending r = eps to 0; returns (r_hat, d r_hat / dr)."""
    r = np.asarray(r, dtype=float)
    e, e2g = p.eps, p.eps ** (2 * p.gamma)
    inner = r <= e2g
    rh = np.where(inner, (r - e) * r / (e2g - e), r)
    d = np.where(inner, (2 * r - e) / (e2g - e), 1.0)
    return rh, d


def r_hat_inv(t, p):
    """Inverse of r_hat on [0, inf); returns (r, dr/dt)."""
    t = np.asarray(t, dtype=float)
    e, e2g = p.eps, p.eps ** (2 * p.gamma)
    inner = t <= e2g
    r_in = (e + np.sqrt(e * e + 4 * np.maximum(t, 0) * (e2g - e))) / 2
    r = np.where(inner, r_in, t)
    d = np.where(inner, (e2g - e) / (2 * r_in - e), 1.0)
    return r, d


def omega_eps(xi, p):
    """Radial offset of d_eps along the contracted polyline, with its derivative.

    The three branches reproduce the values of u_eps on the interfaces with
    a_eps (xi in [0,1]), c_eps ([1,2]) and e_eps ([2,3]).
    """
    xi = np.asarray(xi, dtype=float)
    e, eg = p.eps, p.eg
    eta = p.eta
    lo = xi <= 1
    hi = xi >= 2
    mid = ~(lo | hi)
    om = np.empty_like(xi)
    dom = np.empty_like(xi)
    if lo.any():
        r, dr = r_hat_inv(1 - xi[lo], p)
        om[lo] = eg * (2 - r - e) / (1 - e)
        dom[lo] = eg / (1 - e) * dr
    if mid.any():
        b = 3 * e / f_eps_prime(e, p)
        w = np.cbrt((2 * eg) ** 3 + (xi[mid] - 1) * b)
        om[mid] = w
        dom[mid] = b / (3 * w ** 2)
    if hi.any():
        r, dr = r_hat_inv(xi[hi] - 2, p)
        om[hi] = ((1 - r) * eta + (r - e) * 6 * eg) / (1 - e)
        dom[hi] = (6 * eg - eta) / (1 - e) * dr
    return om, dom


# ---------------------------------------------------------------- region b: psi


_Z0 = np.array([0.5, 0.0])


def _psi_edge(k, sgn, w):
    """Prescribed image of the logical-square boundary and its derivative in w."""
    if k == 0 and sgn < 0:  # m = 0, the circle R = sqrt 2
        a = w * np.pi / 2
        return np.stack([np.sin(a), np.cos(a)], -1), np.stack([np.cos(a), -np.sin(a)], -1) * (np.pi / 2)
    if k == 0:  # m = 1, the circle R = 2 sqrt 2, identity there
        pb = np.pi - w * np.pi / 4
        B = np.stack([2 * SQRT2 * np.sin(pb), 1 + 2 * SQRT2 * np.cos(pb)], -1)
        dB = np.stack([2 * SQRT2 * np.cos(pb), -2 * SQRT2 * np.sin(pb)], -1) * (-np.pi / 4)
        return B, dB
    if sgn > 0:  # tau = 1, the half-line r = 1 + |x3|
        return np.stack([1 + w, -w], -1), np.stack([np.ones_like(w), -np.ones_like(w)], -1)
    # tau = 0, the symmetry axis
    return (np.stack([np.zeros_like(w), 1 - 2 * SQRT2 * w], -1),
            np.stack([np.zeros_like(w), np.full_like(w, -2 * SQRT2)], -1))


def psi_polar(R, pbar):
    """psi at polar coordinates (R, pbar) about (0, 1); returns (y, d y / d(R, pbar)).

    Inside the annular sector sqrt2 <= R <= 2 sqrt2 we use logical coordinates
    m = R/sqrt2 - 1, tau = 4 (pi - pbar) / pi on the unit square.  Each point
    is written as c + t (b - c) with c the square's center and b on its
    boundary, and sent to Z0 + t (B(b) - Z0), where B is the prescribed
    boundary image.  The target is star-shaped about Z0, so this is a
    piecewise smooth orientation-preserving bijection.
    """
    R, pbar = np.broadcast_arrays(np.asarray(R, float), np.asarray(pbar, float))
    if np.any(R < SQRT2 * (1 - 1e-12)) or np.any(pbar < 3 * np.pi / 4 - 1e-12) or np.any(pbar > np.pi + 1e-12):
        raise OutOfDomain("psi is defined for R >= sqrt2 and 3pi/4 <= pbar <= pi")
    y = np.empty(R.shape + (2,))
    D = np.empty(R.shape + (2, 2))
    outer = R >= 2 * SQRT2
    if outer.any():
        Ro, po = R[outer], pbar[outer]
        sp, cp = np.sin(po), np.cos(po)
        y[outer] = np.stack([Ro * sp, 1 + Ro * cp], -1)
        D[outer] = _stack2(sp, Ro * cp, cp, -Ro * sp)
    inner = ~outer
    if inner.any():
        m = R[inner] / SQRT2 - 1
        tau = np.clip((np.pi - pbar[inner]) * 4 / np.pi, 0.0, 1.0)
        v = np.stack([m - 0.5, tau - 0.5], -1)
        k_arr = np.argmax(np.abs(v), axis=-1)
        yi = np.empty(m.shape + (2,))
        Di = np.empty(m.shape + (2, 2))
        for k in (0, 1):
            for sgn in (-1.0, 1.0):
                side = v[:, k] > 0 if sgn > 0 else v[:, k] <= 0
                sel = (k_arr == k) & side
                if not sel.any():
                    continue
                vk = np.abs(v[sel, k])
                vk = np.maximum(vk, 1e-300)
                vj = v[sel, 1 - k]
                t = 2 * vk
                w = 0.5 + vj / (2 * vk)
                B, dB = _psi_edge(k, sgn, w)
                yi[sel] = _Z0 + t[:, None] * (B - _Z0)
                # derivatives w.r.t. (v_k, v_j)
                dt_dvk = 2 * sgn
                dw_dvk = -vj / (2 * vk ** 2) * sgn
                dw_dvj = 1 / (2 * vk)
                col_k = (B - _Z0) * dt_dvk + t[:, None] * dB * dw_dvk[:, None]
                col_j = t[:, None] * dB * dw_dvj[:, None]
                Dv = np.empty(col_k.shape + (2,))
                Dv[..., k] = col_k
                Dv[..., 1 - k] = col_j
                Di[sel] = Dv
        # chain rule to (R, pbar)
        Di = Di * np.array([1 / SQRT2, -4 / np.pi])[None, None, :]
        y[inner] = yi
        D[inner] = Di
    return y, D


def psi(point):
    """psi on its half-plane domain, points given as (..., 2) arrays (r, x3)."""
    q = np.asarray(point, dtype=float)
    R = np.hypot(q[..., 0], q[..., 1] - 1)
    pbar = np.arctan2(q[..., 0], q[..., 1] - 1)
    return psi_polar(R, pbar)[0]


def phi_eps_b(rho, phi, p):
    """The auxiliary map of region b: (phi_r, phi_3) as functions of (rho, phi) about O."""
    rho, phi = np.asarray(rho, float), np.asarray(phi, float)
    L = rho - 1 + SQRT2 * p.eg
    pb = (phi + np.pi) / 2
    return L * np.sin(pb), p.eg + L * np.cos(pb)


# ---------------------------------------------------------------- the map


def _curve_events(curves, lo, hi, samples=2049, iters=80):
    """Points of (lo, hi) where one of the curves mu(x) crosses 0 or 1, has a
    pole, or crosses another curve.  Found by sign changes on a fine grid
    followed by bisection."""
    with np.errstate(invalid="ignore", divide="ignore"):
        return _curve_events_impl(curves, lo, hi, samples, iters)


def _curve_events_impl(curves, lo, hi, samples, iters):
    x = np.linspace(lo, hi, samples)[1:-1]
    vals = [fn(x)[0] for fn in curves]
    gaps = []
    for i, v in enumerate(vals):
        gaps.append((lambda xx, i=i: curves[i](xx)[0], v))
        gaps.append((lambda xx, i=i: curves[i](xx)[0] - 1, v - 1))
        for j in range(i + 1, len(vals)):
            gaps.append((lambda xx, i=i, j=j: curves[i](xx)[0] - curves[j](xx)[0], v - vals[j]))
    events = []
    for g, v in gaps:
        flip = np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]
        if flip.size == 0:
            continue
        a, b = x[flip].copy(), x[flip + 1].copy()
        sa = np.sign(g(a))
        for _ in range(iters):
            m = 0.5 * (a + b)
            same = np.sign(g(m)) == sa
            a = np.where(same, m, a)
            b = np.where(same, b, m)
        events.extend((0.5 * (a + b)).tolist())
    events = sorted(e for e in events if lo + 1e-12 < e < hi - 1e-12)
    merged = []
    for e in events:
        if not merged or e - merged[-1] > 1e-12:
            merged.append(e)
    return merged


class RecoveryMap(ProfileMap):
    """u_eps for given RecoveryParams; all evaluators vectorized."""

    name = "recovery"

    def __init__(self, params, limit_config=LimitMapConfig()):
        self.p = params
        self.limit = LimitMap(limit_config)
        self.config = limit_config

    # -- spherical pieces, partials w.r.t. (rho, phi)
    def _A(self, psi_):
        """u_rho on the a'/a interface as a function of the a' angle, with derivative."""
        u, _, du = u_rho_a_prime(np.ones_like(psi_), psi_, self.p)
        return u, du

    def _E(self, phi):
        u, _, du = u_rho_e_prime(np.ones_like(phi), phi, self.p)
        return u, du

    def sph_a(self, rho, phi):
        e, eg = self.p.eps, self.p.eg
        A, dA = self._A(np.pi - phi)
        ur = (1 - rho) / (1 - e) * A + eg * (rho - e) / (1 - e)
        return (np.stack([ur, np.pi - phi], -1),
                _stack2((eg - A) / (1 - e), -(1 - rho) / (1 - e) * dA, np.zeros_like(rho), -np.ones_like(rho)))

    def sph_e(self, rho, phi):
        e, eg = self.p.eps, self.p.eg
        E, dE = self._E(phi)
        top = 2 * np.cos(phi) + 6 * eg
        ur = (1 - rho) / (1 - e) * E + (rho - e) / (1 - e) * top
        dur_dphi = (1 - rho) / (1 - e) * dE + (rho - e) / (1 - e) * (-2 * np.sin(phi))
        return (np.stack([ur, phi], -1),
                _stack2((top - E) / (1 - e), dur_dphi, np.zeros_like(rho), np.ones_like(rho)))

    def sph_f(self, rho, phi):
        vals, P = self.limit.sph_f(rho, phi)
        vals = vals.copy()
        vals[..., 0] += 6 * self.p.eg
        return vals, P

    def sph_b(self, rho, phi):
        eg = self.p.eg
        R = (rho - 1) / eg + SQRT2
        pb = (phi + np.pi) / 2
        y, D = psi_polar(R, pb)
        return eg * y, D * np.array([1.0, eg / 2])

    # -- cylindrical pieces
    def c_profile(self, r, x3):
        """c_eps: spherical image (u_rho, u_phi) of cylindrical (r, x3), partials w.r.t. (r, x3)."""
        p = self.p
        f = f_eps(r, p)
        f1 = f_eps_prime(r, p)
        f2 = f_eps_second(r, p)
        sf, cf = np.sin(f), np.cos(f)
        q = r / (sf * f1)
        dq = (sf * f1 - r * (cf * f1 ** 2 + sf * f2)) / (sf * f1) ** 2
        base = cf + 2 * p.eg
        u = np.cbrt(base ** 3 + 3 * x3 * q)
        du_dr = (-(base ** 2) * sf * f1 + x3 * dq) / u ** 2
        du_dx3 = q / u ** 2
        vals = np.stack([u, f], -1)
        P = _stack2(du_dr, du_dx3, f1, np.zeros_like(r))
        return vals, P

    def d_profile(self, r, x3):
        rh, drh = r_hat(r, self.p)
        s, z, Jg = fan_g(rh, x3, self.config)
        om, dom = omega_eps(z, self.p)
        w, Dw = w_of_sz(s, z, om, dom)
        J = Dw @ Jg
        J[..., :, 0] *= drh[..., None]
        return w, J

    def profile(self, r, x3):
        r, x3 = np.broadcast_arrays(np.asarray(r, float), np.asarray(x3, float))
        r = r.reshape(-1)
        x3 = x3.reshape(-1)
        p = self.p
        lab = recovery_labels_rz(r, x3, p.eps)
        v = np.zeros((r.size, 2))
        J = np.zeros((r.size, 2, 2))
        det_chart = np.full(r.size, np.nan)
        for tag, center, fn in (("a_eps", 0.0, self.sph_a), ("b_eps", 0.0, self.sph_b),
                                ("e_eps", 1.0, self.sph_e), ("f_eps", 1.0, self.sph_f)):
            m = lab == tag
            if m.any():
                rho = np.hypot(r[m], x3[m] - center)
                phi = np.arctan2(r[m], x3[m] - center)
                vals, P = fn(rho, phi)
                if tag == "b_eps":
                    v[m] = vals
                    J[m] = P @ sph_coords_jacobian(rho, phi)
                else:
                    v[m], J[m] = _to_rz(vals, P, rho, phi)
        m = lab == "c_eps"
        if m.any():
            vals, P = self.c_profile(r[m], x3[m])
            v[m], J[m] = sph_to_cyl_profile(vals, P)
        m = lab == "d_eps"
        if m.any():
            v[m], J[m] = self.d_profile(r[m], x3[m])
        for tag, center, sign, fn in (("a_prime_eps", 0.0, -1, u_rho_a_prime), ("e_prime_eps", 1.0, 1, u_rho_e_prime)):
            m = lab == tag
            if m.any():
                s, phi = invert_cap(r[m], x3[m], p, center)
                v[m], J[m] = _cap_jet(s, phi, p, center, sign, fn)
                det_chart[m] = cap_det(s, phi, p, center, sign, fn)
        return ProfileEval(r, x3, v, J, lab, det_chart)

    # -- charts
    def _cap_chart(self, tag, center, sign, fn):
        p = self.p

        def rz(q1, q2):
            q1, q2 = np.broadcast_arrays(np.asarray(q1, float), np.asarray(q2, float))
            return cap_chart_rz(q1, q2, p, center, sign)

        def jet(q1, q2):
            q1, q2 = np.broadcast_arrays(np.asarray(q1, float), np.asarray(q2, float))
            v, J = _cap_jet(q1, q2, p, center, sign, fn)
            return v, J, cap_det(q1, q2, p, center, sign, fn)

        return RegionChart(tag, ((0.0, 1.0), (0.0, np.pi / 2)), rz, ((0, 0), (1, 0), (1, 1)), jet)

    def _psi_charts(self):
        """Region b near the bubble gap: four triangles of the logical square."""
        p = self.p
        out = []
        for k, sgn in ((0, -1.0), (0, 1.0), (1, -1.0), (1, 1.0)):
            def rz(q1, q2, k=k, sgn=sgn):
                u, w = np.broadcast_arrays(np.asarray(q1, float), np.asarray(q2, float))
                e_k = 0.5 + 0.5 * sgn
                pt = [None, None]
                pt[k] = 0.5 + u * (e_k - 0.5)
                pt[1 - k] = 0.5 + u * (w - 0.5)
                d_du = [None, None]
                d_dw = [None, None]
                d_du[k] = np.full_like(u, e_k - 0.5)
                d_dw[k] = np.zeros_like(u)
                d_du[1 - k] = w - 0.5
                d_dw[1 - k] = u
                m, tau = pt
                rho = 1 + p.eg * SQRT2 * m
                phi = np.pi - tau * np.pi / 2
                # d(rho, phi)/d(m, tau) is diagonal
                dr_m, dp_t = p.eg * SQRT2, -np.pi / 2
                sp, cp = np.sin(phi), np.cos(phi)
                drz_drp = _stack2(sp, rho * cp, cp, -rho * sp)
                drp_duw = _stack2(dr_m * d_du[0], dr_m * d_dw[0], dp_t * d_du[1], dp_t * d_dw[1])
                return rho * sp, rho * cp, drz_drp @ drp_duw
            out.append(RegionChart("b_eps", ((0.0, 1.0), (0.0, 1.0)), rz, (), None))
        return out

    def _d_kink_curves(self):
        """Curves mu(x) in fan coordinates along which u_eps has derivative kinks.

        They are the circle r_hat = eps^(2 gamma), where r_hat^-1 changes
        branch, and the level sets of z at the branch points of omega.
        Each returns (mu, dmu/dx).
        """
        center = self.config.fan_center
        c = self.p.eps ** (2 * self.p.gamma)

        def r_hat_level(x):
            Qr, dQr, _, _ = _fan_polyline(x, center)
            return (c - Qr) / (1 - Qr), (c - 1) * dQr / (1 - Qr) ** 2

        def z_level(zeta):
            def fn(x):
                _, _, t, dt = _fan_polyline(x, center)
                den = 3 * x - t
                with np.errstate(divide="ignore", invalid="ignore"):
                    return (zeta - t) / den, (-dt * den - (zeta - t) * (3 - dt)) / den ** 2
            return fn

        curves = [("r_hat", r_hat_level)]
        for zeta, tag in ((1 - c, "z_lo"), (1.0, "z1"), (2.0, "z2"), (2 + c, "z_hi")):
            curves.append((tag, z_level(zeta)))
        return curves

    def _d_fan_charts(self, x_range):
        """One fan chart of d_eps cut into pieces on which u_eps is smooth.

        On each x interval between events (a kink curve entering or leaving
        the square, or two curves crossing) the active curves keep their
        order; each piece between consecutive curves gets the chart
        (x, lam) with mu running affinely in lam between them.
        """
        center, kappa, p = self.config.fan_center, self.config.kappa, self.p
        curves = self._d_kink_curves()
        lo, hi = x_range
        events = _curve_events([fn for _, fn in curves], lo, hi)
        zero = ("mu0", lambda x: (np.zeros_like(x), np.zeros_like(x)))
        one = ("mu1", lambda x: (np.ones_like(x), np.zeros_like(x)))
        xs = [lo] + events + [hi]
        out = []
        for x0, x1 in zip(xs[:-1], xs[1:]):
            xm = np.array([0.5 * (x0 + x1)])
            active = []
            for name, fn in curves:
                m = float(fn(xm)[0][0])
                if np.isfinite(m) and 0 < m < 1:
                    active.append((m, name, fn))
            bounds = [zero] + [(n, f) for _, n, f in sorted(active, key=lambda t: t[0])] + [one]
            for (n_lo, f_lo), (n_hi, f_hi) in zip(bounds[:-1], bounds[1:]):
                grade = []
                # r_hat -> 0 on mu = 0 where the fan meets the segment B'C'
                if n_lo in ("mu0", "z1", "z2"):
                    grade.append((1, 0))
                if n_hi in ("z1", "z2"):
                    grade.append((1, 1))
                out.append(self._d_piece_chart((x0, x1), f_lo, f_hi, tuple(grade)))
        return out

    def _d_piece_chart(self, x_range, f_lo, f_hi, grade):
        center, kappa, p = self.config.fan_center, self.config.kappa, self.p

        def mu_of(x, lam):
            m0, d0 = f_lo(x)
            m1, d1 = f_hi(x)
            return m0 + lam * (m1 - m0), d0 + lam * (d1 - d0), m1 - m0

        def rz(q1, q2):
            x, lam = np.broadcast_arrays(np.asarray(q1, float), np.asarray(q2, float))
            mu, mu_x, mu_lam = mu_of(x, lam)
            rh, x3, D = fan_square_point(x, mu, center)
            r, dr = r_hat_inv(rh, p)
            col_x = D[..., :, 0] + D[..., :, 1] * mu_x[..., None]
            col_l = D[..., :, 1] * mu_lam[..., None]
            Dq = np.stack([col_x, col_l], -1)
            Dq[..., 0, :] *= dr[..., None]
            return r, x3, Dq

        def jet(q1, q2):
            x, lam = np.broadcast_arrays(np.asarray(q1, float), np.asarray(q2, float))
            mu = mu_of(x, lam)[0]
            rh, x3, Dx = fan_square_point(x, mu, center)
            r, dr = r_hat_inv(rh, p)
            s, z, Ds = fan_square_sz(x, mu, center, kappa)
            om, dom = omega_eps(z, p)
            w, Dw = w_of_sz(s, z, om, dom)
            Dx = Dx.copy()
            Dx[..., 0, :] *= dr[..., None]
            return w, Dw @ Ds @ np.linalg.inv(Dx)

        return RegionChart("d_eps", (tuple(x_range), (0.0, 1.0)), rz, grade, jet)

    def _d_strip_charts(self):
        """The strip r >= 1 of d_eps, cut at the heights where omega changes branch."""
        c = self.p.eps ** (2 * self.p.gamma)
        cuts = [0.0, (1 - c) / 3, 1 / 3, 2 / 3, (2 + c) / 3, 1.0]
        # omega varies on the scale eps^(2-2 gamma) just below z = 1 and just above z = 2
        grades = [((0, 0), (1, 0)), ((1, 1),), (), ((1, 0),), ((0, 0), (1, 1))]
        out = []
        for (a, b), g in zip(zip(cuts[:-1], cuts[1:]), grades):
            ch = strip_chart("d_eps", 1.0, (a, b))
            ch.grade = g
            out.append(ch)
        return out

    def charts(self):
        p = self.p
        e = p.eps
        out = [cylinder_chart("c_eps", (0.0, e), (0.0, 1.0), grade=((0, 0), (0, 1)))]
        out[0].jet = lambda q1, q2: sph_to_cyl_profile(*self.c_profile(*np.broadcast_arrays(q1, q2)))
        out.append(self._cap_chart("a_prime_eps", 0.0, -1, u_rho_a_prime))
        out.append(self._cap_chart("e_prime_eps", 1.0, 1, u_rho_e_prime))
        out.append(spherical_chart("a_eps", 0.0, (e, 1.0), (np.pi / 2, np.pi), grade=((0, 0), (0, 1), (1, 0))))
        out.append(spherical_chart("e_eps", 1.0, (e, 1.0), (0.0, np.pi / 2), grade=((0, 0), (1, 1))))
        out.extend(self._psi_charts())
        ch = outer_shell_chart("b_eps", 0.0, 1 + SQRT2 * p.eg, (np.pi / 2, np.pi))
        ch.grade = ((0, 0),)
        out.append(ch)
        x1, x2 = fan_breaks(self.config.fan_center)
        for xr in ((0.0, x1), (x1, x2), (x2, 1.0)):
            out.extend(self._d_fan_charts(xr))
        out.extend(self._d_strip_charts())
        ch = outer_shell_chart("f_eps", 1.0, 1.0, (0.0, np.pi / 2))
        ch.grade = ((0, 0), (1, 1))
        out.append(ch)
        return out


# ---------------------------------------------------------------- incompressibility


INCOMPRESSIBLE_REGIONS = ("c_eps", "a_prime_eps", "e_prime_eps")


@dataclass
class IncompressibilityRow:
    region: str
    n_points: int
    max_analytic: float
    max_fd: float
    fd_points: int
    fd_step: float


def incompressible_samples(params, region, n=10 ** 4, seed=0):
    """Scrambled Sobol points filling c_eps or one of the small half balls."""
    from scipy.stats import qmc

    e = params.eps
    q = qmc.Sobol(3, scramble=True, seed=seed).random_base2(int(np.ceil(np.log2(n))))[:n]
    th = 2 * np.pi * q[:, 2]
    if region == "c_eps":
        # sqrt keeps the points uniform in volume
        r, x3 = e * np.sqrt(q[:, 0]), q[:, 1]
    else:
        rho, cphi = e * np.cbrt(q[:, 0]), q[:, 1]
        center, sign = (0.0, -1.0) if region == "a_prime_eps" else (1.0, 1.0)
        r, x3 = rho * np.sqrt(1 - cphi ** 2), center + sign * rho * cphi
    return np.stack([r * np.cos(th), r * np.sin(th), x3], -1)


def incompressibility_check(params, n=10 ** 4, seed=0, fd_step=1e-5, regions=INCOMPRESSIBLE_REGIONS):
    """max |det Du_eps - 1| per region, analytic and by finite differences.

    The FD route uses the five-point stencil with one Richardson step; Du is
    strongly anisotropic in the caps, so the lower-order stencil loses too
    many digits to cancellation inside the determinant.  Stencils that cross
    a region interface are dropped.
    """
    from .kernels import determinant, fd_jacobian, stencil_inside

    M = RecoveryMap(params)
    rows = []
    for reg in regions:
        P = incompressible_samples(params, reg, n, seed)
        P = P[M.labels(P) == reg]
        c = np.hypot(P[:, 0], P[:, 1])
        det = M.profile(c, P[:, 2]).det
        ok = stencil_inside(M.labels, P, 2 * fd_step)
        D = fd_jacobian(M.value, P[ok], h=fd_step, order=4, richardson=True)
        rows.append(IncompressibilityRow(reg, len(P), float(np.max(np.abs(det - 1))),
                                         float(np.max(np.abs(determinant(D) - 1))), int(ok.sum()), fd_step))
    return rows
