"""The singular dipole limit map on B(0,3).

The map is axisymmetric.  It is described on the half plane theta = 0 by its
profile (v1, v2) = (u_r, u_3) as a function of (r, x3).  Five regions:

* a: lower unit half ball, everted onto the bubble sphere;
* b: lower shell 1 < |x| < 3, opened up to fill the cone below the bubble;
* d: slab 0 < x3 < 1, through the bi-Lipschitz fan map g of the unit square;
* e: upper unit half ball about P = (0, 0, 1), onto the outer wall of the bubble;
* f: the rest, where the construction is free and we pick a simple extension.

The bubble is the sphere of radius 1/2 centered at (0, 0, 1/2).
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import OutOfDomain
from .geometry import (
    RegionChart,
    cart_to_cyl,
    limit_labels_rz,
    outer_shell_chart,
    spherical_chart,
    strip_chart,
)
from .kernels import ProfileEval, ProfileMap, sph_coords_jacobian, sph_to_cyl_profile

BUBBLE_CENTER = np.array([0.0, 0.0, 0.5])
BUBBLE_RADIUS = 0.5


def zenith_of_z(z):
    """Target zenith angle along the fan parameter z in [0, 3]."""
    return np.pi / 4 * (1 + z / 3)


ZENITH_SLOPE = np.pi / 12


@dataclass(frozen=True)
class LimitMapConfig:
    region_f_slope: float = 1.0
    fan_center: Tuple[float, float] = (2.0, 0.5)
    kappa: float = 0.5

    def __post_init__(self):
        a, b = self.fan_center
        if not (a > 1 and 0 < b < 1):
            raise ValueError("fan_center must satisfy r > 1 and 0 < x3 < 1")
        if self.kappa <= 0 or self.region_f_slope <= 0:
            raise ValueError("kappa and region_f_slope must be positive")


# ---------------------------------------------------------------- fan map


def _fan_polyline(x, center):
    """Where the ray from the fan center through (1, x) meets the polyline A'B'C'D'.

    Returns (Q_r, dQ_r/dx, t, dt/dx) with t in [0, 3] the arclength-type
    parameter of A'(1,0) -> B'(0,0) -> C'(0,1) -> D'(1,1).
    """
    a, b = center
    lam0 = a / (a - 1)
    y0 = b + lam0 * (x - b)
    Qr = np.zeros_like(x)
    dQr = np.zeros_like(x)
    t = 1 + y0
    dt = np.full_like(x, lam0)
    bottom = y0 < 0
    top = y0 > 1
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_b = b / (b - x)
        dlam_b = b / (b - x) ** 2
        lam_t = (1 - b) / (x - b)
        dlam_t = -(1 - b) / (x - b) ** 2
    Qr = np.where(bottom, a - lam_b * (a - 1), Qr)
    dQr = np.where(bottom, -(a - 1) * dlam_b, dQr)
    t = np.where(bottom, 1 - (a - lam_b * (a - 1)), t)
    dt = np.where(bottom, (a - 1) * dlam_b, dt)
    Qr = np.where(top, a - lam_t * (a - 1), Qr)
    dQr = np.where(top, -(a - 1) * dlam_t, dQr)
    t = np.where(top, 2 + a - lam_t * (a - 1), t)
    dt = np.where(top, -(a - 1) * dlam_t, dt)
    return Qr, dQr, t, dt


def fan_breaks(center):
    """Heights x on the edge r=1 whose rays pass through the corners B' and C'."""
    a, b = center
    lam0 = a / (a - 1)
    return (b - b / lam0, b + (1 - b) / lam0)


def _sz_from_xmu(x, mu, center, kappa):
    Qr, dQr, t, dt = _fan_polyline(x, center)
    s = mu * kappa * np.sin(np.pi * x)
    z = (1 - mu) * t + 3 * mu * x
    s_x = mu * kappa * np.pi * np.cos(np.pi * x)
    s_mu = kappa * np.sin(np.pi * x)
    z_x = (1 - mu) * dt + 3 * mu
    z_mu = 3 * x - t
    return s, z, (s_x, s_mu, z_x, z_mu), (Qr, dQr, t, dt)


def fan_g(rh, x3, config=LimitMapConfig()):
    """The fixed bi-Lipschitz map g: (r_hat, x3) -> (s, z) and its 2x2 Jacobian.

    On the strip r_hat >= 1 it is s = (r_hat - 1)(1 + (beta - 1) x3) + kappa sin(pi x3),
    z = 3 x3, with beta the slope of region f (so s(r_hat, 1) matches u_rho(r_hat, pi/2)).
    On the unit square it blends, along rays from the fan center, between the
    polyline A'B'C'D' (sent affinely onto s = 0, z in [0, 3]) and the edge
    r_hat = 1.
    """
    rh, x3 = np.broadcast_arrays(np.asarray(rh, float), np.asarray(x3, float))
    if np.any(rh < 0) or np.any(x3 < -1e-12) or np.any(x3 > 1 + 1e-12):
        raise OutOfDomain("fan map is defined for r_hat >= 0 and 0 <= x3 <= 1")
    a, b = config.fan_center
    kappa = config.kappa
    s = np.empty(rh.shape)
    z = np.empty(rh.shape)
    Jg = np.empty(rh.shape + (2, 2))
    strip = rh >= 1
    if strip.any():
        r_s, x_s = rh[strip], x3[strip]
        beta = config.region_f_slope
        s[strip] = (r_s - 1) * (1 + (beta - 1) * x_s) + kappa * np.sin(np.pi * x_s)
        z[strip] = 3 * x_s
        Jg[strip] = np.stack(
            [np.stack([1 + (beta - 1) * x_s, (r_s - 1) * (beta - 1) + kappa * np.pi * np.cos(np.pi * x_s)], -1),
             np.stack([np.zeros_like(r_s), np.full_like(r_s, 3.0)], -1)], -2)
    sq = ~strip
    if sq.any():
        r_q, x_q = rh[sq], x3[sq]
        x = b + (x_q - b) * (a - 1) / (a - r_q)
        x_r = (x_q - b) * (a - 1) / (a - r_q) ** 2
        x_x3 = (a - 1) / (a - r_q)
        Qr, dQr, t, dt = _fan_polyline(x, (a, b))
        mu = (r_q - Qr) / (1 - Qr)
        mu_r = 1 / (1 - Qr)
        mu_x = dQr * (r_q - 1) / (1 - Qr) ** 2
        s_q = mu * kappa * np.sin(np.pi * x)
        z_q = (1 - mu) * t + 3 * mu * x
        s_mu = kappa * np.sin(np.pi * x)
        s_x = mu * kappa * np.pi * np.cos(np.pi * x)
        z_mu = 3 * x - t
        z_x = (1 - mu) * dt + 3 * mu
        ds_dr = s_mu * (mu_r + mu_x * x_r) + s_x * x_r
        ds_dx3 = (s_mu * mu_x + s_x) * x_x3
        dz_dr = z_mu * (mu_r + mu_x * x_r) + z_x * x_r
        dz_dx3 = (z_mu * mu_x + z_x) * x_x3
        s[sq], z[sq] = s_q, z_q
        Jg[sq] = np.stack([np.stack([ds_dr, ds_dx3], -1), np.stack([dz_dr, dz_dx3], -1)], -2)
    return s, z, Jg


def region_d_g(rh, x3, config=LimitMapConfig()):
    return fan_g(rh, x3, config)


def fan_square_point(x, mu, center):
    """Inverse description of the unit square: fan coordinates (x, mu) -> (r_hat, x3).

    Also returns d(r_hat, x3)/d(x, mu).
    """
    a, b = center
    Qr, dQr, t, dt = _fan_polyline(x, center)
    rh = Qr + mu * (1 - Qr)
    rh_x = dQr * (1 - mu)
    rh_mu = 1 - Qr
    x3 = b + (x - b) * (a - rh) / (a - 1)
    x3_x = (a - rh) / (a - 1) - (x - b) * rh_x / (a - 1)
    x3_mu = -(x - b) * rh_mu / (a - 1)
    D = np.stack([np.stack([rh_x, rh_mu], -1), np.stack([x3_x, x3_mu], -1)], -2)
    return rh, x3, D


def fan_square_sz(x, mu, center, kappa):
    """(s, z) and d(s, z)/d(x, mu) in fan coordinates."""
    s, z, (s_x, s_mu, z_x, z_mu), _ = _sz_from_xmu(x, mu, center, kappa)
    D = np.stack([np.stack([s_x, s_mu], -1), np.stack([z_x, z_mu], -1)], -2)
    return s, z, D


def w_of_sz(s, z, omega=0.0, domega=0.0):
    """Deformed profile w = (omega(z) + s sin phi(z), -s cos phi(z)) with d w / d(s, z)."""
    ph = zenith_of_z(z)
    sp, cp = np.sin(ph), np.cos(ph)
    w = np.stack([omega + s * sp, -s * cp], -1)
    D = np.stack([np.stack([sp, domega + s * cp * ZENITH_SLOPE], -1),
                  np.stack([-cp, s * sp * ZENITH_SLOPE], -1)], -2)
    return w, D


# ---------------------------------------------------------------- spherical pieces


def _sph_jet(ur, dur_drho, dur_dphi, uf, duf_drho, duf_dphi):
    vals = np.stack([ur, uf], -1)
    P = np.stack([np.stack([dur_drho, dur_dphi], -1), np.stack([duf_drho, duf_dphi], -1)], -2)
    return vals, P


def _to_rz(vals, P_sph, rho, phi):
    """Spherical profile with (rho, phi) partials -> (v, J wrt (r, x3))."""
    v, Jsp = sph_to_cyl_profile(vals, P_sph)
    return v, Jsp @ sph_coords_jacobian(rho, phi)


class LimitMap(ProfileMap):
    """Evaluator for the limit map; all methods are vectorized."""

    name = "limit"

    def __init__(self, config=LimitMapConfig()):
        self.config = config

    # spherical profiles, partials w.r.t. (rho, phi)
    @staticmethod
    def sph_a(rho, phi):
        uf = np.pi - phi
        c, s = np.cos(uf), np.sin(uf)
        return _sph_jet((1 - rho) * c, -c, (1 - rho) * s, uf, np.zeros_like(rho), -np.ones_like(rho))

    @staticmethod
    def sph_b(rho, phi):
        return _sph_jet(rho - 1, np.ones_like(rho), np.zeros_like(rho), (phi + np.pi) / 2,
                        np.zeros_like(rho), np.full_like(rho, 0.5))

    @staticmethod
    def sph_e(rho, phi):
        c, s = np.cos(phi), np.sin(phi)
        return _sph_jet((1 + rho) * c, c, -(1 + rho) * s, phi, np.zeros_like(rho), np.ones_like(rho))

    def sph_f(self, rho, phi):
        beta = self.config.region_f_slope
        return _sph_jet(2 * np.cos(phi) + beta * (rho - 1), np.full_like(rho, beta), -2 * np.sin(phi), phi,
                        np.zeros_like(rho), np.ones_like(rho))

    def _d_profile(self, r, x3):
        s, z, Jg = fan_g(r, x3, self.config)
        w, Dw = w_of_sz(s, z)
        return w, Dw @ Jg

    def profile(self, r, x3):
        r, x3 = np.broadcast_arrays(np.asarray(r, float), np.asarray(x3, float))
        r = r.reshape(-1)
        x3 = x3.reshape(-1)
        lab = limit_labels_rz(r, x3)
        v = np.zeros((r.size, 2))
        J = np.zeros((r.size, 2, 2))
        for tag, center, fn in (("a", 0.0, self.sph_a), ("b", 0.0, self.sph_b),
                                ("e", 1.0, self.sph_e), ("f", 1.0, self.sph_f)):
            m = lab == tag
            if m.any():
                rho = np.hypot(r[m], x3[m] - center)
                phi = np.arctan2(r[m], x3[m] - center)
                vals, P = fn(rho, phi)
                v[m], J[m] = _to_rz(vals, P, rho, phi)
        m = lab == "d"
        if m.any():
            v[m], J[m] = self._d_profile(r[m], x3[m])
        return ProfileEval(r, x3, v, J, lab)

    def det(self, p):
        """Closed-form Jacobian determinants where available, else det of the jet."""
        c = cart_to_cyl(p)
        r, x3 = c[..., 0].reshape(-1), c[..., 2].reshape(-1)
        pe = self.profile(r, x3)
        out = pe.det.copy()
        lab = pe.region
        rho_o, phi_o = np.hypot(r, x3), np.arctan2(r, x3)
        rho_p, phi_p = np.hypot(r, x3 - 1), np.arctan2(r, x3 - 1)
        m = lab == "a"
        out[m] = (1 - rho_o[m]) ** 2 * np.cos(np.pi - phi_o[m]) ** 3 / rho_o[m] ** 2
        m = lab == "b"
        out[m] = (rho_o[m] - 1) ** 2 / (4 * rho_o[m] ** 2 * np.sin(phi_o[m] / 2))
        m = lab == "e"
        out[m] = (1 + rho_p[m]) ** 2 * np.cos(phi_p[m]) ** 3 / rho_p[m] ** 2
        m = lab == "f"
        beta = self.config.region_f_slope
        ur = 2 * np.cos(phi_p[m]) + beta * (rho_p[m] - 1)
        out[m] = beta * ur ** 2 / rho_p[m] ** 2
        m = lab == "d"
        if m.any():
            s, z, Jg = fan_g(r[m], x3[m], self.config)
            minor = Jg[:, 0, 0] * Jg[:, 1, 1] - Jg[:, 0, 1] * Jg[:, 1, 0]
            out[m] = ZENITH_SLOPE * s ** 2 * np.sin(zenith_of_z(z)) / r[m] * minor
        return out.reshape(np.shape(p)[:-1])

    # ------------------------------------------------------------ charts
    def _sph_chart_jet(self, fn, center):
        def jet(q1, q2):
            vals, P = fn(q1, q2)
            return _to_rz(vals, P, q1, q2)
        return jet

    def _shell_jet(self, chart, fn, center):
        def jet(q1, q2):
            r, x3, _ = chart.rz(q1, q2)
            rho = np.hypot(r, x3 - center)
            phi = np.arctan2(r, x3 - center)
            vals, P = fn(rho, phi)
            return _to_rz(vals, P, rho, phi)
        return jet

    def _fan_chart(self, x_range):
        center, kappa = self.config.fan_center, self.config.kappa

        def rz(q1, q2):
            q1, q2 = np.broadcast_arrays(np.asarray(q1, float), np.asarray(q2, float))
            rh, x3, D = fan_square_point(q1, q2, center)
            return rh, x3, D

        def jet(q1, q2):
            rh, x3, Dx = fan_square_point(q1, q2, center)
            s, z, Ds = fan_square_sz(q1, q2, center, kappa)
            w, Dw = w_of_sz(s, z)
            return w, Dw @ Ds @ np.linalg.inv(Dx)

        return RegionChart("d", (tuple(x_range), (0.0, 1.0)), rz, ((1, 0),), jet)

    def charts(self):
        out = []
        # grading also toward the edges where det Du vanishes, so that H(det) is resolved
        ch = spherical_chart("a", 0.0, (0.0, 1.0), (np.pi / 2, np.pi), grade=((0, 0), (0, 1), (1, 0)))
        ch.jet = self._sph_chart_jet(self.sph_a, 0.0)
        out.append(ch)
        ch = outer_shell_chart("b", 0.0, 1.0, (np.pi / 2, np.pi))
        ch.grade = ((0, 0),)
        ch.jet = self._shell_jet(ch, self.sph_b, 0.0)
        out.append(ch)
        x1, x2 = fan_breaks(self.config.fan_center)
        for xr in ((0.0, x1), (x1, x2), (x2, 1.0)):
            out.append(self._fan_chart(xr))
        ch = strip_chart("d", 1.0, (0.0, 1.0))
        ch.grade = ((0, 0), (1, 0), (1, 1))
        ch.jet = lambda q1, q2, _c=ch: self._d_profile(*_c.rz(q1, q2)[:2])
        out.append(ch)
        ch = spherical_chart("e", 1.0, (0.0, 1.0), (0.0, np.pi / 2), grade=((0, 0), (1, 1)))
        ch.jet = self._sph_chart_jet(self.sph_e, 1.0)
        out.append(ch)
        ch = outer_shell_chart("f", 1.0, 1.0, (0.0, np.pi / 2))
        ch.grade = ((0, 0), (1, 1))
        ch.jet = self._shell_jet(ch, self.sph_f, 1.0)
        out.append(ch)
        return out


def distance_to_bubble(y):
    y = np.asarray(y, dtype=float)
    return np.abs(np.linalg.norm(y - BUBBLE_CENTER, axis=-1) - BUBBLE_RADIUS)
