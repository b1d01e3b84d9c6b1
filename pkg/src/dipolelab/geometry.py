"""Coordinates, frames, region classification and parametric region charts.

All maps in this package are axisymmetric about the x3 axis.  Points are
handled as arrays with a trailing axis of length 3; the azimuthal angle of a
point on the axis is taken to be 0.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import OutOfDomain

ORIGIN = np.array([0.0, 0.0, 0.0])
POLE = np.array([0.0, 0.0, 1.0])
BALL_RADIUS = 3.0

LIMIT_REGIONS = ("a", "b", "d", "e", "f")
RECOVERY_REGIONS = ("c_eps", "a_prime_eps", "e_prime_eps", "a_eps", "e_eps", "b_eps", "d_eps", "f_eps")
ALL_REGIONS = LIMIT_REGIONS + RECOVERY_REGIONS


@dataclass(frozen=True)
class CartesianPoint:
    x1: float
    x2: float
    x3: float

    def as_array(self):
        return np.array([self.x1, self.x2, self.x3], dtype=float)


@dataclass(frozen=True)
class CylindricalPoint:
    r: float
    theta: float
    x3: float


@dataclass(frozen=True)
class SphericalPoint:
    rho: float
    theta: float
    phi: float
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)


def _as_points(p):
    if isinstance(p, CartesianPoint):
        return p.as_array()
    return np.asarray(p, dtype=float)


def cart_to_cyl(p):
    """(x1, x2, x3) -> (r, theta, x3) with theta in [0, 2pi)."""
    p = _as_points(p)
    r = np.hypot(p[..., 0], p[..., 1])
    theta = np.mod(np.arctan2(p[..., 1], p[..., 0]), 2 * np.pi)
    theta = np.where(r == 0, 0.0, theta)
    return np.stack([r, theta, p[..., 2]], axis=-1)


def cyl_to_cart(c):
    c = np.asarray(c, dtype=float)
    r, th, x3 = c[..., 0], c[..., 1], c[..., 2]
    return np.stack([r * np.cos(th), r * np.sin(th), x3], axis=-1)


def cart_to_sph(p, center=ORIGIN):
    """(x1, x2, x3) -> (rho, theta, phi) about ``center``; phi is the zenith angle."""
    q = _as_points(p) - np.asarray(center, dtype=float)
    r = np.hypot(q[..., 0], q[..., 1])
    rho = np.hypot(r, q[..., 2])
    theta = np.mod(np.arctan2(q[..., 1], q[..., 0]), 2 * np.pi)
    theta = np.where(r == 0, 0.0, theta)
    phi = np.arctan2(r, q[..., 2])
    return np.stack([rho, theta, phi], axis=-1)


def sph_to_cart(s, center=ORIGIN):
    s = np.asarray(s, dtype=float)
    rho, th, phi = s[..., 0], s[..., 1], s[..., 2]
    out = np.stack([rho * np.sin(phi) * np.cos(th), rho * np.sin(phi) * np.sin(th), rho * np.cos(phi)], axis=-1)
    return out + np.asarray(center, dtype=float)


def cyl_frame(theta):
    """Columns e_r, e_theta, e_3."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    z, o = np.zeros_like(theta), np.ones_like(theta)
    cols = [np.stack([c, s, z], -1), np.stack([-s, c, z], -1), np.stack([z, z, o], -1)]
    return np.stack(cols, axis=-1)


def sph_frame(theta, phi):
    """Columns e_rho, e_phi, e_theta (right-handed in this order)."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    ct, st, cp, sp = np.cos(theta), np.sin(theta), np.cos(phi), np.sin(phi)
    e_rho = np.stack([sp * ct, sp * st, cp], -1)
    e_phi = np.stack([cp * ct, cp * st, -sp], -1)
    e_th = np.stack([-st, ct, np.zeros_like(ct)], -1)
    return np.stack([e_rho, e_phi, e_th], axis=-1)


def _check_ball(r, x3, tol=1e-12):
    if np.any(np.hypot(r, x3) > BALL_RADIUS * (1 + tol)):
        raise OutOfDomain("point outside the reference ball B(0,3)")


def limit_labels_rz(r, x3):
    """Region tags of the limit map on the (r, x3) half plane.

    Closed conditions with precedence a < b < d < e < f.
    """
    r, x3 = np.broadcast_arrays(np.asarray(r, float), np.asarray(x3, float))
    _check_ball(r, x3)
    rho_o = np.hypot(r, x3)
    rho_p = np.hypot(r, x3 - 1.0)
    lab = np.full(r.shape, "f", dtype="<U12")
    lab = np.where((rho_p <= 1) & (x3 >= 1), "e", lab)
    lab = np.where((x3 >= 0) & (x3 <= 1), "d", lab)
    lab = np.where(x3 <= 0, "b", lab)
    lab = np.where((rho_o <= 1) & (x3 <= 0), "a", lab)
    return lab


def recovery_labels_rz(r, x3, eps):
    """Region tags of the recovery map; precedence c, a', e', a, e, b, d, f."""
    r, x3 = np.broadcast_arrays(np.asarray(r, float), np.asarray(x3, float))
    _check_ball(r, x3)
    rho_o = np.hypot(r, x3)
    rho_p = np.hypot(r, x3 - 1.0)
    lab = np.full(r.shape, "f_eps", dtype="<U12")
    lab = np.where((x3 >= 0) & (x3 <= 1), "d_eps", lab)
    lab = np.where(x3 <= 0, "b_eps", lab)
    lab = np.where((rho_p <= 1) & (x3 >= 1), "e_eps", lab)
    lab = np.where((rho_o <= 1) & (x3 <= 0), "a_eps", lab)
    lab = np.where((rho_p <= eps) & (x3 >= 1), "e_prime_eps", lab)
    lab = np.where((rho_o <= eps) & (x3 <= 0), "a_prime_eps", lab)
    lab = np.where((r <= eps) & (x3 >= 0) & (x3 <= 1), "c_eps", lab)
    return lab


def classify_limit(p):
    c = cart_to_cyl(p)
    lab = limit_labels_rz(c[..., 0], c[..., 2])
    return str(lab) if lab.ndim == 0 else lab


def classify_recovery(p, params):
    c = cart_to_cyl(p)
    lab = recovery_labels_rz(c[..., 0], c[..., 2], params.eps)
    return str(lab) if lab.ndim == 0 else lab


@dataclass
class RegionChart:
    """A parametric description of one region of the profile half plane.

    ``rz(q1, q2)`` returns ``(r, x3, drz)`` where ``drz[..., i, j]`` is the
    derivative of (r, x3)[i] with respect to q[j].  The volume weight includes
    the azimuthal factor 2 pi r.  ``grade`` lists the box edges toward which
    quadrature cells are refined geometrically, as pairs (axis, side) with
    side 0 for the lower and 1 for the upper end.  ``jet`` optionally
    evaluates the map profile natively in chart coordinates.
    """

    region: str
    box: Tuple[Tuple[float, float], Tuple[float, float]]
    rz: Callable
    grade: Tuple[Tuple[int, int], ...] = ()
    jet: Optional[Callable] = None
    grade_depth: int = 30
    breaks: Tuple[Tuple[float, ...], Tuple[float, ...]] = field(default_factory=lambda: ((), ()))

    def evaluate(self, q1, q2):
        r, x3, drz = self.rz(q1, q2)
        weight = 2 * np.pi * r * np.abs(drz[..., 0, 0] * drz[..., 1, 1] - drz[..., 0, 1] * drz[..., 1, 0])
        return r, x3, weight

    def cartesian(self, q1, q2, theta=0.0):
        r, x3, _ = self.rz(q1, q2)
        return cyl_to_cart(np.stack(np.broadcast_arrays(r, theta, x3), axis=-1))


def _stack2(a, b, c, d):
    a, b, c, d = np.broadcast_arrays(a, b, c, d)
    return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)


def cylinder_chart(region, r_range, x3_range, grade=((0, 0),), jet=None):
    """Chart (q1, q2) = (r, x3) on a coordinate rectangle."""

    def rz(q1, q2):
        q1, q2 = np.broadcast_arrays(np.asarray(q1, float), np.asarray(q2, float))
        one, zero = np.ones_like(q1), np.zeros_like(q1)
        return q1, q2, _stack2(one, zero, zero, one)

    return RegionChart(region, (tuple(r_range), tuple(x3_range)), rz, tuple(grade), jet)


def spherical_chart(region, center_x3, rho_range, phi_range, grade=((0, 0),), jet=None):
    """Chart (q1, q2) = (rho, phi) about (0, 0, center_x3)."""

    def rz(q1, q2):
        q1, q2 = np.broadcast_arrays(np.asarray(q1, float), np.asarray(q2, float))
        s, c = np.sin(q2), np.cos(q2)
        return q1 * s, center_x3 + q1 * c, _stack2(s, q1 * c, c, -q1 * s)

    return RegionChart(region, (tuple(rho_range), tuple(phi_range)), rz, tuple(grade), jet)


def outer_shell_chart(region, center_x3, rho_min, phi_range, jet=None):
    """Chart (t, phi) with rho running from ``rho_min`` to the sphere |x| = 3."""

    def rho_max(phi):
        c = np.cos(phi)
        # |center + rho e(phi)| = 3 solved for rho
        return -center_x3 * c + np.sqrt((center_x3 * c) ** 2 - center_x3 ** 2 + BALL_RADIUS ** 2)

    def rz(q1, q2):
        q1, q2 = np.broadcast_arrays(np.asarray(q1, float), np.asarray(q2, float))
        s, c = np.sin(q2), np.cos(q2)
        rm = rho_max(q2)
        drm = center_x3 * s + (-(center_x3 ** 2) * c * s) / np.sqrt((center_x3 * c) ** 2 - center_x3 ** 2 + BALL_RADIUS ** 2)
        rho = rho_min + q1 * (rm - rho_min)
        drho_dt = rm - rho_min
        drho_dphi = q1 * drm
        dr = np.stack([s * drho_dt, s * drho_dphi + rho * c], -1)
        dz = np.stack([c * drho_dt, c * drho_dphi - rho * s], -1)
        return rho * s, center_x3 + rho * c, np.stack([dr, dz], -2)

    return RegionChart(region, ((0.0, 1.0), tuple(phi_range)), rz, (), jet)


def strip_chart(region, r_min, x3_range, jet=None):
    """Chart (t, x3) with r running from ``r_min`` to the sphere |x| = 3."""

    def rz(q1, q2):
        q1, q2 = np.broadcast_arrays(np.asarray(q1, float), np.asarray(q2, float))
        rm = np.sqrt(BALL_RADIUS ** 2 - q2 ** 2)
        r = r_min + q1 * (rm - r_min)
        return r, q2, _stack2(rm - r_min, q1 * (-q2 / rm), np.zeros_like(q1), np.ones_like(q1))

    return RegionChart(region, ((0.0, 1.0), tuple(x3_range)), rz, (), jet)
