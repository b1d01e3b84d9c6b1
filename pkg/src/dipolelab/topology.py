"""Degree, generalized cavities and the distributional pairings of a map.

All maps here are axisymmetric, so a ball centered on the symmetry axis is
described by its meridian half disk and a target point by (s, z) with s >= 0.
The degree of a ball at y is the winding number, around (s, z), of the image
of the boundary meridian.  The image curve starts and ends on the axis; it is
closed along the axis (not by reflection), which gives the 3D degree even
when u_r changes sign.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import MembershipAmbiguous, ProbeTooClose
from .geometry import BALL_RADIUS, ORIGIN, POLE
from .kernels import cofactor, dirichlet_density
from .limit_map import BUBBLE_CENTER, BUBBLE_RADIUS, LimitMap
from .quadrature import QuadResult, QuadSpec, integrate_1d, integrate_region, integrate_sphere, revolve_arc_area

# radii certified to meet the region interfaces of both maps transversally
VALIDATED_RADII = (0.05, 0.1, 0.2, 0.3, 0.4)

# orientation of the bubble normal that makes the pairing oracle agree with the
# domain integral; fixed by calibrate_bubble_sign() on one field and frozen
BUBBLE_NORMAL_SIGN = -1.0

_AXIS_PHI = 1e-9


@dataclass(frozen=True)
class Ball:
    """B((0, 0, center), radius)."""

    center: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def meridian(self, rho, phi):
        """(r, x3) of the point at distance rho and zenith angle phi from the center."""
        return rho * np.sin(phi), self.center + rho * np.cos(phi)


def ball_at(point, radius):
    p = np.asarray(point, dtype=float)
    if abs(p[0]) > 0 or abs(p[1]) > 0:
        raise ValueError("balls must be centered on the symmetry axis")
    return Ball(float(p[2]), float(radius))


# ---------------------------------------------------------------- polylines


def _chunk(n_other, budget=4_000_000):
    return max(1, budget // max(n_other, 1))


def winding_numbers(poly, pts, budget=4_000_000):
    """Winding number of the closed polyline ``poly`` (first point == last) around each point.

    Crossing-count form: upward crossings with the point on the left count
    +1, downward crossings with the point on the right count -1.  Probes are
    sorted by height so each segment only meets the probes in its y-span.
    """
    poly = np.asarray(poly, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    a, b = poly[:-1], poly[1:]
    order = np.argsort(pts[:, 1], kind="stable")
    ys = pts[order, 1]
    up = a[:, 1] <= b[:, 1]
    # upward segments own a_y <= y < b_y, downward ones b_y <= y < a_y
    lo = np.searchsorted(ys, np.where(up, a[:, 1], b[:, 1]), "left")
    hi = np.searchsorted(ys, np.where(up, b[:, 1], a[:, 1]), "left")
    counts = hi - lo
    out = np.zeros(len(pts), dtype=np.int64)
    ends = np.cumsum(counts)
    start = 0
    while start < len(a):
        stop = int(np.searchsorted(ends, ends[start] - counts[start] + budget, "right"))
        stop = max(stop, start + 1)
        seg = np.arange(start, stop)
        c = counts[seg]
        k = np.repeat(seg, c)
        first = np.repeat(np.cumsum(c) - c, c)
        j = order[np.repeat(lo[seg], c) + np.arange(c.sum()) - first]
        px, py = pts[j, 0], pts[j, 1]
        ax, ay = a[k, 0], a[k, 1]
        ex, ey = b[k, 0] - ax, b[k, 1] - ay
        cross = ex * (py - ay) - (px - ax) * ey
        w = np.where(up[k], cross > 0, -(cross < 0).astype(np.int64))
        np.add.at(out, j, w.astype(np.int64))
        start = stop
    return out


def _segment_distance(p, a, d, dd):
    t = np.clip(np.sum((p - a) * d, -1) / dd, 0.0, 1.0)
    return np.sqrt(np.sum((p - a - t[..., None] * d) ** 2, -1))


def polyline_distance(poly, pts, relative=False, k=16):
    """Distance from each point to the polyline; with ``relative``, the least
    distance to a segment minus that segment's length.

    Candidate segments come from a k-d tree on segment midpoints; a point
    whose candidate set cannot be certified complete falls back to all segments.
    """
    poly = np.asarray(poly, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    a, b = poly[:-1], poly[1:]
    d = b - a
    dd = np.maximum(np.sum(d * d, 1), 1e-300)
    length = np.sqrt(dd)
    k = min(k, len(a))
    tree = cKDTree(0.5 * (a + b))
    dm, idx = tree.query(pts, k=k)
    dm, idx = dm.reshape(len(pts), k), idx.reshape(len(pts), k)
    dist = _segment_distance(pts[:, None, :], a[idx], d[idx], dd[idx])
    if relative:
        dist = dist - length[idx]
    out = dist.min(1)
    # a segment beating out has its midpoint within out + slack of the point
    slack = (1.5 if relative else 0.5) * length.max() * (1 + 1e-9)
    redo = np.flatnonzero(dm[:, -1] <= out + slack) if k < len(a) else np.zeros(0, int)
    if redo.size:
        near = tree.query_ball_point(pts[redo], out[redo] + slack)
        c = np.array([len(n) for n in near])
        seg = np.concatenate([np.asarray(n, dtype=np.int64) for n in near])
        j = np.repeat(redo, c)
        full = _segment_distance(pts[j], a[seg], d[seg], dd[seg])
        if relative:
            full = full - length[seg]
        np.minimum.at(out, j, full)
    return out


@dataclass
class ProfileCurve:
    """Image (u_r, u_3) of the boundary meridian of a ball, phi from 0 (top) to pi.

    ``resolution`` is the longest image segment left after refinement; a
    probe closer than that to the curve has no certified degree.
    """

    phi: np.ndarray
    points: np.ndarray
    resolution: float

    def closed(self):
        p = self.points
        return np.vstack([p, [[0.0, p[-1, 1]], [0.0, p[0, 1]]], p[:1]])

    def distance(self, probes):
        return polyline_distance(self.points, probes)

    def degree(self, probes, margin=1.0):
        """(degree, valid) at probes (s, z); probes within margin * resolution are invalid."""
        probes = np.atleast_2d(np.asarray(probes, dtype=float)).copy()
        probes[:, 0] = np.abs(probes[:, 0])
        dist = self.distance(probes)
        valid = dist > margin * self.resolution
        # probes on the axis are moved off it by half their distance to the curve
        on_axis = probes[:, 0] < 0.5 * dist
        probes[on_axis, 0] = 0.5 * dist[on_axis]
        deg = -winding_numbers(self.closed(), probes)
        return deg, valid


def _meridian_image(map_, ball, rho, phi):
    r, x3 = ball.meridian(rho, phi)
    return map_.profile(r, x3).v


def profile_curve(map_, ball, h=2e-3, max_points=400_000, max_passes=60):
    """Adaptively sampled image of the boundary meridian of ``ball``."""
    g = np.geomspace(_AXIS_PHI, 0.05, 60)
    phi = np.unique(np.concatenate([g, np.linspace(0.05, np.pi - 0.05, 801), np.pi - g]))
    pts = _meridian_image(map_, ball, ball.radius, phi)
    for _ in range(max_passes):
        seg = np.hypot(*np.diff(pts, axis=0).T)
        bad = np.flatnonzero((seg > h) & (np.diff(phi) > 1e-14))
        if bad.size == 0 or len(phi) + bad.size > max_points:
            break
        mid = 0.5 * (phi[bad] + phi[bad + 1])
        new = _meridian_image(map_, ball, ball.radius, mid)
        phi = np.insert(phi, bad + 1, mid)
        pts = np.insert(pts, bad + 1, new, axis=0)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    return ProfileCurve(phi, pts, float(max(seg.max(), 1e-12)))


def winding_degree(map_, ball, y, curve=None):
    """Degree of ``map_`` on ``ball`` at target points y, given as (s, z) or (x, y, z).

    Raises ProbeTooClose if a probe is within the curve resolution of the
    boundary image.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if y.shape[1] == 3:
        y = np.stack([np.hypot(y[:, 0], y[:, 1]), y[:, 2]], -1)
    curve = profile_curve(map_, ball) if curve is None else curve
    deg, valid = curve.degree(y)
    if not np.all(valid):
        raise ProbeTooClose(f"{np.count_nonzero(~valid)} probe(s) within {curve.resolution:.2e} of the boundary image")
    return deg


# ---------------------------------------------------------------- preimage count


def _polar_mesh(ball, n_rho, n_phi, core):
    r = ball.radius
    rho = r * np.unique(np.concatenate([np.geomspace(core, 0.02, n_rho // 3), np.linspace(0.02, 1.0, n_rho - n_rho // 3)]))
    g = np.geomspace(_AXIS_PHI, 0.3, n_phi // 4)
    phi = np.unique(np.concatenate([g, np.linspace(0.3, np.pi - 0.3, n_phi), np.pi - g]))
    R, F = np.meshgrid(rho, phi, indexing="ij")
    return R, F


def _triangles(nr, nf):
    idx = np.arange(nr * nf).reshape(nr, nf)
    a, b, c, d = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel(), idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    return np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])


def _signed_hits(tri_xy, sign, pts):
    """Sum of ``sign`` over triangles strictly containing each point."""
    A, B, C = tri_xy[:, 0], tri_xy[:, 1], tri_xy[:, 2]
    out = np.zeros(len(pts))
    step = _chunk(len(A), 8_000_000)
    for i in range(0, len(pts), step):
        p = pts[i:i + step, None, :]

        def orient(P, Q):
            return (Q[:, 0] - P[:, 0]) * (p[..., 1] - P[:, 1]) - (p[..., 0] - P[:, 0]) * (Q[:, 1] - P[:, 1])

        o1, o2, o3 = orient(A, B), orient(B, C), orient(C, A)
        inside = ((o1 > 0) & (o2 > 0) & (o3 > 0)) | ((o1 < 0) & (o2 < 0) & (o3 < 0))
        out[i:i + step] = inside @ sign
    return out


def preimage_degree(map_, ball, probes, n_rho=240, n_phi=240, core=1e-9):
    """Degree as a signed count of preimages, independent of the boundary curve.

    The half disk minus a core of radius core * r about the center is
    triangulated and mapped forward.  A target (s, z) has 3D preimages where
    the profile takes the value (s, z) (theta = 0) or (-s, z) (theta = pi); each
    image triangle counts with the sign of the 3D Jacobian.  A center that
    opens a cavity is accounted for by the degree of the core ball, i.e. the
    winding of the blow-up curve of the center.  Returns (degree, valid).
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    R, F = _polar_mesh(ball, n_rho, n_phi, core)
    r, x3 = ball.meridian(R.ravel(), F.ravel())
    v = map_.profile(r, x3).v
    tri = _triangles(*R.shape)
    ref = np.stack([r, x3], -1)[tri]
    img = v[tri]

    def area(T):
        return (T[:, 1, 0] - T[:, 0, 0]) * (T[:, 2, 1] - T[:, 0, 1]) - (T[:, 2, 0] - T[:, 0, 0]) * (T[:, 1, 1] - T[:, 0, 1])

    sign = np.sign(area(img)) * np.sign(area(ref))
    s = np.abs(probes[:, 0])
    plus = _signed_hits(img, sign, np.stack([s, probes[:, 1]], -1))
    minus = _signed_hits(img, sign, np.stack([-s, probes[:, 1]], -1))
    # the ring of mesh vertices at rho = core * r is the boundary of the core ball
    core_curve = ProfileCurve(F[0], v.reshape(R.shape + (2,))[0], 0.0)
    core_deg, _ = core_curve.degree(np.stack([s, probes[:, 1]], -1))
    outer = v.reshape(R.shape + (2,))[-1]
    # a probe is certified when it is farther from every boundary segment than that segment is long
    q = np.stack([s, probes[:, 1]], -1)
    valid = (polyline_distance(outer, q, True) > 0) & (polyline_distance(core_curve.points, q, True) > 0)
    return np.rint(plus - minus).astype(np.int64) + core_deg, valid


# ---------------------------------------------------------------- flux form


def degree_flux(map_, ball, g, spec=QuadSpec(atol=1e-9, rtol=1e-7), axisymmetric=True):
    """Boundary integral of (g o u) . (cof Du nu) over the sphere of ``ball``.

    By the divergence theorem this equals the integral of deg * div g.
    ``axisymmetric`` is valid for fields commuting with rotations about the axis.
    """

    def density(x, nrm):
        jet = map_.evaluate(x)
        return np.einsum("ni,nij,nj->n", g(jet.value), cofactor(jet.grad), nrm)

    return integrate_sphere((0.0, 0.0, ball.center), ball.radius, density, spec, axisymmetric)


def sphere_dirichlet(map_, ball, spec=QuadSpec(atol=1e-9, rtol=1e-7)):
    """Integral of |Du|^2 / 2 over the sphere of ``ball``."""

    def density(x, nrm):
        return 0.5 * dirichlet_density(map_.evaluate(x).grad)

    return integrate_sphere((0.0, 0.0, ball.center), ball.radius, density, spec, axisymmetric=True)


# ---------------------------------------------------------------- pairings


@dataclass
class PairingResult:
    test_fn: str
    value: float
    oracle: float
    error_estimate: float = 0.0
    norm: float = 1.0

    @property
    def deviation(self):
        return self.value - self.oracle

    def record(self):
        return {"test_fn": self.test_fn, "value": self.value, "oracle": self.oracle, "deviation": self.deviation}


@dataclass(frozen=True)
class TestFunction:
    """Axisymmetric test function: fn(r, x3) -> (phi, d_r phi, d_x3 phi)."""

    name: str
    fn: Callable
    support: float

    __test__ = False

    def __call__(self, r, x3):
        return self.fn(np.asarray(r, float), np.asarray(x3, float))

    def c1_norm(self, n=401):
        r, x3 = np.meshgrid(np.linspace(0, self.support, n), np.linspace(-self.support, self.support, 2 * n - 1))
        v, dr, dz = self(r, x3)
        return float(np.abs(v).max() + np.hypot(dr, dz).max())


def bump(t, power=4):
    """(1 - t^2)^power on |t| < 1 and its derivative; C^(power - 1)."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1
    base = np.where(inside, 1 - t * t, 0.0)
    return base ** power, np.where(inside, -2 * power * t * base ** (power - 1), 0.0)


def plateau(t, t0, t1):
    """1 on [0, t0], 0 beyond t1, quintic smoothstep in between; returns (value, derivative)."""
    t = np.asarray(t, dtype=float)
    x = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
    val = 1 - x ** 3 * (10 - 15 * x + 6 * x * x)
    der = -30 * x * x * (1 - x) ** 2 / (t1 - t0)
    return val, der


def radial_test_function(name, center_x3, radius, poly=None):
    """poly(r, x3) * bump(|x - c| / radius); ``poly`` returns (p, p_r, p_x3)."""

    def fn(r, x3):
        rho = np.hypot(r, x3 - center_x3)
        b, db = bump(rho / radius)
        with np.errstate(invalid="ignore", divide="ignore"):
            dr = np.where(rho > 0, db / radius * r / rho, 0.0)
            dz = np.where(rho > 0, db / radius * (x3 - center_x3) / rho, 0.0)
        if poly is None:
            return b, dr, dz
        p, pr, pz = poly(r, x3)
        return p * b, pr * b + p * dr, pz * b + p * dz

    return TestFunction(name, fn, abs(center_x3) + radius)


def standard_test_functions():
    """Five test functions with different atom weights phi(P) - phi(O)."""
    one = np.ones_like
    return [
        radial_test_function("bump(|x|/2)", 0.0, 2.0),
        radial_test_function("x3*bump(|x|/2)", 0.0, 2.0, lambda r, z: (z, 0 * z, one(z))),
        radial_test_function("bump(|x-c|/1.5)", 0.5, 1.5),
        radial_test_function("(1+x3^2)*bump(|x-c|/1.8)", 0.5, 1.8, lambda r, z: (1 + z * z, 0 * z, 2 * z)),
        radial_test_function("(r^2-x3)*bump(|x-e|/1.6)", 0.8, 1.6, lambda r, z: (r * r - z, 2 * r, -one(z))),
    ]


def cavity_atoms(map_):
    """Point masses of Det Du: the bubble volume pi/6 created at P and removed at O."""
    if isinstance(map_, LimitMap):
        vol = 4 * np.pi / 3 * BUBBLE_RADIUS ** 3
        return {1.0: vol, 0.0: -vol}
    return {}


def _map_integral(map_, density, spec):
    total = QuadResult(0.0, 0.0, 0)
    for ch in map_.charts():
        total = total + integrate_region(ch, density, spec, map_)
    return total


def _require_support(radius):
    if radius > BALL_RADIUS:
        raise ValueError("test function support must lie in B(0, 3)")


def det_pairing(map_, phi, spec=QuadSpec(atol=1e-9, rtol=1e-7)):
    """<Det Du, phi> = -1/3 int u . (cof Du) D phi against int phi det Du plus atoms."""
    _require_support(phi.support)

    def weak(pe):
        f, fr, fz = phi(pe.r, pe.x3)
        D = np.stack([fr, np.zeros_like(fr), fz], -1)
        u = np.stack([pe.v[:, 0], np.zeros_like(fr), pe.v[:, 1]], -1)
        return -np.einsum("ni,nij,nj->n", u, cofactor(pe.grad()), D) / 3

    def strong(pe):
        return phi(pe.r, pe.x3)[0] * pe.det

    value = _map_integral(map_, weak, spec)
    oracle = _map_integral(map_, strong, spec).value
    for x3, w in cavity_atoms(map_).items():
        oracle += w * float(phi(np.array(0.0), np.array(x3))[0])
    return PairingResult(phi.name, value.value, oracle, value.error_estimate, phi.c1_norm())


@dataclass(frozen=True)
class SurfaceField:
    """f(x, y) = a(x) g(y) with a axisymmetric and g commuting with rotations.

    a(r, x3) -> (a, a_r, a_x3); g(s, z) -> (g_s, g_z, div g).
    """

    name: str
    a: Callable
    g: Callable
    support: float

    def sup_norm(self, n=301):
        r, x3 = np.meshgrid(np.linspace(0, self.support, n), np.linspace(-self.support, self.support, 2 * n - 1))
        s, z = np.meshgrid(np.linspace(0, 3.0, n), np.linspace(-3.0, 3.0, 2 * n - 1))
        gs, gz, _ = self.g(s, z)
        return float(np.abs(self.a(r, x3)[0]).max() * np.hypot(gs, gz).max())


def bubble_flux(g, spec=QuadSpec(atol=1e-12, rtol=1e-10)):
    """Integral of g . nu over the bubble sphere, nu the outward normal."""

    def f(psi):
        sp, cp = np.sin(psi), np.cos(psi)
        gs, gz, _ = g(BUBBLE_RADIUS * sp, BUBBLE_CENTER[2] + BUBBLE_RADIUS * cp)
        return (gs * sp + gz * cp) * 2 * np.pi * BUBBLE_RADIUS ** 2 * sp

    return integrate_1d(f, (0.0, np.pi), spec).value


def surface_pairing(map_, field, spec=QuadSpec(atol=1e-9, rtol=1e-7), sign=None):
    """E_u(f) = int g(u) . (cof Du grad a) + a div g(u) det Du, against the bubble-dipole oracle."""
    _require_support(field.support)
    sign = BUBBLE_NORMAL_SIGN if sign is None else sign

    def density(pe):
        a, ar, az = field.a(pe.r, pe.x3)
        v1, v2 = pe.v[:, 0], pe.v[:, 1]
        gs, gz, div = field.g(np.abs(v1), v2)
        g = np.stack([np.where(v1 < 0, -gs, gs), np.zeros_like(gs), gz], -1)
        grad_a = np.stack([ar, np.zeros_like(ar), az], -1)
        return np.einsum("ni,nij,nj->n", g, cofactor(pe.grad()), grad_a) + a * div * pe.det

    value = _map_integral(map_, density, spec)
    oracle = 0.0
    if isinstance(map_, LimitMap):
        jump = float(field.a(np.array(0.0), np.array(POLE[2]))[0] - field.a(np.array(0.0), np.array(ORIGIN[2]))[0])
        oracle = sign * jump * bubble_flux(field.g)
    return PairingResult(field.name, value.value, oracle, value.error_estimate, field.sup_norm())


def calibrate_bubble_sign(field, spec=QuadSpec(atol=1e-9, rtol=1e-7)):
    """Sign s such that the limit-map pairing of ``field`` equals s * jump * bubble flux."""
    res = surface_pairing(LimitMap(), field, spec, sign=1.0)
    return float(np.sign(res.value * res.oracle))


def bubble_normal_field(width=0.2):
    """g = w(|y - c|) (y - c) / |y - c|, with w = 1 near the bubble and 0 near c."""

    def g(s, z):
        dz = z - BUBBLE_CENTER[2]
        t = np.hypot(s, dz)
        w, dw = plateau(np.abs(t - BUBBLE_RADIUS), 0.5 * width, width)
        dw = dw * np.sign(t - BUBBLE_RADIUS)
        tt = np.maximum(t, 1e-300)
        # div of w(t) e_t in 3D is w' + 2 w / t
        return w * s / tt, w * dz / tt, dw + 2 * w / tt

    return g


def surface_field(name, a_kind="sin", a_scale=1.0, g_width=0.2, a_radius=2.0):
    """Members of the dictionary used for the surface energy supremum."""
    c = BUBBLE_CENTER[2]

    def a(r, x3):
        rho = np.hypot(r, x3 - c)
        b, db = plateau(rho, 0.6, a_radius)
        with np.errstate(invalid="ignore", divide="ignore"):
            ur = np.where(rho > 0, r / rho, 0.0)
            uz = np.where(rho > 0, (x3 - c) / rho, 0.0)
        if a_kind == "sin":
            p = np.sin(np.pi * a_scale * (x3 - c))
            pz = np.pi * a_scale * np.cos(np.pi * a_scale * (x3 - c))
        elif a_kind == "tanh":
            p = np.tanh(a_scale * (x3 - c))
            pz = a_scale / np.cosh(a_scale * (x3 - c)) ** 2
        else:
            p = a_scale * (x3 - c)
            pz = np.full_like(p, a_scale)
        return p * b, p * db * ur, pz * b + p * db * uz

    return SurfaceField(name, a, bubble_normal_field(g_width), c + a_radius)


def surface_dictionary():
    out = []
    for width in (0.1, 0.2, 0.3, 0.4):
        out.append(surface_field(f"sin(pi(x3-c))*g[w={width}]", "sin", 1.0, width))
        out.append(surface_field(f"sin(pi(x3-c)/2)*g[w={width}]", "sin", 0.5, width))
        out.append(surface_field(f"tanh(4(x3-c))*g[w={width}]", "tanh", 4.0, width))
        out.append(surface_field(f"2(x3-c)*g[w={width}]", "lin", 2.0, width))
        out.append(surface_field(f"sin(pi(x3-c))*g[w={width},R=1.5]", "sin", 1.0, width, 1.5))
    return out


def surface_energy_lower_bound(map_, fields=None, spec=QuadSpec(atol=1e-8, rtol=1e-6)):
    """sup |E_u(f)| / ||f||_inf over a dictionary, with the per-field results."""
    fields = surface_dictionary() if fields is None else fields
    results = [surface_pairing(map_, f, spec) for f in fields]
    ratios = [abs(r.value) / r.norm for r in results]
    return float(max(ratios)), results


# ---------------------------------------------------------------- geometric image


class ForwardImage:
    """Stratified forward samples of a ball with positive Jacobian, for imG membership.

    Membership of y: out if no sample lies within ``threshold``; in if a sample
    does and y is farther than ``threshold`` from the image of the boundary
    of the sampled set.  Near that boundary a projected Newton search for a
    preimage decides; if it settles neither way the probe is ambiguous.
    """

    def __init__(self, map_, ball, n_samples=10 ** 6, threshold=0.03, seed=0, core=1e-9, curve=None):
        self.map, self.ball, self.threshold, self.core = map_, ball, threshold, core
        rng = np.random.default_rng(seed)
        n_phi = int(np.sqrt(n_samples))
        n_rho = max(1, n_samples // n_phi)
        i, j = np.meshgrid(np.arange(n_rho), np.arange(n_phi), indexing="ij")
        t = (i.ravel() + rng.random(i.size)) / n_rho
        f = (j.ravel() + rng.random(j.size)) / n_phi
        # graded toward the center, where the images of cavitating centers live
        self.rho = ball.radius * np.maximum(t ** 1.5, core)
        self.phi = np.pi * f
        r, x3 = ball.meridian(self.rho, self.phi)
        pe = map_.profile(r, x3)
        keep = pe.det > 0
        self.rho, self.phi = self.rho[keep], self.phi[keep]
        self.values = pe.v[keep]
        self.tree = cKDTree(np.stack([np.abs(self.values[:, 0]), self.values[:, 1]], -1))
        self.curve = profile_curve(map_, ball) if curve is None else curve
        self.core_curve = profile_curve(map_, Ball(ball.center, core * ball.radius), h=self.threshold / 10)

    def boundary_distance(self, y):
        return np.minimum(self.curve.distance(y), self.core_curve.distance(y))

    def membership(self, y):
        """1 inside, 0 outside, -1 ambiguous."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        y = np.stack([np.abs(y[:, 0]), y[:, 1]], -1)
        d, _ = self.tree.query(y)
        out = np.where(d <= self.threshold, 1, 0)
        near = (d <= self.threshold) & (self.boundary_distance(y) <= self.threshold)
        if np.any(near):
            out[near] = self._newton(y[near])
        return out

    def contains(self, y):
        m = self.membership(y)
        if np.any(m < 0):
            raise MembershipAmbiguous(f"{np.count_nonzero(m < 0)} probe(s) near the image boundary")
        return m.astype(bool)

    def _newton(self, y, k=4, iters=80):
        _, idx = self.tree.query(y, k=k)
        res = np.full(len(y), 0)
        undecided = np.ones(len(y), bool)
        any_in = np.zeros(len(y), bool)
        all_out = np.ones(len(y), bool)
        for j in range(k):
            st = idx[:, j]
            target = np.stack([np.sign(self.values[st, 0]) * y[:, 0], y[:, 1]], -1)
            found, exits = self._solve(self.rho[st].copy(), self.phi[st].copy(), target, iters)
            any_in |= found
            all_out &= exits
        res[any_in] = 1
        undecided = ~any_in & ~all_out
        res[undecided] = -1
        return res

    def _solve(self, rho, phi, target, iters):
        """Projected damped Newton in (rho, phi); returns (found, left the domain)."""
        lo, hi = self.core * self.ball.radius, self.ball.radius
        tol = 1e-11 * (1.0 + np.abs(target).max(1))

        def resid(i, rho, phi):
            r, x3 = self.ball.meridian(rho, phi)
            pe = self.map.profile(r, x3)
            return pe.v - target[i], pe.J

        def newton_step(i):
            sp, cp = np.sin(phi[i]), np.cos(phi[i])
            dx = np.stack([np.stack([sp, rho[i] * cp], -1), np.stack([cp, -rho[i] * sp], -1)], -2)
            Jp = J[i] @ dx
            det = Jp[:, 0, 0] * Jp[:, 1, 1] - Jp[:, 0, 1] * Jp[:, 1, 0]
            with np.errstate(all="ignore"):
                step = -np.stack([Jp[:, 1, 1] * F[i, 0] - Jp[:, 0, 1] * F[i, 1],
                                  -Jp[:, 1, 0] * F[i, 0] + Jp[:, 0, 0] * F[i, 1]], -1) / det[:, None]
            return np.where(np.isfinite(step), step, 0.0)

        F, J = resid(np.arange(len(rho)), rho, phi)
        norm = np.hypot(*F.T)
        active = np.flatnonzero(norm >= tol)
        for _ in range(iters):
            if active.size == 0:
                break
            i = active
            step = newton_step(i)
            alpha = np.ones(i.size)
            moved = np.zeros(i.size, bool)
            pending = np.arange(i.size)
            for _ in range(12):
                if pending.size == 0:
                    break
                ii = i[pending]
                nr = np.clip(rho[ii] + alpha[pending] * step[pending, 0], lo, hi)
                nf = np.clip(phi[ii] + alpha[pending] * step[pending, 1], 0.0, np.pi)
                nF, nJ = resid(ii, nr, nf)
                better = np.hypot(*nF.T) < norm[ii]
                acc = ii[better]
                rho[acc], phi[acc], F[acc], J[acc] = nr[better], nf[better], nF[better], nJ[better]
                norm[acc] = np.hypot(*nF[better].T)
                moved[pending[better]] = True
                pending = pending[~better]
                alpha[pending] *= 0.5
            # points that can no longer improve are finished
            active = i[moved & (norm[i] >= tol[i])]
        found = norm < 1e3 * tol
        # stalled against the domain edge, or the full step would leave through it
        ahead = rho + newton_step(np.arange(len(rho)))[:, 0]
        at_edge = (rho <= lo * (1 + 1e-9)) | (rho >= hi * (1 - 1e-12)) | (ahead < lo) | (ahead > hi)
        return found, ~found & at_edge


# ---------------------------------------------------------------- Delta fields


@dataclass
class DeltaField:
    """Delta = deg - chi_imG on a cell-centered (s, z) grid; NaN marks discarded probes."""

    s: np.ndarray
    z: np.ndarray
    values: np.ndarray
    degree: np.ndarray
    member: np.ndarray
    threshold: float
    discarded: int

    @property
    def h(self):
        return float(self.s[1] - self.s[0])

    def csv_rows(self):
        S, Z = np.meshgrid(self.s, self.z, indexing="ij")
        for s, z, v in zip(S.ravel(), Z.ravel(), self.values.ravel()):
            if np.isfinite(v):
                yield float(s), float(z), int(v)


def probe_grid(box=((0.0, 0.8), (-0.3, 1.3)), h=1e-2):
    (s0, s1), (z0, z1) = box
    s = s0 + h / 2 + h * np.arange(int(round((s1 - s0) / h)))
    z = z0 + h / 2 + h * np.arange(int(round((z1 - z0) / h)))
    return s, z


class DeltaEvaluator:
    """Pointwise Delta_{u, x, r} for one map and ball."""

    def __init__(self, map_, ball, h=1e-2, n_samples=10 ** 6, seed=0):
        if h > 1e-2:
            raise ValueError("grid resolution must be at most 1e-2")
        self.curve = profile_curve(map_, ball)
        self.image = ForwardImage(map_, ball, n_samples, 3 * h, seed, curve=self.curve)

    def __call__(self, y):
        """(Delta, valid) at probes (s, z)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        deg, valid = self.curve.degree(y)
        mem = self.image.membership(y)
        valid &= mem >= 0
        return deg - np.maximum(mem, 0), valid, deg, mem


def delta_field(map_, x, r, grid=None, n_samples=10 ** 6, seed=0, evaluator=None):
    s, z = probe_grid() if grid is None else grid
    h = float(s[1] - s[0])
    ev = DeltaEvaluator(map_, ball_at(x, r), h, n_samples, seed) if evaluator is None else evaluator
    S, Z = np.meshgrid(s, z, indexing="ij")
    delta, valid, deg, mem = ev(np.stack([S.ravel(), Z.ravel()], -1))
    values = np.where(valid, delta, np.nan).reshape(S.shape)
    return DeltaField(s, z, values, deg.reshape(S.shape), mem.reshape(S.shape), ev.image.threshold,
                      int(np.count_nonzero(~valid)))


# ---------------------------------------------------------------- singular mass


def level_boundary(field, evaluator, level=1, iters=40):
    """Boundary curve of {Delta == level}, from grid contours refined by bisection on grid edges."""
    from skimage.measure import find_contours

    from scipy.ndimage import distance_transform_edt

    valid = np.isfinite(field.values)
    ind = (field.values == level).astype(float)
    # discarded probes take the value of the nearest kept probe
    _, (ii, jj) = distance_transform_edt(~valid, return_indices=True)
    ind = ind[ii, jj]
    contours = find_contours(ind, 0.5)
    if not contours:
        return np.zeros((0, 2))
    c = max(contours, key=len)
    h = field.h
    i0 = np.floor(c[:, 0]).astype(int)
    j0 = np.floor(c[:, 1]).astype(int)
    along_s = c[:, 0] - i0 > 1e-9
    i1 = np.where(along_s, i0 + 1, i0)
    j1 = np.where(along_s, j0, j0 + 1)
    i1, j1 = np.minimum(i1, len(field.s) - 1), np.minimum(j1, len(field.z) - 1)
    a = np.stack([field.s[i0], field.z[j0]], -1)
    b = np.stack([field.s[i1], field.z[j1]], -1)
    # orient each edge so that a is in the set
    a_in = ind[i0, j0] == 1
    a, b = np.where(a_in[:, None], a, b), np.where(a_in[:, None], b, a)
    lo, hi = np.zeros(len(a)), np.ones(len(a))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        d, valid, _, _ = evaluator(a + mid[:, None] * (b - a))
        inside = (d == level) & valid
        lo, hi = np.where(inside, mid, lo), np.where(inside, hi, mid)
    pts = a + 0.5 * (lo + hi)[:, None] * (b - a)
    # close the gap to the axis left by the cell-centered grid
    if pts[0, 0] < 1.5 * h:
        pts = np.vstack([[0.0, pts[0, 1]], pts])
    if pts[-1, 0] < 1.5 * h:
        pts = np.vstack([pts, [0.0, pts[-1, 1]]])
    return pts


@dataclass
class SingularMass:
    value: float
    radii: tuple
    areas: tuple
    slope: float


def singular_mass(map_, radii=(0.4, 0.2, 0.1), h=1e-2, n_samples=10 ** 6, seed=0, box=((0.0, 0.8), (-0.3, 1.3))):
    """|P - O| times the area of the boundary of {Delta_{P, r} = 1}, extrapolated to r = 0."""
    areas = []
    for r in radii:
        ev = DeltaEvaluator(map_, ball_at(POLE, r), h, n_samples, seed)
        field = delta_field(map_, POLE, r, probe_grid(box, h), evaluator=ev)
        areas.append(revolve_arc_area(level_boundary(field, ev)))
    slope, intercept = np.polyfit(np.asarray(radii, float), np.asarray(areas), 1)
    return SingularMass(float(np.linalg.norm(POLE - ORIGIN) * intercept), tuple(radii), tuple(areas), float(slope))


# ---------------------------------------------------------------- INV


@dataclass
class InvReport:
    n_interior: int
    n_exterior: int
    interior_violations: int
    exterior_violations: int
    discarded: int

    @property
    def violations(self):
        return self.interior_violations + self.exterior_violations

    @property
    def fraction(self):
        n = self.n_interior + self.n_exterior
        return self.violations / n if n else 0.0


def _ball_samples(ball, n, seed, inner, outer):
    """n Sobol points uniform in volume in the shell inner < |x - c| < outer, as (r, x3)."""
    m = int(np.ceil(np.log2(max(n, 2))))
    q = qmc.Sobol(3, scramble=True, seed=seed).random_base2(m)[:n]
    rho = (inner ** 3 + q[:, 0] * (outer ** 3 - inner ** 3)) ** (1 / 3)
    cphi = 2 * q[:, 1] - 1
    return rho * np.sqrt(1 - cphi ** 2), ball.center + rho * cphi


def inv_check(map_, x, r, n_samples=10 ** 4, seed=0):
    """Counts samples inside the ball mapped where deg = 0 and samples outside mapped where deg != 0."""
    ball = ball_at(x, r)
    curve = profile_curve(map_, ball)
    n_in = n_samples // 2
    ri, zi = _ball_samples(ball, n_in, seed, 0.0, r)
    ro, zo = _ball_samples(ball, n_samples - n_in, seed + 1, r, 3 * r)
    keep = ro ** 2 + zo ** 2 < BALL_RADIUS ** 2
    ro, zo = ro[keep], zo[keep]
    y_in = map_.profile(ri, zi).v
    y_out = map_.profile(ro, zo).v
    d_in, v_in = curve.degree(y_in)
    d_out, v_out = curve.degree(y_out)
    return InvReport(int(v_in.sum()), int(v_out.sum()), int(np.count_nonzero(v_in & (d_in == 0))),
                     int(np.count_nonzero(v_out & (d_out != 0))), int(np.count_nonzero(~v_in) + np.count_nonzero(~v_out)))
