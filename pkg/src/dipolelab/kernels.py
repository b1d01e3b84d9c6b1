"""Differential kernels for axisymmetric maps and small matrix utilities.

A profile of an axisymmetric map is the pair of functions describing it on the
half plane theta = 0, either in cylindrical form (v1, v2) = (u_r, u_3) or in
spherical form (u_rho, u_phi).  The kernels below turn a profile value and its
2x2 partial derivatives into the full 3x3 Cartesian gradient.  Everything is
vectorized over leading axes.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AxisSingular, StepTooLarge
from .geometry import cart_to_cyl, cyl_frame, sph_frame


@dataclass
class ProfileJet:
    """Two profile values and their partials w.r.t. two chart coordinates.

    ``values[..., k]`` is the k-th profile component and
    ``partials[..., k, j]`` its derivative w.r.t. the j-th coordinate.
    """

    values: np.ndarray
    partials: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.partials = np.asarray(self.partials, dtype=float)


@dataclass
class Jet:
    point: np.ndarray
    value: np.ndarray
    grad: np.ndarray
    frame_note: str = ""


def determinant(M):
    M = np.asarray(M, dtype=float)
    return (
        M[..., 0, 0] * (M[..., 1, 1] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 1])
        - M[..., 0, 1] * (M[..., 1, 0] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 0])
        + M[..., 0, 2] * (M[..., 1, 0] * M[..., 2, 1] - M[..., 1, 1] * M[..., 2, 0])
    )


def cofactor(M):
    """Cofactor matrix, so that M @ cof(M).T = det(M) I."""
    M = np.asarray(M, dtype=float)
    c0, c1, c2 = M[..., :, 0], M[..., :, 1], M[..., :, 2]
    # column k of cof is the cross product of the other two columns of M
    cof = np.empty_like(M)
    cof[..., :, 0] = np.cross(c1, c2)
    cof[..., :, 1] = np.cross(c2, c0)
    cof[..., :, 2] = np.cross(c0, c1)
    return cof


def dirichlet_density(M):
    M = np.asarray(M, dtype=float)
    return np.sum(M * M, axis=(-2, -1))


def area_energy_residual(M):
    """Half the squared Frobenius norm minus |cof(M) e3|; never negative."""
    M = np.asarray(M, dtype=float)
    return 0.5 * dirichlet_density(M) - np.linalg.norm(cofactor(M)[..., :, 2], axis=-1)


def _rotate(F_out, M, F_in):
    return F_out @ M @ np.swapaxes(F_in, -1, -2)


def _require_positive(x, what):
    if np.any(np.asarray(x) <= 0):
        raise AxisSingular(f"{what} must be positive off the symmetry axis")


def cyl_cyl_matrix(values, partials, r):
    """Du in the frames (e_r, e_theta, e_3) -> (e_r, e_theta, e_3)."""
    v1 = values[..., 0]
    J = partials
    z = np.zeros_like(v1)
    rows = [
        np.stack([J[..., 0, 0], z, J[..., 0, 1]], -1),
        np.stack([z, v1 / r, z], -1),
        np.stack([J[..., 1, 0], z, J[..., 1, 1]], -1),
    ]
    return np.stack(rows, -2)


def grad_cyl_cyl(pj, r, theta=0.0):
    """Cartesian Du of u = v1(r, x3) e_r + v2(r, x3) e_3."""
    r = np.asarray(r, dtype=float)
    _require_positive(r, "r")
    M = cyl_cyl_matrix(pj.values, pj.partials, r)
    F = cyl_frame(np.broadcast_to(theta, r.shape))
    return _rotate(F, M, F)


def grad_sph_sph(pj, rho, theta, phi):
    """Cartesian Du for spherical profile (u_rho, u_phi)(rho, phi)."""
    rho, phi = np.asarray(rho, float), np.asarray(phi, float)
    _require_positive(rho, "rho")
    _require_positive(np.sin(phi), "sin(phi)")
    ur, uf = pj.values[..., 0], pj.values[..., 1]
    J = pj.partials
    z = np.zeros_like(ur)
    # columns (e_rho, e_phi, e_theta) of the reference, rows of the image
    rows = [
        np.stack([J[..., 0, 0], J[..., 0, 1] / rho, z], -1),
        np.stack([ur * J[..., 1, 0], ur * J[..., 1, 1] / rho, z], -1),
        np.stack([z, z, ur * np.sin(uf) / (rho * np.sin(phi))], -1),
    ]
    M = np.stack(rows, -2)
    theta = np.broadcast_to(theta, ur.shape)
    return _rotate(sph_frame(theta, uf), M, sph_frame(theta, np.broadcast_to(phi, ur.shape)))


def det_sph_sph(pj, rho, phi):
    ur, uf = pj.values[..., 0], pj.values[..., 1]
    J = pj.partials
    minor = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    return ur ** 2 * np.sin(uf) / (rho ** 2 * np.sin(phi)) * minor


def grad_cyl_sph(pj, r, theta=0.0):
    """Cartesian Du for spherical image (u_rho, u_phi) of cylindrical (r, x3)."""
    r = np.asarray(r, dtype=float)
    _require_positive(r, "r")
    ur, uf = pj.values[..., 0], pj.values[..., 1]
    J = pj.partials
    z = np.zeros_like(ur)
    rows = [
        np.stack([J[..., 0, 0], z, J[..., 0, 1]], -1),
        np.stack([ur * J[..., 1, 0], z, ur * J[..., 1, 1]], -1),
        np.stack([z, ur * np.sin(uf) / r, z], -1),
    ]
    M = np.stack(rows, -2)
    theta = np.broadcast_to(theta, ur.shape)
    return _rotate(sph_frame(theta, uf), M, cyl_frame(theta))


def det_cyl_sph(pj, r):
    ur, uf = pj.values[..., 0], pj.values[..., 1]
    J = pj.partials
    return ur ** 2 * np.sin(uf) / r * (J[..., 1, 0] * J[..., 0, 1] - J[..., 0, 0] * J[..., 1, 1])


def sph_to_cyl_profile(values, partials):
    """Convert a spherical image profile (u_rho, u_phi) to (v1, v2) with partials."""
    ur, uf = values[..., 0], values[..., 1]
    s, c = np.sin(uf), np.cos(uf)
    v = np.stack([ur * s, ur * c], -1)
    A = np.stack([np.stack([s, ur * c], -1), np.stack([c, -ur * s], -1)], -2)
    return v, A @ partials


def sph_coords_jacobian(rho, phi):
    """d(rho, phi)/d(r, x3) for spherical coordinates about a point on the axis."""
    s, c = np.sin(phi), np.cos(phi)
    return np.stack([np.stack([s, c], -1), np.stack([c / rho, -s / rho], -1)], -2)


def profile_det(v, J, r):
    """det Du = (v1 / r) det(dv/d(r, x3))."""
    return v[..., 0] / r * (J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0])


def profile_dirichlet(v, J, r):
    return np.sum(J * J, axis=(-2, -1)) + (v[..., 0] / r) ** 2


# central stencils: (offsets in units of h, weights, truncation order)
_STENCILS = {2: ((1,), (0.5,), 2), 4: ((1, 2), (2.0 / 3.0, -1.0 / 12.0), 4)}


def fd_jacobian(fun, p, h=1e-5, richardson=False, region_of=None, order=2):
    """Central-difference Jacobian of ``fun`` at the points ``p`` (shape (..., 3)).

    ``fun`` maps arrays (N, 3) to (N, 3).  ``order`` is 2 (three-point) or 4
    (five-point).  With ``region_of`` given, a stencil whose points do not all
    lie in the region of the center raises StepTooLarge.  ``richardson``
    combines steps h and h/2.
    """
    p = np.asarray(p, dtype=float)
    flat = p.reshape(-1, 3)
    n = flat.shape[0]
    offsets, weights, trunc = _STENCILS[order]
    k = len(offsets)

    def one(step):
        offs = np.concatenate([np.eye(3) * o * step for o in offsets] + [-np.eye(3) * o * step for o in offsets])
        pts = flat[:, None, :] + offs[None]
        if region_of is not None:
            lab0 = region_of(flat)
            labs = region_of(pts.reshape(-1, 3)).reshape(n, 6 * k)
            if np.any(labs != lab0[:, None]):
                raise StepTooLarge("finite-difference stencil crosses a region interface")
        vals = fun(pts.reshape(-1, 3)).reshape(n, 2, k, 3, 3)
        diff = sum(w * (vals[:, 0, j] - vals[:, 1, j]) for j, w in enumerate(weights)) / step
        return np.swapaxes(diff, 1, 2)

    D = one(h)
    if richardson:
        f = 2.0 ** trunc
        D = (f * one(h / 2) - D) / (f - 1)
    return D.reshape(p.shape[:-1] + (3, 3))


def stencil_inside(region_of, p, reach):
    """True where the axis-aligned cross of half-width ``reach`` around each point stays in its region."""
    p = np.asarray(p, dtype=float).reshape(-1, 3)
    lab = region_of(p)
    ok = np.ones(len(p), dtype=bool)
    for i in range(3):
        for s in (1.0, -1.0):
            ok &= region_of(p + s * reach * np.eye(3)[i]) == lab
    return ok


@dataclass
class ProfileEval:
    """Profile values ``v`` (N, 2), their (r, x3) Jacobian ``J`` (N, 2, 2) and region tags."""

    r: np.ndarray
    x3: np.ndarray
    v: np.ndarray
    J: np.ndarray
    region: np.ndarray
    # determinant from a chart-intrinsic formula where the Cartesian one cancels badly
    det_chart: Optional[np.ndarray] = None

    @property
    def det(self):
        d = profile_det(self.v, self.J, self.r)
        if self.det_chart is not None:
            d = np.where(np.isfinite(self.det_chart), self.det_chart, d)
        return d

    @property
    def dirichlet(self):
        return profile_dirichlet(self.v, self.J, self.r)

    def grad(self):
        """Du on the half plane theta = 0, where the cylindrical frame is the Cartesian one."""
        return cyl_cyl_matrix(self.v, self.J, self.r)


class ProfileMap:
    """Shared Cartesian front end for maps described by ``profile(r, x3)``."""

    name = "map"

    def profile(self, r, x3):
        raise NotImplementedError

    def value(self, p):
        p = np.asarray(p, dtype=float)
        c = cart_to_cyl(p)
        pe = self.profile(c[..., 0], c[..., 2])
        th = c[..., 1].reshape(-1)
        out = np.stack([pe.v[:, 0] * np.cos(th), pe.v[:, 0] * np.sin(th), pe.v[:, 1]], -1)
        return out.reshape(p.shape)

    def evaluate(self, p):
        """Value and Cartesian gradient at points off the symmetry axis."""
        p = np.asarray(p, dtype=float)
        c = cart_to_cyl(p)
        pe = self.profile(c[..., 0], c[..., 2])
        th = c[..., 1].reshape(-1)
        grad = grad_cyl_cyl(ProfileJet(pe.v, pe.J), pe.r, th)
        value = np.stack([pe.v[:, 0] * np.cos(th), pe.v[:, 0] * np.sin(th), pe.v[:, 1]], -1)
        shape = p.shape[:-1]
        note = self.name + ":" + ",".join(sorted(set(pe.region.tolist())))
        return Jet(p, value.reshape(shape + (3,)), grad.reshape(shape + (3, 3)), frame_note=note)

    def labels(self, p):
        c = cart_to_cyl(p)
        return self.profile(c[..., 0], c[..., 2]).region.reshape(np.shape(p)[:-1])
