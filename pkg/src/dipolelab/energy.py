"""Neo-Hookean energies of the limit and recovery maps, region by region.

The stored energy is |Du|^2 + H(det Du).  Region integrals go through the
chart quadrature; the recovery energy of each region is compared with the
limit energy on the matching region, which avoids cancelling two large
totals against each other.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .errors import BudgetExceeded, HypothesisViolated
from .geometry import BALL_RADIUS, RECOVERY_REGIONS
from .kernels import ProfileEval, ProfileMap, area_energy_residual, dirichlet_density
from .limit_map import LimitMap
from .quadrature import QuadResult, QuadSpec, integrate_1d, integrate_2d, integrate_region
from .recovery_map import RecoveryMap, RecoveryParams

# limit region matched to each recovery region; None means the limit energy is 0
MATCHING_REGION = {
    "c_eps": None,
    "a_prime_eps": None,
    "e_prime_eps": None,
    "a_eps": "a",
    "b_eps": "b",
    "d_eps": "d",
    "e_eps": "e",
    "f_eps": "f",
}

CSV_COLUMNS = ("eps", "gamma", "region", "dirichlet", "dirichlet_err", "h_energy", "h_err", "expected", "deviation")


# ---------------------------------------------------------------- H


@dataclass(frozen=True)
class HFunction:
    """A convex volumetric penalty H: (0, inf) -> R.

    ``screen()`` checks convexity, the growth at 0 and infinity, and the
    three integrability conditions the energy bounds rely on.  Invalid
    choices raise HypothesisViolated.
    """

    fn: Callable
    name: str = "custom"
    params: tuple = ()

    def __call__(self, t):
        return self.fn(np.asarray(t, dtype=float))

    def screen(self, spec=QuadSpec(atol=1e-9, rtol=1e-7)):
        t = np.logspace(-6, 6, 241)
        # convexity: second differences on a log grid, normalised by the grid scale
        for a, b, c in zip(t[:-2], t[1:-1], t[2:]):
            lhs = self(b)
            rhs = ((c - b) * self(a) + (b - a) * self(c)) / (c - a)
            if lhs - rhs > 1e-9 * max(1.0, abs(rhs)):
                raise HypothesisViolated(f"{self.name}: not convex near t={b:.3g}")
        big = np.array([1e4, 1e6, 1e8])
        ratio = self(big) / big
        if not (np.all(np.diff(ratio) > 0) and ratio[-1] > 2 * max(ratio[0], 1e-300)):
            raise HypothesisViolated(f"{self.name}: H(t)/t does not grow without bound")
        small = self(np.array([1e-4, 1e-8, 1e-12]))
        if not (np.all(np.diff(small) > 0) and small[-1] > 2 * small[0]):
            raise HypothesisViolated(f"{self.name}: H is not unbounded at 0+")
        # each condition in log variables, so the interval becomes a half line
        checks = {
            "H(s) s^-5/2 on (1, inf)": lambda x: self(np.exp(x)) * np.exp(-1.5 * x),
            "H(s^3) on (0, 1)": lambda x: self(np.exp(-3 * x)) * np.exp(-x),
            "H(s^2) on (0, 1)": lambda x: self(np.exp(-2 * x)) * np.exp(-x),
        }
        out = {}
        for label, g in checks.items():
            out[label] = _tail_converges(g, label, self.name, spec)
        return out


def _tail_converges(g, label, name, spec, blocks=12, block=4.0):
    """Integrate g over [0, blocks * block] in log variables; the block
    contributions must shrink geometrically for the tail to be finite."""
    pieces = []
    for k in range(blocks):
        pieces.append(integrate_1d(g, (k * block, (k + 1) * block), spec).value)
    pieces = np.abs(np.array(pieces))
    tail = pieces[blocks // 2:]
    if not np.all(np.isfinite(pieces)) or np.any(tail[1:] > 0.7 * tail[:-1] + 1e-300):
        raise HypothesisViolated(f"{name}: {label} is not integrable")
    return float(np.sum(pieces))


def power_h(p=1.25, q=0.25):
    """H(t) = t^p + t^-q."""
    return HFunction(lambda t: t ** p + t ** (-q), name=f"power({p},{q})", params=(p, q))


DEFAULT_H = power_h()


def parse_h(text):
    """'default' or 'power:p,q'."""
    text = text.strip()
    if text in ("", "default"):
        return DEFAULT_H
    if text.startswith("power:"):
        try:
            p, q = (float(x) for x in text[len("power:"):].split(","))
        except ValueError as exc:
            raise ValueError(f"cannot parse H function {text!r}") from exc
        return power_h(p, q)
    raise ValueError(f"unknown H function {text!r}")


# ---------------------------------------------------------------- region energies


class IdentityMap(ProfileMap):
    """u(x) = x, using the limit-map charts for integration."""

    name = "identity"

    def profile(self, r, x3):
        r, x3 = np.broadcast_arrays(np.asarray(r, float), np.asarray(x3, float))
        r, x3 = r.reshape(-1), x3.reshape(-1)
        J = np.broadcast_to(np.eye(2), (r.size, 2, 2)).copy()
        return ProfileEval(r, x3, np.stack([r, x3], -1), J, np.full(r.size, "id"))

    def charts(self):
        out = []
        for ch in LimitMap().charts():
            ch.jet = None
            out.append(ch)
        return out


def _charts_for(map_, region, charts=None):
    charts = map_.charts() if charts is None else charts
    sel = [ch for ch in charts if ch.region == region]
    if not sel:
        raise ValueError(f"no charts for region {region!r}")
    return sel


def region_integral(map_, region, density, spec=QuadSpec(), charts=None):
    total = QuadResult(0.0, 0.0, 0)
    for ch in _charts_for(map_, region, charts):
        total = total + integrate_region(ch, density, spec, map_)
    return total


def dirichlet_energy(map_, region, spec=QuadSpec(), charts=None):
    return region_integral(map_, region, lambda pe: pe.dirichlet, spec, charts)


def h_energy(map_, region, H=DEFAULT_H, spec=QuadSpec(), charts=None):
    def density(pe):
        d = pe.det
        if np.any(d <= 0):
            raise HypothesisViolated(f"non-positive Jacobian met in region {region}")
        return H(d)

    return region_integral(map_, region, density, spec, charts)


# ---------------------------------------------------------------- c_eps


def c_region_parts(params, spec=QuadSpec(atol=1e-12, rtol=1e-10)):
    """The Dirichlet energy of u_eps over c_eps divided by 2 pi, split as
    I = int r (u_r^2 + u^2 f'^2), II = int u^2 sin^2 f / r, III = int r u_x3^2
    over (0, eps) x (0, 1) in (r, x3); the expected limits are 1/2, 1/2, 0."""
    M = RecoveryMap(params)

    def part(k):
        def f(r, x3):
            vals, P = M.c_profile(r, x3)
            u, fa = vals[..., 0], vals[..., 1]
            if k == 0:
                return r * (P[..., 0, 0] ** 2 + (u * P[..., 1, 0]) ** 2)
            if k == 1:
                return (u * np.sin(fa)) ** 2 / r
            return r * P[..., 0, 1] ** 2

        return integrate_2d(f, ((0.0, params.eps), (0.0, 1.0)), spec, grade=((0, 0), (0, 1)))

    return tuple(part(k) for k in range(3))


# ---------------------------------------------------------------- tables


@dataclass
class RegionRow:
    eps: float
    gamma: float
    region: str
    dirichlet: float
    dirichlet_err: float
    h_energy: float
    h_err: float
    expected: float
    deviation: float
    h_expected: float = 0.0
    cells: int = 0

    def csv_row(self):
        return {k: getattr(self, k) for k in CSV_COLUMNS}


@dataclass
class EnergyReport:
    """Per-region energies of u_eps against the limit map for one eps.

    ``expected`` is the limiting Dirichlet energy of the region: 2 pi for
    c_eps, 0 for the caps, the limit-map energy on the matching region
    otherwise.  ``deviation`` is dirichlet - expected.
    """

    eps: float
    gamma: float
    rows: List[RegionRow] = field(default_factory=list)
    failures: Dict[str, str] = field(default_factory=dict)

    @property
    def dirichlet_total(self):
        return float(sum(r.dirichlet for r in self.rows))

    @property
    def h_total(self):
        return float(sum(r.h_energy for r in self.rows))

    @property
    def gap(self):
        """Recovery minus limit Dirichlet energy summed over regions; tends to 2 pi."""
        return float(sum(r.dirichlet - (r.expected if r.region != "c_eps" else 0.0) for r in self.rows))

    @property
    def h_gap(self):
        return float(sum(r.h_energy - r.h_expected for r in self.rows))

    def row(self, region):
        for r in self.rows:
            if r.region == region:
                return r
        raise KeyError(region)


def limit_energies(regions=("a", "b", "d", "e", "f"), H=DEFAULT_H, spec=QuadSpec(rtol=1e-7), limit=None):
    limit = LimitMap() if limit is None else limit
    charts = limit.charts()
    return {reg: (dirichlet_energy(limit, reg, spec, charts), h_energy(limit, reg, H, spec, charts))
            for reg in regions}


def energy_report(params, H=DEFAULT_H, spec=QuadSpec(rtol=1e-7), regions=RECOVERY_REGIONS, limit_cache=None):
    M = RecoveryMap(params)
    charts = M.charts()
    needed = sorted({MATCHING_REGION[r] for r in regions if MATCHING_REGION[r] is not None})
    if limit_cache is None:
        limit_cache = {}
    missing = [r for r in needed if r not in limit_cache]
    if missing:
        limit_cache.update(limit_energies(missing, H, spec, M.limit))
    rep = EnergyReport(params.eps, params.gamma)
    for reg in regions:
        try:
            d = dirichlet_energy(M, reg, spec, charts)
            h = h_energy(M, reg, H, spec, charts)
        except BudgetExceeded as exc:
            rep.failures[reg] = str(exc)
            continue
        lim = MATCHING_REGION[reg]
        if reg == "c_eps":
            expected, h_expected = 2 * np.pi, 0.0
        elif lim is None:
            expected, h_expected = 0.0, 0.0
        else:
            expected, h_expected = limit_cache[lim][0].value, limit_cache[lim][1].value
        rep.rows.append(RegionRow(params.eps, params.gamma, reg, d.value, d.error_estimate, h.value,
                                  h.error_estimate, expected, d.value - expected, h_expected,
                                  d.cells_used + h.cells_used))
    return rep


def energy_gap_table(eps_list, gamma=1.0 / 3.0, H=DEFAULT_H, spec=QuadSpec(rtol=1e-7), regions=RECOVERY_REGIONS):
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be strictly decreasing")
    cache = {}
    return [energy_report(RecoveryParams(e, gamma), H, spec, regions, cache) for e in eps_list]


def energy_stereo_closed_form(eps):
    """int_0^eps r f_eps'(r)^2 dr in closed form; f_eps is the stereographic angle profile."""
    e = float(eps)
    a = np.arctan(e)
    L = np.log1p(e ** -2)
    return 0.5 * ((1 - 1 / (1 + e ** -2)) + 2 * e * a * L + a * a)


def energy_stereo_quadrature(eps, spec=QuadSpec(atol=1e-14, rtol=1e-12)):
    from .recovery_map import f_eps_prime

    p = RecoveryParams(eps)
    return integrate_1d(lambda r: r * f_eps_prime(r, p) ** 2, (0.0, eps), spec, grade=(0,))


# ---------------------------------------------------------------- area-energy inequality


def area_energy_sample(map_, n=10 ** 5, seed=0, radius=BALL_RADIUS):
    """Smallest relative residual (|Du|^2/2 - |cof Du e3|) / |Du|^2 over n uniform points of the ball."""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = dirs * radius * rng.uniform(0, 1, n)[:, None] ** (1 / 3)
    pts = pts[np.hypot(pts[:, 0], pts[:, 1]) > 1e-9]
    G = map_.evaluate(pts).grad
    return float(np.min(area_energy_residual(G) / dirichlet_density(G))), len(pts)


@dataclass
class SectionConformality:
    """Area-energy residual on one horizontal cross-section of c_eps.

    ``pointwise`` is the largest residual / |Du|^2 over r in (0, eps),
    ``core`` the same over r <= eps^2 / 2, and ``weighted`` the ratio of
    the integrated residual to the integrated |Du|^2 / 2.
    """

    eps: float
    x3: float
    pointwise: float
    core: float
    weighted: float


def c_section_conformality(params, x3_list=(0.25, 0.5, 0.75), n=400, spec=QuadSpec(atol=1e-14, rtol=1e-10)):
    M = RecoveryMap(params)
    e = params.eps
    out = []
    for x3 in x3_list:
        def ratio(r):
            G = M.evaluate(np.stack([r, 0 * r, x3 + 0 * r], -1)).grad
            return area_energy_residual(G), dirichlet_density(G)

        r = e * np.concatenate([np.geomspace(1e-6, 1.0, n)[:-1], np.linspace(0, 1, n + 1)[1:-1]])
        res, dd = ratio(r)
        rel = res / dd
        core = r <= e * e / 2
        num = integrate_1d(lambda t: t * ratio(t)[0], (0.0, e), spec, grade=(0,), breaks=(e * e,)).value
        den = integrate_1d(lambda t: t * ratio(t)[1] / 2, (0.0, e), spec, grade=(0,), breaks=(e * e,)).value
        out.append(SectionConformality(e, float(x3), float(rel.max()), float(rel[core].max()), num / den))
    return out
