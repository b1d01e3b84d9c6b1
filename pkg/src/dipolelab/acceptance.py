"""The thirteen acceptance checks, shared by the test suite and ``dipolelab report``.

Each ``criterion_N`` returns a CriterionResult carrying the measured numbers,
the thresholds they were held to and a pass flag.  Nothing here loosens a
threshold; a failing check is reported as failing.
"""
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
from scipy.stats import qmc

from .energy import (
    area_energy_sample,
    c_region_parts,
    c_section_conformality,
    energy_report,
    energy_stereo_closed_form,
    energy_stereo_quadrature,
)
from .geometry import ORIGIN, POLE
from .kernels import determinant, fd_jacobian, stencil_inside
from .lemma_suite import DEFAULT_EPS, DEFAULT_GAMMAS, fit_exponent, run_ledger
from .limit_map import BUBBLE_CENTER, BUBBLE_RADIUS, LimitMap
from .quadrature import QuadSpec
from .recovery_map import RecoveryMap, RecoveryParams, incompressibility_check
from .topology import (
    Ball,
    delta_field,
    det_pairing,
    inv_check,
    preimage_degree,
    profile_curve,
    singular_mass,
    standard_test_functions,
    surface_dictionary,
    surface_energy_lower_bound,
    surface_pairing,
)

TITLES = {
    1: "incompressibility in c, a', e'",
    2: "energy concentration 2 pi in c",
    3: "vanishing energy of a' and e'",
    4: "closed-form Jacobians of regions a and b",
    5: "stereographic energy integral",
    6: "scalar estimate ledger",
    7: "distributional determinant atoms",
    8: "degree and dipole structure",
    9: "INV dichotomy",
    10: "singular mass",
    11: "area-energy inequality",
    12: "surface-energy pairing",
    13: "determinism of the report",
}


@dataclass
class CriterionResult:
    number: int
    passed: bool
    summary: str
    details: Dict = field(default_factory=dict)

    @property
    def title(self):
        return TITLES[self.number]

    def line(self):
        return f"criterion {self.number:2d} [{'PASS' if self.passed else 'FAIL'}] {self.title}: {self.summary}"

    def record(self):
        return {"criterion": self.number, "title": self.title, "status": "pass" if self.passed else "fail",
                "summary": self.summary, "details": _plain(self.details)}


def _plain(x):
    """Convert numpy scalars and tuples into JSON-ready values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ---------------------------------------------------------------- 1 - 6


def criterion_1(eps=0.05, gamma=1.0 / 3.0, n=10 ** 4, seed=0):
    rows = incompressibility_check(RecoveryParams(eps, gamma), n, seed)
    worst_a = max(r.max_analytic for r in rows)
    worst_fd = max(r.max_fd for r in rows)
    ok = worst_a <= 1e-8 and worst_fd <= 1e-4
    det = {r.region: {"points": r.n_points, "max_analytic": r.max_analytic, "max_fd": r.max_fd,
                      "fd_points": r.fd_points} for r in rows}
    return CriterionResult(1, ok, f"max|det-1| analytic {worst_a:.2e} (<= 1e-8), FD {worst_fd:.2e} (<= 1e-4)", det)


def criterion_2(eps_list=DEFAULT_EPS, gamma=1.0 / 3.0):
    energies, parts = [], []
    for e in eps_list:
        p = RecoveryParams(e, gamma)
        energies.append(energy_report(p, regions=("c_eps",)).row("c_eps").dirichlet)
        parts.append(tuple(x.value for x in c_region_parts(p)))
    dev = np.abs(np.array(energies) - 2 * np.pi)
    monotone = bool(np.all(np.diff(dev) < 0))
    rel = float(dev[-1] / (2 * np.pi))
    e = eps_list[-1]
    I, II, III = parts[-1]
    parts_ok = abs(I - 0.5) <= 0.1 and abs(II - 0.5) <= 0.1 and III <= e ** (4 * (1 - gamma)) + 1e-6
    ok = monotone and rel <= 0.15 and parts_ok
    return CriterionResult(
        2, ok,
        f"E_c at eps={e:g} is {energies[-1]:.4f} (rel dev {rel:.3f}, need <= 0.15); "
        f"parts ({I:.3f}, {II:.3f}, {III:.2e}) vs (1/2, 1/2, 0); monotone={monotone}",
        {"eps": list(eps_list), "gamma": gamma, "energies": energies, "parts": parts, "relative_deviation": rel})


def criterion_3(eps_list=DEFAULT_EPS, gamma=1.0 / 3.0):
    totals = []
    for e in eps_list:
        rep = energy_report(RecoveryParams(e, gamma), regions=("a_prime_eps", "e_prime_eps"))
        totals.append(sum(r.dirichlet + r.h_energy for r in rep.rows))
    p = fit_exponent(eps_list, totals, log_power=2.0)
    decreasing = bool(np.all(np.diff(totals) < 0))
    ok = decreasing and p >= 0.8
    return CriterionResult(3, ok, f"energies {', '.join(f'{t:.3e}' for t in totals)}; fitted exponent {p:.2f} (>= 0.8)",
                           {"eps": list(eps_list), "gamma": gamma, "totals": totals, "exponent": p})


def _region_points(map_, region, n, seed):
    q = qmc.Sobol(3, scramble=True, seed=seed).random_base2(18)
    pts = 6.0 * q - 3.0
    pts = pts[(np.linalg.norm(pts, axis=1) < 2.99) & (np.hypot(pts[:, 0], pts[:, 1]) > 1e-3)]
    pts = pts[map_.labels(pts) == region]
    return pts[:n]


def criterion_4(n=10 ** 3, seed=0, h=1e-6):
    L = LimitMap()
    out, worst = {}, 0.0
    for reg in ("a", "b"):
        P = _region_points(L, reg, 4 * n, seed)
        P = P[stencil_inside(L.labels, P, h)][:n]
        closed = L.det(P)
        fd = determinant(fd_jacobian(L.value, P, h=h, richardson=True))
        rel = float(np.max(np.abs(fd - closed) / np.abs(closed)))
        out[reg] = {"points": len(P), "max_relative": rel}
        worst = max(worst, rel)
    ok = worst <= 1e-5 and all(v["points"] == n for v in out.values())
    return CriterionResult(4, ok, f"max relative |det_FD - det_closed| {worst:.2e} (<= 1e-5)", out)


def criterion_5(eps_list=DEFAULT_EPS):
    rows, ok = [], True
    for e in eps_list:
        q = energy_stereo_quadrature(e).value
        cf = energy_stereo_closed_form(e)
        bound = 5 * e * e * abs(np.log(e))
        rows.append({"eps": e, "quadrature": q, "closed_form": cf, "gap": abs(q - 0.5), "bound": bound})
        ok &= abs(q - 0.5) <= bound and abs(q - cf) <= 1e-10
    worst = max(abs(r["quadrature"] - r["closed_form"]) for r in rows)
    return CriterionResult(5, bool(ok), f"|I - 1/2| within 5 eps^2|ln eps| at all eps; |quad - closed| <= {worst:.1e}",
                           {"rows": rows})


def criterion_6(eps_list=DEFAULT_EPS, gammas=DEFAULT_GAMMAS):
    checks = run_ledger(eps_list, gammas)
    failing = []
    for c in checks:
        for cl in c.claims:
            if cl.applicable and not cl.passed:
                failing.append(f"{c.id}(gamma={c.gamma:.3g}): {cl.name}")
    ids = sorted({c.id for c in checks})
    ok = not failing
    summary = f"{len(ids)} registry ids x {len(gammas)} gammas; " + (
        "all claims hold" if ok else f"{len(failing)} failing claims: " + "; ".join(failing))
    return CriterionResult(6, ok, summary, {"checks": [c.record() for c in checks], "failing": failing})


# ---------------------------------------------------------------- 7 - 12


def criterion_7(spec=QuadSpec(atol=1e-9, rtol=1e-7)):
    L = LimitMap()
    rows, ok = [], True
    for phi in standard_test_functions():
        r = det_pairing(L, phi, spec)
        rows.append({**r.record(), "c1_norm": r.norm})
        ok &= abs(r.deviation) <= 1e-3 * r.norm
    worst = max(abs(r["deviation"]) / r["c1_norm"] for r in rows)
    return CriterionResult(7, bool(ok), f"max |pairing - oracle| / ||phi||_C1 = {worst:.2e} (<= 1e-3)", {"rows": rows})


def degree_probes(n=256, seed=1):
    q = qmc.Sobol(2, scramble=True, seed=seed).random_base2(int(np.ceil(np.log2(n))))[:n]
    return np.stack([1.4 * q[:, 0], -0.4 + 2.0 * q[:, 1]], -1)


def criterion_8(seed=0, probes=100):
    L = LimitMap()
    Y = degree_probes()
    agree = {}
    for name, c in (("P", 1.0), ("O", 0.0)):
        ball = Ball(c, 0.3)
        d, v = profile_curve(L, ball).degree(Y)
        dp, vp = preimage_degree(L, ball, Y)
        idx = np.flatnonzero(v & vp)[:probes]
        agree[name] = {"valid": len(idx), "agree": int(np.sum(d[idx] == dp[idx])),
                       "histogram": {int(k): int(m) for k, m in zip(*np.unique(d[idx], return_counts=True))}}
    inside, fields = {}, {}
    for name, x, target in (("P", POLE, 1), ("O", ORIGIN, -1)):
        F = delta_field(L, x, 0.3, seed=seed)
        S, Z = np.meshgrid(F.s, F.z, indexing="ij")
        mask = (np.hypot(S, Z - BUBBLE_CENTER[2]) < BUBBLE_RADIUS) & np.isfinite(F.values)
        inside[name] = {"probes": int(mask.sum()), "hits": int(np.sum(F.values[mask] == target)),
                        "discarded": F.discarded}
        fields[name] = delta_field(L, x, 0.1, seed=seed).values
    total = fields["P"] + fields["O"]
    ok_sum = np.isfinite(total)
    zero_frac = float(np.mean(total[ok_sum] == 0))
    ok = (all(a["valid"] == probes and a["agree"] >= 95 for a in agree.values())
          and all(v["hits"] >= 0.95 * v["probes"] for v in inside.values()) and zero_frac >= 0.95)
    summary = (f"winding = preimage at {agree['P']['agree']}/{agree['P']['valid']} (P), "
               f"{agree['O']['agree']}/{agree['O']['valid']} (O); "
               f"Delta_P = 1 on {inside['P']['hits']}/{inside['P']['probes']}, "
               f"Delta_O = -1 on {inside['O']['hits']}/{inside['O']['probes']} bubble probes; "
               f"Delta_P + Delta_O = 0 on {zero_frac:.1%} of {int(ok_sum.sum())} probes")
    return CriterionResult(8, ok, summary, {"agreement": agree, "bubble": inside, "sum_zero_fraction": zero_frac,
                                            "sum_probes": int(ok_sum.sum())})


def criterion_9(eps=0.05, seed=0, n=10 ** 4):
    M = RecoveryMap(RecoveryParams(eps))
    rec = {name: inv_check(M, x, 0.3, n, seed) for name, x in (("P", POLE), ("O", ORIGIN))}
    lim = inv_check(LimitMap(), ORIGIN, 0.3, n, seed)
    ok = all(r.violations == 0 for r in rec.values()) and lim.fraction > 0
    details = {f"recovery_{k}": vars(v) for k, v in rec.items()}
    details["limit_O"] = vars(lim)
    return CriterionResult(9, ok, f"recovery violations {rec['P'].violations} (P), {rec['O'].violations} (O); "
                                  f"limit B(O,0.3) violation fraction {lim.fraction:.3f} (> 0)", details)


def criterion_10(seed=0):
    sm = singular_mass(LimitMap(), seed=seed)
    rel = sm.value / np.pi - 1
    return CriterionResult(10, abs(rel) <= 0.02, f"extrapolated mass {sm.value:.5f} vs pi (rel {rel:+.2e}, within 2%)",
                           {"value": sm.value, "radii": sm.radii, "areas": sm.areas, "slope": sm.slope})


def criterion_11(seed=0, n=10 ** 5, eps=1e-3):
    limit_min, n_lim = area_energy_sample(LimitMap(), n, seed)
    rec_min, n_rec = area_energy_sample(RecoveryMap(RecoveryParams(0.05)), n, seed)
    sections = c_section_conformality(RecoveryParams(eps))
    pointwise = max(s.pointwise for s in sections)
    ok_ineq = min(limit_min, rec_min) >= -1e-9
    ok = ok_ineq and pointwise <= 1e-3
    summary = (f"min residual/|Du|^2 {min(limit_min, rec_min):.2e} (>= -1e-9); c cross-sections at eps={eps:g}: "
               f"max residual/|Du|^2 {pointwise:.3f} (<= 1e-3), "
               f"core r <= eps^2/2 {max(s.core for s in sections):.1e}, "
               f"energy-weighted {max(s.weighted for s in sections):.3f}")
    return CriterionResult(11, ok, summary, {"limit_min": limit_min, "recovery_min": rec_min, "samples": [n_lim, n_rec],
                                             "sections": [vars(s) for s in sections]})


def criterion_12(spec=QuadSpec(atol=1e-8, rtol=1e-6)):
    L = LimitMap()
    dictionary = surface_dictionary()
    picks = [dictionary[i] for i in (5, 7, 12)]
    rows, ok = [], True
    for f in picks:
        r = surface_pairing(L, f, spec)
        rel = abs(r.deviation) / abs(r.oracle)
        rows.append({**r.record(), "relative": rel})
        ok &= rel <= 0.01
    sup, _ = surface_energy_lower_bound(L, dictionary, spec)
    ok &= sup >= 0.9 * 2 * np.pi
    worst = max(r["relative"] for r in rows)
    return CriterionResult(12, bool(ok), f"worst relative pairing deviation {worst:.2e} (<= 1e-2); "
                                         f"dictionary sup {sup:.4f} vs 0.9*2pi = {1.8 * np.pi:.4f}",
                           {"fields": rows, "dictionary_sup": sup})


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 13)}
