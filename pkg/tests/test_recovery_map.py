import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dipolelab.errors import OutOfDomain
from dipolelab.kernels import fd_jacobian, stencil_inside
from dipolelab.limit_map import LimitMap
from dipolelab.recovery_map import (
    SQRT2,
    H_eps,
    RecoveryMap,
    RecoveryParams,
    f_eps,
    f_eps_prime,
    g_eps,
    h_eps,
    incompressibility_check,
    omega_eps,
    psi,
    u_rho_a_prime,
)

P = RecoveryParams(0.05)
R = RecoveryMap(P)
L = LimitMap()


def test_params_screen():
    for kw in ({"eps": 0.3}, {"eps": 0.05, "gamma": 0.5}, {"eps": 0.0}):
        with pytest.raises(ValueError):
            RecoveryParams(**kw)


def test_f_endpoints_and_monotone():
    assert f_eps(0.0, P) == 0.0
    assert abs(f_eps(P.eps, P) - np.pi / 2) < 1e-12
    r = np.linspace(0, P.eps, 2001)
    assert np.all(np.diff(f_eps(r, P)) > 0)
    with pytest.raises(OutOfDomain):
        f_eps(2 * P.eps, P)


def test_stereo_energy_near_half():
    from scipy.integrate import quad

    p = RecoveryParams(1e-2)
    e = p.eps
    val, _ = quad(lambda r: r * f_eps_prime(r, p) ** 2, 0, e, points=[e ** 2], epsabs=1e-14, limit=200)
    assert abs(val - 0.5) <= 5 * e ** 2 * abs(np.log(e))


@pytest.mark.parametrize("eps", [0.1, 0.01, 1e-3])
def test_g_inverts_f(eps):
    p = RecoveryParams(eps)
    r = np.linspace(0, eps, 1001)
    assert np.abs(g_eps(f_eps(r, p), p) - r).max() <= 1e-12
    assert g_eps(0.0, p) == 0.0 and abs(g_eps(np.pi / 2, p) - eps) < 1e-15
    assert g_eps(np.linspace(0, np.pi / 4, 100), p).max() <= eps ** 2


def test_h_properties():
    s, phi = np.meshgrid(np.linspace(0, 1, 100), np.linspace(1e-3, np.pi / 2, 100))
    h = h_eps(s, phi, P)
    assert np.abs(h_eps(s[:, 0], np.full(100, np.pi / 2), P)).max() < 1e-15
    assert np.all(h[phi < np.pi / 2 - 1e-9][s[phi < np.pi / 2 - 1e-9] < 1] > 0)
    assert np.all(np.abs(h) <= 3 * np.pi * SQRT2 / 2 * P.eps ** 2 * np.cos(phi) + 1e-15)
    assert np.abs(H_eps(np.zeros(10), np.linspace(0.1, 1.5, 10), P)).max() == 0


def test_H_is_integral_of_h():
    from scipy.integrate import quad

    for phi in (0.1, 0.7, 1.4):
        val, _ = quad(lambda s: h_eps(s, phi, P), 0, 0.6, epsabs=1e-16)
        assert abs(H_eps(0.6, phi, P) - val) < 1e-14


def test_u_rho_a_prime_bounds():
    s, phi = np.meshgrid(np.linspace(0, 1, 120), np.linspace(0, np.pi / 2, 120))
    u, _, _ = u_rho_a_prime(s, phi, P)
    c = np.cos(phi) + 2 * P.eg
    assert np.all(u >= c / 4) and np.all(u <= c + 1e-12)


def test_omega_endpoints():
    om, _ = omega_eps(np.array([0.0, 1.0, 2.0, 3.0]), P)
    assert np.allclose(om, [P.eg, 2 * P.eg, P.eta, 6 * P.eg], rtol=1e-12)


def test_c_eps_rim_value():
    u = R.value(np.array([[P.eps, 0.0, 0.0]]))[0]
    assert np.allclose(u, [2 * P.eg, 0, 0], atol=1e-14)


@given(st.floats(np.pi / 2 + 1e-3, np.pi))
def test_a_eps_outer_sphere(phi):
    x = np.array([[np.sin(phi), 0.0, np.cos(phi)]])
    assert abs(np.linalg.norm(R.value(x)) - P.eg) < 1e-13


@given(st.floats(1e-3, 1.5))
def test_d_eps_interface_with_b(t):
    x = np.array([[1 + t, 0.0, 1e-13]])
    want = [P.eg + t / SQRT2, 0, -t / SQRT2]
    assert np.allclose(R.value(x)[0], want, atol=1e-11)


def test_psi_examples():
    assert np.allclose(psi(np.array([1.0, 0.0])), [1.0, 0.0], atol=1e-14)
    a = 7 * np.pi / 8
    q = np.array([SQRT2 * np.sin(a), 1 + SQRT2 * np.cos(a)])
    assert np.allclose(psi(q), [np.sin(np.pi / 4), np.cos(np.pi / 4)], atol=1e-14)
    q = np.array([3 * np.sin(0.9 * np.pi), 1 + 3 * np.cos(0.9 * np.pi)])
    assert np.allclose(psi(q), q, atol=1e-14)
    with pytest.raises(OutOfDomain):
        psi(np.array([0.1, 1.0]))


def test_psi_orientation():
    R_, pb = np.meshgrid(np.linspace(SQRT2, 2 * SQRT2, 20)[1:-1], np.linspace(3 * np.pi / 4, np.pi, 22)[1:-1])
    q = np.stack([R_ * np.sin(pb), 1 + R_ * np.cos(pb)], -1).reshape(-1, 2)
    h = 1e-6
    dx = (psi(q + [h, 0]) - psi(q - [h, 0])) / (2 * h)
    dy = (psi(q + [0, h]) - psi(q - [0, h])) / (2 * h)
    assert np.all(dx[:, 0] * dy[:, 1] - dx[:, 1] * dy[:, 0] > 0)


def test_incompressibility():
    rows = incompressibility_check(P, n=2000, seed=0)
    for row in rows:
        assert row.max_analytic <= 1e-8 and row.max_fd <= 1e-4
        assert row.fd_points > 1000


def _ball_points(n, seed, rmin=1e-3):
    rng = np.random.default_rng(seed)
    p = rng.uniform(-2.9, 2.9, (4 * n, 3))
    return p[(np.linalg.norm(p, axis=1) < 2.9) & (np.hypot(p[:, 0], p[:, 1]) > rmin)][:n]


def test_positive_det_everywhere():
    p = _ball_points(10 ** 5, 1)
    assert R.profile(np.hypot(p[:, 0], p[:, 1]), p[:, 2]).det.min() > 0


def test_jets_against_finite_differences():
    p = _ball_points(4000, 2, rmin=0.02)
    p = p[stencil_inside(R.labels, p, 2e-5)]
    G = R.evaluate(p).grad
    D = fd_jacobian(R.value, p, h=1e-5, richardson=True, order=4)
    err = np.abs(G - D).max(axis=(1, 2)) / (1 + np.abs(D).max(axis=(1, 2)))
    assert err.max() < 1e-4


def test_interface_continuity():
    rng = np.random.default_rng(3)
    d = 1e-11
    t = rng.uniform(0.01, 0.99, 1000)
    e = P.eps
    checks = [
        (np.stack([e * t, 0 * t, -d + 0 * t], -1), np.stack([e * t, 0 * t, d + 0 * t], -1)),  # a'/c
        (np.stack([(e - d) + 0 * t, 0 * t, t], -1), np.stack([(e + d) + 0 * t, 0 * t, t], -1)),  # c/d
        (np.stack([e * t, 0 * t, 1 - d + 0 * t], -1), np.stack([e * t, 0 * t, 1 + d + 0 * t], -1)),  # c/e'
    ]
    ph = np.pi / 2 + t * np.pi / 2 * 0.999
    n = np.stack([np.sin(ph), 0 * ph, np.cos(ph)], -1)
    checks += [((e - d) * n, (e + d) * n), ((1 - d) * n, (1 + d) * n)]  # a'/a and a/b
    for lo, hi in checks:
        assert np.abs(R.value(lo) - R.value(hi)).max() < 1e-8


def test_monotone_domination_in_a_eps():
    p = _ball_points(10 ** 5, 4) / 2.9
    p = p[R.labels(p) == "a_eps"][:10 ** 4]
    assert len(p) == 10 ** 4
    d_eps = R.profile(np.hypot(p[:, 0], p[:, 1]), p[:, 2]).det
    assert np.all(d_eps >= L.det(p) * (1 - 1e-12))


def test_pointwise_convergence():
    p = _ball_points(4000, 5, rmin=0.3)[:100]
    consts = []
    for eps in (0.1, 1e-2, 1e-3, 1e-4):
        q = RecoveryParams(eps)
        gap = np.linalg.norm(RecoveryMap(q).value(p) - L.value(p), axis=1).max()
        consts.append(gap / q.eg)
    # the gap is exactly the 6 eps^gamma shift of region f at the worst probe
    assert max(consts) <= 6 + 1e-9
    assert np.all(np.diff(consts) <= 1e-9)
