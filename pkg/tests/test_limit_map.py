import numpy as np
import pytest

from dipolelab.geometry import limit_labels_rz
from dipolelab.kernels import determinant, fd_jacobian, stencil_inside
from dipolelab.limit_map import LimitMap, LimitMapConfig, distance_to_bubble, region_d_g

L = LimitMap()


def _pt(*xyz):
    return np.array([xyz], dtype=float)


@pytest.mark.parametrize("p,u", [((0, 0, -0.5), (0, 0, 0.5)), ((0, 0, -2), (0, 0, -1)), ((0, 0, 1.5), (0, 0, 1.5))])
def test_axis_values(p, u):
    assert np.allclose(L.value(_pt(*p))[0], u, atol=1e-14)


@pytest.mark.parametrize("p,det", [((1e-9, 0, -0.5), 1.0), ((1e-9, 0, -2), 1 / 16), ((1e-9, 0, 1.5), 9.0)])
def test_closed_form_determinants_on_axis(p, det):
    assert abs(L.det(_pt(*p))[0] - det) < 1e-6 * det


@pytest.mark.parametrize("rx,sz", [((1, 0), (0, 0)), ((0, 0), (0, 1)), ((0, 1), (0, 2)), ((1, 1), (0, 3)),
                                   ((2, 0), (1, 0)), ((2, 0.5), (1.5, 1.5))])
def test_region_d_corners(rx, sz):
    s, z, _ = region_d_g(np.array([rx[0]]), np.array([rx[1]]))
    assert abs(s[0] - sz[0]) < 1e-12 and abs(z[0] - sz[1]) < 1e-12


def test_fan_jacobian_bounds():
    g = (np.arange(200) + 0.5) / 200
    R, X = np.meshgrid(np.concatenate([g, 1 + 2 * g]), g)
    _, _, J = region_d_g(R.ravel(), X.ravel())
    d = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    assert d.min() > 1 / 50 and d.max() < 50


def test_config_validation():
    with pytest.raises(ValueError):
        LimitMapConfig(fan_center=(0.5, 0.5))


def _sample(n, seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(-3, 3, (4 * n, 3))
    p = p[(np.linalg.norm(p, axis=1) < 2.95) & (np.hypot(p[:, 0], p[:, 1]) > 1e-3)]
    return p[:n]


def test_orientation_and_det_agreement():
    p = _sample(10 ** 5, 0)
    d = L.det(p)
    assert d.min() > 0
    G = L.evaluate(p).grad
    # relative agreement, with a rounding floor where det nearly cancels (det ~ 1e-11 close to |x| = 1)
    floor = 1e-14 * np.linalg.norm(G, axis=(1, 2)) ** 3
    assert np.all(np.abs(determinant(G) - d) <= 1e-8 * d + floor)


def test_jets_against_finite_differences():
    p = _sample(3000, 1)
    ok = stencil_inside(L.labels, p, 2e-5)
    p = p[ok]
    D = fd_jacobian(L.value, p, h=1e-5, richardson=True, order=4)
    G = L.evaluate(p).grad
    err = np.abs(G - D).max(axis=(1, 2)) / (1 + np.abs(D).max(axis=(1, 2)))
    assert err.max() < 1e-4
    for tag in "abdef":
        assert np.sum(L.labels(p) == tag) > 50


def test_region_a_fd_example():
    p = _pt(0.3, 0, -0.4)
    D = fd_jacobian(L.value, p, h=1e-5)
    assert np.abs(D - L.evaluate(p).grad).max() < 1e-5


def _interface_pairs(n, rng):
    t = rng.uniform(0, 1, n)
    d = 1e-11
    pairs = []
    r = 1 + 1.7 * t  # b/d at x3 = 0 and d/f at x3 = 1
    pairs.append((np.stack([r, 0 * r, -d + 0 * r], -1), np.stack([r, 0 * r, d + 0 * r], -1)))
    pairs.append((np.stack([r, 0 * r, 1 - d + 0 * r], -1), np.stack([r, 0 * r, 1 + d + 0 * r], -1)))
    ph = np.pi / 2 + t * np.pi / 2 * 0.999  # a/b on the unit sphere about O
    n_ = np.stack([np.sin(ph), 0 * ph, np.cos(ph)], -1)
    pairs.append(((1 - d) * n_, (1 + d) * n_))
    ph = t * np.pi / 2 * 0.999  # e/f on the unit sphere about P
    n_ = np.stack([np.sin(ph), 0 * ph, np.cos(ph)], -1)
    P = np.array([0, 0, 1.0])
    pairs.append((P + (1 - d) * n_, P + (1 + d) * n_))
    return pairs


def test_interface_continuity():
    rng = np.random.default_rng(2)
    for lo, hi in _interface_pairs(1000, rng):
        assert np.abs(L.value(lo) - L.value(hi)).max() < 1e-9


def test_bubble_identity_near_center_points():
    rng = np.random.default_rng(3)
    ph = rng.uniform(0.01, np.pi / 2 - 0.01, 50)
    n = np.stack([np.sin(ph), 0 * ph, np.cos(ph)], -1)
    for t in (1e-2, 1e-3, 1e-4):
        dist_p = distance_to_bubble(L.value(np.array([0, 0, 1.0]) + t * n))
        assert dist_p.max() <= 3 * t
    # region a, direction with x3 < 0
    m = np.stack([np.sin(ph), 0 * ph, -np.cos(ph)], -1)
    d1 = distance_to_bubble(L.value(1e-3 * m)).max()
    d2 = distance_to_bubble(L.value(1e-4 * m)).max()
    assert d1 <= 3e-3 and d2 <= 3e-4 and d2 < d1


def test_injectivity_probe():
    p = _sample(2 * 10 ** 5, 5)
    q = p[10 ** 5:2 * 10 ** 5]
    p = p[:10 ** 5]
    far = np.linalg.norm(p - q, axis=1) > 1e-3
    gap = np.linalg.norm(L.value(p[far]) - L.value(q[far]), axis=1)
    assert gap.min() > 0


def test_labels_cover_every_region():
    r, x3 = np.meshgrid(np.linspace(0.01, 2.5, 60), np.linspace(-2, 2.5, 60))
    keep = np.hypot(r, x3) < 3
    r, x3 = r[keep], x3[keep]
    assert set(np.unique(limit_labels_rz(r.ravel(), x3.ravel()))) == set("abdef")
