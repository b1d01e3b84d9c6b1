import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dipolelab.errors import OutOfDomain
from dipolelab.geometry import (
    ALL_REGIONS,
    LIMIT_REGIONS,
    RECOVERY_REGIONS,
    CartesianPoint,
    cart_to_cyl,
    cart_to_sph,
    classify_limit,
    classify_recovery,
    cyl_frame,
    cyl_to_cart,
    sph_frame,
    sph_to_cart,
    POLE,
)
from dipolelab.limit_map import LimitMap
from dipolelab.quadrature import QuadSpec, integrate_region
from dipolelab.recovery_map import RecoveryMap, RecoveryParams

EPS = 0.05
coord = st.floats(-2.9, 2.9, allow_nan=False)


def test_axis_aligned_point():
    assert np.allclose(cart_to_cyl(CartesianPoint(1.0, 0.0, 0.0)), [1.0, 0.0, 0.0])


def test_pole_in_spherical_coordinates():
    rho, _, phi = cart_to_sph(POLE)
    assert rho == 1.0 and phi == 0.0


def test_axis_points_get_theta_zero():
    assert cart_to_cyl(np.array([0.0, 0.0, 2.0]))[1] == 0.0


def test_round_trips():
    p = np.random.default_rng(0).uniform(-3, 3, (1000, 3))
    assert np.abs(cyl_to_cart(cart_to_cyl(p)) - p).max() < 1e-12
    for c in (np.zeros(3), POLE):
        assert np.abs(sph_to_cart(cart_to_sph(p, c), c) - p).max() < 1e-12


@given(st.floats(0, 2 * np.pi), st.floats(1e-3, np.pi - 1e-3))
def test_frames_orthonormal_and_right_handed(theta, phi):
    for F in (cyl_frame(theta), sph_frame(theta, phi)):
        assert np.abs(F.T @ F - np.eye(3)).max() < 1e-12
        assert abs(np.linalg.det(F) - 1) < 1e-12
    F = sph_frame(theta, phi)
    # e_rho ^ e_phi = e_theta
    assert np.allclose(np.cross(F[:, 0], F[:, 1]), F[:, 2], atol=1e-12)


@pytest.mark.parametrize("p,region", [((0, 0, -0.5), "a"), ((0, 0, 0.5), "d"), ((0, 0, 1.5), "e"),
                                      ((0, 0, -2.0), "b"), ((2.0, 0, 1.5), "f")])
def test_limit_classification(p, region):
    assert classify_limit(CartesianPoint(*p)) == region


@pytest.mark.parametrize("p,region", [((EPS / 2, 0, 0.5), "c_eps"), ((0, 0, -EPS / 2), "a_prime_eps"),
                                      ((2 * EPS, 0, 0.5), "d_eps"), ((0, 0, 1 + EPS / 2), "e_prime_eps"),
                                      ((0, 0, -0.5), "a_eps"), ((0, 0, 1.5), "e_eps")])
def test_recovery_classification(p, region):
    assert classify_recovery(CartesianPoint(*p), RecoveryParams(EPS)) == region


def test_interface_tie_break():
    # x3 = 0 on the unit sphere belongs to a, x3 = 1 at r = 0.5 to d
    assert classify_limit(np.array([1.0, 0.0, 0.0])) == "a"
    assert classify_limit(np.array([0.5, 0.0, 1.0])) == "d"


def test_out_of_domain():
    with pytest.raises(OutOfDomain):
        classify_limit(np.array([0.0, 0.0, 3.5]))


def test_recovery_atlas_partitions_ball():
    rng = np.random.default_rng(1)
    p = rng.uniform(-3, 3, (10 ** 6, 3))
    p = p[np.linalg.norm(p, axis=1) < 3]
    lab = classify_recovery(p, RecoveryParams(EPS))
    assert set(np.unique(lab)) <= set(RECOVERY_REGIONS)
    # open regions are disjoint: count the defining open conditions each point satisfies
    c = cart_to_cyl(p)
    r, x3 = c[:, 0], c[:, 2]
    ro, rp = np.hypot(r, x3), np.hypot(r, x3 - 1)
    conds = [
        (r < EPS) & (x3 > 0) & (x3 < 1),
        (ro < EPS) & (x3 < 0),
        (rp < EPS) & (x3 > 1),
        (ro > EPS) & (ro < 1) & (x3 < 0),
        (rp > EPS) & (rp < 1) & (x3 > 1),
        (ro > 1) & (x3 < 0),
        (r > EPS) & (x3 > 0) & (x3 < 1),
        (rp > 1) & (x3 > 1),
    ]
    assert np.max(np.sum(conds, axis=0)) == 1
    assert set(LIMIT_REGIONS) | set(RECOVERY_REGIONS) == set(ALL_REGIONS)


def _volume(map_, region):
    total = 0.0
    for ch in map_.charts():
        if ch.region == region:
            total += integrate_region(ch, lambda pe: np.ones_like(pe.r), QuadSpec(atol=1e-14, rtol=1e-11), map_).value
    return total


@pytest.mark.parametrize("region,volume", [("c_eps", np.pi * EPS ** 2), ("a_prime_eps", 2 * np.pi * EPS ** 3 / 3),
                                           ("a_eps", 2 * np.pi * (1 - EPS ** 3) / 3)])
def test_chart_volumes(region, volume):
    assert abs(_volume(RecoveryMap(RecoveryParams(EPS)), region) / volume - 1) < 1e-8


def test_limit_charts_cover_ball():
    L = LimitMap()
    total = sum(_volume(L, reg) for reg in LIMIT_REGIONS)
    assert abs(total / (36 * np.pi) - 1) < 1e-8
