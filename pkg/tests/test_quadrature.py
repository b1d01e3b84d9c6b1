import numpy as np
import pytest
from scipy import integrate as si

from dipolelab.quadrature import QuadSpec, integrate_1d, integrate_2d, integrate_sphere, revolve_arc_area

SPEC = QuadSpec(atol=1e-12, rtol=1e-10)

# calibration set: smooth, endpoint-singular and kinked integrands with known values
CAL_1D = [
    (lambda x: np.exp(x), (0.0, 1.0), np.e - 1, (), ()),
    (lambda x: np.sin(x) ** 2, (0.0, np.pi), np.pi / 2, (), ()),
    (lambda x: 1 / (1 + x ** 2), (0.0, 1.0), np.pi / 4, (), ()),
    (lambda x: np.log(x), (0.0, 1.0), -1.0, (0,), ()),
    (lambda x: x ** -0.5, (0.0, 1.0), 2.0, (0,), ()),
    (lambda x: np.abs(x - 1 / 3), (0.0, 1.0), 5 / 18, (), (1 / 3,)),
    (lambda x: np.sqrt(1 - x), (0.0, 1.0), 2 / 3, (1,), ()),
]
CAL_2D = [
    (lambda x, y: x * y, ((0, 1), (0, 1)), 0.25),
    (lambda x, y: np.exp(-(x ** 2 + y ** 2)), ((0, 3), (0, 3)), None),
    (lambda x, y: np.cos(x + y), ((0, np.pi), (0, 1)), None),
]


@pytest.mark.parametrize("f,box,exact,grade,breaks", CAL_1D)
def test_1d_calibration(f, box, exact, grade, breaks):
    res = integrate_1d(f, box, SPEC, grade=grade, breaks=breaks)
    assert abs(res.value - exact) <= 10 * SPEC.tol(exact)
    assert res.error_estimate <= SPEC.tol(exact)


@pytest.mark.parametrize("f,box,exact", CAL_2D)
def test_2d_calibration_against_scipy(f, box, exact):
    if exact is None:
        exact, _ = si.dblquad(lambda y, x: f(x, y), *box[0], *box[1], epsabs=1e-13, epsrel=1e-12)
    res = integrate_2d(f, box, SPEC)
    assert abs(res.value - exact) <= 10 * SPEC.tol(exact)


def test_halving_tolerance_moves_estimate_little():
    f = lambda x: x ** -0.5 * np.cos(x)
    a = integrate_1d(f, (0.0, 1.0), QuadSpec(atol=1e-8, rtol=1e-8), grade=(0,))
    b = integrate_1d(f, (0.0, 1.0), QuadSpec(atol=5e-9, rtol=5e-9), grade=(0,))
    assert abs(a.value - b.value) <= 2e-8 * abs(b.value)


def test_sphere_area_and_axisymmetric_route():
    one = lambda x, n: np.ones(len(x))
    full = integrate_sphere((0, 0, 1), 0.3, one, SPEC)
    axi = integrate_sphere((0, 0, 1), 0.3, one, SPEC, axisymmetric=True)
    assert abs(full.value - 4 * np.pi * 0.09) < 1e-10
    assert abs(axi.value - full.value) < 1e-10


def test_outward_normal_flux():
    # divergence theorem for x: flux = 3 * volume
    res = integrate_sphere((0.2, 0, 0), 0.5, lambda x, n: np.sum(x * n, axis=1), SPEC)
    assert abs(res.value - 4 * np.pi * 0.125) < 1e-9


def test_revolved_cone_area():
    assert abs(revolve_arc_area([(0, 1), (1, 0)]) - np.pi * np.sqrt(2)) < 1e-12
    assert revolve_arc_area([(1.0, 0.0)]) == 0.0


def test_invalid_quadrature_settings():
    with pytest.raises(ValueError):
        QuadSpec(atol=0)
