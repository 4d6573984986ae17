import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pesinlab.errors import DegenerateTransform, PreconditionError
from pesinlab.geometry import (
    INFINITY,
    Disk,
    MobiusTransform,
    koebe_distortion_factors,
    koebe_quarter_radius,
    koebe_suite_check,
    mobius_apply,
    mobius_derivative_modulus,
    spherical_distance,
    univalent_catalog,
    winding_number,
)

coord = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
cplx = st.builds(complex, coord, coord)


def test_puncture_mobius_fixes_unit_boundary_point():
    m = MobiusTransform.puncture(0, 1.0)
    assert mobius_apply(m, 1.0) == 1
    assert mobius_apply(m, 2.0) == 0.5


def test_identity_mobius():
    assert mobius_apply(MobiusTransform.identity(), 3 + 4j) == 3 + 4j
    assert mobius_derivative_modulus(MobiusTransform.identity(), 7 - 2j) == 1


def test_pole_and_infinity_marker():
    m = MobiusTransform.puncture(0.5, 1.0)
    assert mobius_apply(m, 0.5) is INFINITY
    assert mobius_apply(m, INFINITY) == 0
    assert m.pole == 0.5


def test_degenerate_transform_rejected():
    with pytest.raises(DegenerateTransform):
        MobiusTransform(1, 2, 2, 4)


def test_puncture_derivative_modulus():
    m = MobiusTransform.puncture(0, 1.0)
    assert mobius_derivative_modulus(m, 2.0) == pytest.approx(0.25, rel=1e-15)
    th = np.linspace(0, 2 * np.pi, 17)
    assert np.allclose(mobius_derivative_modulus(m, np.exp(1j * th)), 1.0, rtol=1e-14)


def test_quarter_radius_constants():
    assert koebe_quarter_radius(1.0, 1.0) == 0.25
    assert koebe_quarter_radius(2.0, 0.5) == 0.25
    with pytest.raises(PreconditionError):
        koebe_quarter_radius(0.0, 1.0)


@pytest.mark.parametrize("lam,expected", [(0.0, (1.0, 1.0)), (0.5, (4 / 27, 12.0)), (1 / 3, (0.28125, 4.5))])
def test_distortion_factors(lam, expected):
    lo, hi = koebe_distortion_factors(lam)
    assert lo == pytest.approx(expected[0], rel=1e-14)
    assert hi == pytest.approx(expected[1], rel=1e-14)


def test_distortion_factor_rejects_lambda_one():
    with pytest.raises(PreconditionError):
        koebe_distortion_factors(1.0)


def test_koebe_function_image_contains_quarter_disk():
    # winding-number containment of D(0, 0.2475) in k(D(0, 0.99))
    th = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
    z = 0.99 * np.exp(1j * th)
    boundary = z / (1 - z) ** 2
    test = 0.2475 * (1 - 1e-9) * np.exp(1j * (th + 1e-4))
    assert np.all(winding_number(boundary, test) == 1)


@pytest.mark.parametrize("entry", univalent_catalog(), ids=lambda e: e[0])
def test_catalog_koebe_suite(entry):
    name, phi, dphi, center, r = entry
    rep = koebe_suite_check(name, phi, dphi, center, r, lam=0.5, n_samples=10_000, seed=3)
    assert rep.passed, rep
    assert rep.worst_sandwich_ratio <= 1 + 1e-12


def test_disk_invariants():
    with pytest.raises(PreconditionError):
        Disk(0, 0.0)
    with pytest.raises(PreconditionError):
        Disk(0, math.inf)
    assert Disk(1j, 1).contains(0.5j)


def test_image_disk_of_puncture_map():
    m = MobiusTransform.puncture(0, 1.0)
    img = m.image_disk(Disk(3, 1))
    # the image of D(3, 1) under 1/z is the disk with diameter [1/4, 1/2]
    assert img.center == pytest.approx(0.375, abs=1e-14)
    assert img.radius == pytest.approx(0.125, abs=1e-14)


def test_spherical_distance_to_infinity():
    assert spherical_distance(INFINITY, INFINITY) == 0
    assert spherical_distance(0, INFINITY) == pytest.approx(2.0)
    assert spherical_distance(1, -1) == pytest.approx(2.0)


def _normalized(a, b, c, d):
    """Scale to determinant 1, or None when nearly degenerate."""
    det = a * d - b * c
    if abs(det) < 1e-2 * max(abs(a), abs(b), abs(c), abs(d), 1e-1) ** 2:
        return None
    s = np.sqrt(complex(det))
    return MobiusTransform(a / s, b / s, c / s, d / s)


@settings(max_examples=1000, deadline=None)
@given(cplx, cplx, cplx, cplx, cplx)
def test_mobius_round_trip(a, b, c, d, z):
    m = _normalized(a, b, c, d)
    if m is None or abs(m.c * z + m.d) < 0.1:
        return
    back = mobius_apply(m.inverse(), mobius_apply(m, z))
    assert abs(back - z) < 1e-10 * (1 + abs(z))


@settings(max_examples=300, deadline=None)
@given(cplx, cplx, cplx, cplx, cplx, cplx, cplx, cplx, cplx)
def test_composition_derivative_chain_rule(a, b, c, d, e, f, g, h, z):
    for p, q, r, s in ((a, b, c, d), (e, f, g, h)):
        if abs(p * s - q * r) < 1e-2 * max(abs(p), abs(q), abs(r), abs(s), 1e-1) ** 2:
            return
    m1, m2 = MobiusTransform(a, b, c, d), MobiusTransform(e, f, g, h)
    if abs(c * z + d) < 1e-2:
        return
    w = mobius_apply(m1, z)
    if w is INFINITY or abs(g * w + h) < 1e-2:
        return
    lhs = mobius_derivative_modulus(m2.compose(m1), z)
    rhs = mobius_derivative_modulus(m2, w) * mobius_derivative_modulus(m1, z)
    assert lhs == pytest.approx(rhs, rel=1e-10)
