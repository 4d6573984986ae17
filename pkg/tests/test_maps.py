import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pesinlab.errors import CriticalProximity, PreconditionError, SchemaError, StepTooLarge
from pesinlab.geometry import INFINITY
from pesinlab.maps import (
    Blaschke,
    ClusteredRootsWarning,
    ExpFamily,
    FatouBaker,
    Polynomial,
    SineFamily,
    derivative,
    difference_function,
    evaluate,
    evaluate_mp,
    lift_offsets,
    map_from_dict,
    preimage_continue,
    preimages_all,
    singular_data,
)

CATALOG = [
    Polynomial.quadratic(-0.1),
    Polynomial((0.3 + 0.2j, 1, -0.5, 0.25)),
    Blaschke((0.0, 0.5)),
    Blaschke((0.3 + 0.1j, -0.2j, 0.6), np.exp(0.7j)),
    ExpFamily(0.3),
    SineFamily(1.2 + 0.1j),
    FatouBaker(),
]


def test_evaluate_examples():
    assert evaluate(Polynomial.monomial(2), 2) == 4
    assert evaluate(FatouBaker(), 0) == 1
    assert evaluate(Blaschke((0,)), 1j) == 1j


def test_overflow_reported_as_infinity():
    assert evaluate(ExpFamily(1.0), 1000.0) is INFINITY


def test_derivative_examples():
    assert derivative(FatouBaker(), 0) == 0
    assert derivative(Polynomial.quadratic(0.7), 3) == 6
    th = np.linspace(0, 2 * np.pi, 9)
    assert np.allclose(np.abs(Blaschke.power(2).derivative(np.exp(1j * th))), 2.0, rtol=1e-14)


def test_invariants_enforced():
    with pytest.raises(PreconditionError):
        Polynomial((1, 1))
    with pytest.raises(PreconditionError):
        Blaschke((1.0,))
    with pytest.raises(PreconditionError):
        Blaschke((0.1,), 1.1)


def test_singular_data_examples():
    assert singular_data(Polynomial.quadratic(0.25 - 0.3j)).critical_values == (0.25 - 0.3j,)
    sd = singular_data(SineFamily(1.0))
    assert sorted(v.real for v in sd.critical_values) == [-1.0, 1.0]
    sd = singular_data(ExpFamily(0.3))
    assert sd.asymptotic_values == (0j,) and sd.critical_values == ()
    fb = singular_data(FatouBaker())
    # 1 + 2πik with |2πk| <= 8π, i.e. k = -4..4
    assert len(fb.critical_values) == 9
    assert all(abs(v.real - 1) < 1e-15 for v in fb.critical_values)


@pytest.mark.parametrize("f", [m for m in CATALOG if m.degree], ids=repr)
def test_critical_values_are_images_of_critical_points(f):
    sd = singular_data(f)
    cps = np.array(sd.critical_points)
    assert np.all(np.abs(f.derivative(cps)) < 1e-10 * (1 + np.abs(cps)) ** f.degree)
    assert np.allclose(f(cps), np.array(sd.critical_values), atol=1e-12)


def test_preimage_examples():
    assert sorted(preimages_all(Polynomial.monomial(2), 4).real) == pytest.approx([-2, 2], abs=1e-14)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClusteredRootsWarning)
        roots = preimages_all(Polynomial.monomial(2), 0)
    assert len(roots) == 2 and np.all(np.abs(roots) < 1e-7)
    # z^2 + 0.25 = 0.5 has roots ±0.5
    roots = preimages_all(Polynomial.quadratic(0.25), 0.5)
    assert sorted(roots.real) == pytest.approx([-0.5, 0.5], abs=1e-14)


def test_clustered_fiber_warns():
    with pytest.warns(ClusteredRootsWarning):
        preimages_all(Polynomial.monomial(2), 0)


coord = st.floats(-1.5, 1.5, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([m for m in CATALOG if m.degree]), coord, coord)
def test_preimage_completeness(f, x, y):
    w = complex(x, y)
    if isinstance(f, Blaschke) and abs(w) > 0.999:
        w = 0.9 * w / abs(w)
    roots = preimages_all(f, w, warn=False)
    assert len(roots) == f.degree
    assert np.all(np.abs(f(roots) - w) < 1e-10 * (1 + abs(w)))


@pytest.mark.parametrize("f", CATALOG, ids=repr)
def test_derivative_matches_finite_differences(f):
    rng = np.random.default_rng(5)
    z = rng.uniform(-0.9, 0.9, 1000) + 1j * rng.uniform(-0.9, 0.9, 1000)
    if isinstance(f, Blaschke):
        z = z * 0.95 / np.maximum(1, np.abs(z))
    h = 1e-6
    fd = (f(z + h) - f(z - h)) / (2 * h)
    d = f.derivative(z)
    assert np.all(np.abs(fd - d) <= 1e-6 * np.maximum(np.abs(d), 1e-2))


def test_continuation_examples():
    f = Polynomial.monomial(2)
    assert preimage_continue(f, [4, 4], 2) == pytest.approx(2)
    path = np.linspace(4, 1, 50)
    assert preimage_continue(f, path, 2) == pytest.approx(1, abs=1e-12)
    loop = np.exp(2j * np.pi * np.linspace(0, 1, 200))
    assert preimage_continue(f, loop, 1) == pytest.approx(-1, abs=1e-12)


def test_continuation_errors():
    f = Polynomial.monomial(2)
    with pytest.raises(PreconditionError):
        preimage_continue(f, [4, 1], 3)
    with pytest.raises(StepTooLarge):
        preimage_continue(f, [1, -1], 1)
    with pytest.raises(CriticalProximity):
        preimage_continue(f, [0, 0.1], 0)
    # walking into the critical value obstructs the branch one way or the other
    with pytest.raises((CriticalProximity, StepTooLarge)):
        preimage_continue(f, np.linspace(1, 0, 1001), 1)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(-3.0, 3.0), st.integers(8, 40))
def test_continuation_refinement_consistency(radius, turn, n):
    f = Polynomial.quadratic(-0.1)
    seed = 0.9 + 0.3j
    w0 = complex(f(np.asarray(seed)))
    t = np.linspace(0, 1, n)
    path = w0 + radius * (np.exp(1j * turn * t) - 1) * 0.3
    try:
        coarse = preimage_continue(f, path, seed)
    except (StepTooLarge, CriticalProximity):
        return
    fine_path = np.interp(np.linspace(0, 1, 2 * n - 1), t, path.real) + 1j * np.interp(
        np.linspace(0, 1, 2 * n - 1), t, path.imag)
    fine = preimage_continue(f, fine_path, seed)
    assert abs(coarse - fine) < 1e-9


@pytest.mark.parametrize("f", [Polynomial((0.3, 0.2j, 1, -0.4)), Blaschke((0.0, 0.5 + 0.2j))], ids=repr)
def test_difference_function_matches_direct_difference(f):
    x = 0.4 + 0.3j
    for delta in (1e-3, 1e-1, 0.2j):
        direct = complex(f(np.asarray(x + delta)) - f(np.asarray(x)))
        assert complex(difference_function(f, x)(np.asarray(delta))) == pytest.approx(direct, rel=1e-12)
    # far below double spacing the difference is linear
    tiny = 1e-40
    assert complex(difference_function(f, x)(np.asarray(tiny))) == pytest.approx(
        complex(f.derivative(np.asarray(x))) * tiny, rel=1e-12)


def test_lift_offsets_agrees_with_continuation():
    f = Polynomial.quadratic(-0.1)
    base = 0.9 + 0.3j
    target = np.linspace(0, 0.05 + 0.02j, 20)
    off = lift_offsets(f, base, target[None, :])[0]
    direct = preimage_continue(f, complex(f(np.asarray(base))) + target, base, return_path=True)
    assert np.allclose(base + off, direct, atol=1e-13)


def test_mp_evaluation_matches_double():
    f = Blaschke((0.3 + 0.1j, -0.2j))
    z = 0.4 - 0.2j
    assert complex(evaluate_mp(f, z)) == pytest.approx(complex(f(np.asarray(z))), rel=1e-14)


@pytest.mark.parametrize("f", CATALOG, ids=repr)
def test_config_round_trip(f):
    assert map_from_dict(f.to_dict()) == f


def test_config_rejects_unknown_family_and_key():
    with pytest.raises(SchemaError):
        map_from_dict({"family": "cosine"})
    with pytest.raises(SchemaError):
        map_from_dict({"family": "exp", "lam": 1, "mu": 2})
