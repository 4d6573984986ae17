import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from pesinlab.errors import HypothesisViolated, PreconditionError, PunctureHit, ResolutionTooCoarse
from pesinlab.rho import (
    RhoConfig,
    ThinSVParams,
    random_admissible,
    rho_density,
    rho_distance,
    rho_inclusion_check,
    separated_subset,
    thin_families,
    thin_sv_check,
)
from pesinlab.rng import substream

UNIT = RhoConfig((0j,), 1.0)
TWO = RhoConfig((0j, 3 + 1j), 0.5)


def test_density_examples():
    assert rho_density(UNIT, 0.5) == pytest.approx(4.0)
    assert rho_density(UNIT, 1.0) == 1.0
    assert rho_density(UNIT, 100.0) == 1.0
    with pytest.raises(PunctureHit):
        rho_density(UNIT, 1e-15)


def test_density_continuous_across_puncture_circle():
    th = np.linspace(0, 2 * np.pi, 33)
    inside = rho_density(UNIT, (1 - 1e-9) * np.exp(1j * th))
    assert np.allclose(inside, 1.0, atol=1e-8)


def test_config_rejects_crowded_punctures():
    with pytest.raises(PreconditionError):
        RhoConfig((0j, 0.25), 0.1)
    with pytest.raises(PreconditionError):
        RhoConfig((0j,), 0.0)


def test_distance_examples():
    assert rho_distance(UNIT, 2 + 1j, 2 + 1j) == 0
    assert rho_distance(UNIT, 2 + 0j, 2 + 3j) == pytest.approx(3.0, rel=1e-12)


def test_radial_distance_against_closed_form_integral():
    oracle, _ = integrate.quad(lambda t: 1 / t ** 2, 0.25, 0.5)
    assert oracle == pytest.approx(2.0, rel=1e-12)
    assert rho_distance(UNIT, 0.25, 0.5) == pytest.approx(oracle, rel=1e-6)


def test_distance_through_a_puncture_disk_is_finite_and_at_least_euclidean():
    d = rho_distance(UNIT, -2 + 0.01j, 2)
    assert np.isfinite(d) and d >= 4


coord = st.floats(-4, 4, allow_nan=False)
point = st.builds(complex, coord, coord)


def _clear(z):
    return np.min(np.abs(TWO.centers - z)) > 1e-3


@settings(max_examples=300, deadline=None)
@given(point, point, point)
def test_pseudometric_on_triples(a, b, c):
    if not (_clear(a) and _clear(b) and _clear(c)):
        return
    ab, ba = rho_distance(TWO, a, b), rho_distance(TWO, b, a)
    assert ab == ba
    assert ab <= rho_distance(TWO, a, c) + rho_distance(TWO, c, b) + 1e-6
    assert ab >= abs(a - b) * (1 - 1e-12)


@settings(max_examples=200, deadline=None)
@given(point, point)
def test_equality_when_segment_avoids_punctures(a, b):
    seg = a + (b - a) * np.linspace(0, 1, 2001)
    if np.min(np.abs(seg[:, None] - TWO.centers[None, :])) <= TWO.epsilon * 1.001:
        return
    assert rho_distance(TWO, a, b) == pytest.approx(abs(a - b), rel=1e-12)


def test_inclusion_examples():
    rep = rho_inclusion_check(RhoConfig((), 1.0), 0.3, 0.2)
    assert rep.passed and rep.worst_upper_ratio <= 1 / 16 + 1e-12
    assert rep.worst_lower_ratio == pytest.approx(1.0)
    assert rho_inclusion_check(UNIT, 0.5, 0.1, seed=2).passed
    with pytest.raises(HypothesisViolated):
        rho_inclusion_check(UNIT, 0.1, 0.1)


def test_inclusion_inside_puncture_disk_by_direct_sampling():
    # direct oracle: rho-distances from 0.5 to samples of D(0.5, 0.1) via quadrature along rays
    x, r = 0.5, 0.1
    rng = np.random.default_rng(0)
    y = x + r * np.sqrt(rng.uniform(0, 1, 64)) * np.exp(2j * np.pi * rng.uniform(0, 1, 64))
    seg = np.array([integrate.quad(lambda t, w=w: 1 / abs(x + t * (w - x)) ** 2, 0, 1)[0] * abs(w - x) for w in y])
    dist = rho_distance(UNIT, x, y)
    assert np.all(dist <= seg * (1 + 1e-6))
    assert np.all(dist <= 16 * r * rho_density(UNIT, x))


def test_random_admissible_configurations():
    bad = 0
    for i in range(300):
        cfg, x, r = random_admissible(substream(9, i))
        bad += rho_inclusion_check(cfg, x, r, 256, seed=i).violations
    assert bad == 0


def test_separated_subset_examples():
    assert list(separated_subset([0, 1, 2], 1.5)) == [0, 2]
    assert list(separated_subset([3j], 0.1)) == [3j]
    assert separated_subset([], 0.1).size == 0
    with pytest.raises(PreconditionError):
        separated_subset([0], 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(point, max_size=60), st.floats(0.05, 2.0))
def test_separated_subset_is_separated_and_maximal(points, delta):
    out = separated_subset(points, delta)
    if out.size > 1:
        gaps = np.abs(out[:, None] - out[None, :])[np.triu_indices(out.size, 1)]
        assert gaps.min() >= delta * (1 - 1e-12)
    for p in points:
        assert np.min(np.abs(out - p)) < delta or np.any(out == p)


def test_thin_check_empty_set_passes():
    circle = np.exp(2j * np.pi * np.arange(4096) / 4096)
    v = thin_sv_check(np.array([], dtype=complex), circle, RhoConfig((), 0.1), ThinSVParams(0.5, 0, 0.1, 8))
    assert v.passed


def test_thin_check_one_value_per_scale():
    mu, N = 0.5, 8
    n = np.arange(1, N + 1)
    svs = (1 + mu ** n).astype(complex)
    circle = np.append(np.exp(2j * np.pi * np.arange(4096) / 4096), 1)
    v = thin_sv_check(svs, circle, RhoConfig((), 0.1), ThinSVParams(mu, 1, 0.1, N))
    assert v.condition_a
    # direct count oracle: the values within mu^n of the circle are 1 + mu^k for k >= n,
    # a set of diameter below mu^n, so the greedy count is 1 at every scale
    assert v.counts == [1] * N


def test_thin_check_resolution_guard():
    coarse = np.exp(2j * np.pi * np.arange(16) / 16)
    with pytest.raises(ResolutionTooCoarse):
        thin_sv_check(np.array([1.1 + 0j]), coarse, RhoConfig((), 0.1), ThinSVParams(0.5, 1, 0.1, 10))


@pytest.mark.parametrize("fam", thin_families(), ids=lambda f: f.name)
def test_thin_families_classified(fam):
    v = thin_sv_check(fam.svs, fam.boundary, fam.cfg, fam.params, check_resolution=False)
    assert v.passed == fam.expected


def test_triangle_inequality_on_random_triples():
    cfg = RhoConfig((0j, 2 + 1j, -1.5 + 1.5j), 0.4)
    rng = np.random.default_rng(17)
    pts = rng.uniform(-3, 3, (1000, 3)) + 1j * rng.uniform(-3, 3, (1000, 3))
    keep = np.all(np.min(np.abs(pts[..., None] - cfg.centers), axis=-1) > 1e-3, axis=1)
    a, b, c = pts[keep].T
    ab, ac, cb = rho_distance(cfg, a, b), rho_distance(cfg, a, c), rho_distance(cfg, c, b)
    assert np.all(ab <= ac + cb + 1e-6)
    assert np.array_equal(ab, rho_distance(cfg, b, a))
