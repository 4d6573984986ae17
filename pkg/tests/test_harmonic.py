import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pesinlab.errors import BackendUnavailable, NonPositiveValue, PreconditionError
from pesinlab.geometry import Disk
from pesinlab.harmonic import (
    DomainSpec,
    arc_partition,
    beurling_bound_check,
    beurling_normalization,
    estimate_disk_measure,
    fit_decay_exponent,
    measure_from_points,
    partition_measures,
    shrinking_target_series,
    star_domain,
    wos_exit_points,
)
from pesinlab.maps import Polynomial

DISK = DomainSpec.unit_disk()


def test_unit_disk_chord_arc_value():
    est = estimate_disk_measure(DISK, Disk(1, 0.1), backend="riemann")
    assert est.value == pytest.approx(2 / math.pi * math.asin(0.05), abs=1e-15)
    assert est.value == pytest.approx(0.031844266473320, abs=1e-14)
    assert est.std_error == 0.0
    assert est.backend == "riemann"


def test_full_cover_is_one():
    assert estimate_disk_measure(DISK, Disk(1, 2), backend="riemann").value == 1.0
    assert estimate_disk_measure(DISK, Disk(5, 1), backend="riemann").value == 0.0


@pytest.mark.parametrize("r", [0.5, 0.1, 1e-3, 1e-6])
def test_unit_disk_closed_form_many_radii(r):
    est = estimate_disk_measure(DISK, Disk(1j, r), backend="riemann")
    assert abs(est.value - 2 / math.pi * math.asin(r / 2)) <= 1e-12


def test_off_center_basepoint_uses_poisson_kernel():
    # half-circle seen from b: 1/2 + (2/pi) atan(Im b / (1 - |b|^2)) style check via quadrature
    b = 0.3 + 0.2j
    dom = DomainSpec.unit_disk(b)
    target = Disk(1j, math.sqrt(2))  # trace is the upper half circle
    th = np.linspace(0, math.pi, 200_001)
    pk = (1 - abs(b) ** 2) / np.abs(np.exp(1j * th) - b) ** 2 / (2 * math.pi)
    ref = float(np.sum((pk[1:] + pk[:-1]) / 2 * np.diff(th)))
    assert estimate_disk_measure(dom, target, backend="riemann").value == pytest.approx(ref, abs=1e-9)


def test_wos_agrees_with_closed_form():
    target = Disk(1, 0.3)
    ref = estimate_disk_measure(DISK, target, backend="riemann").value
    est = estimate_disk_measure(DISK, target, 20_000, seed=4, backend="wos")
    assert est.backend == "wos"
    assert est.n_samples == 20_000
    assert abs(est.value - ref) <= 4 * est.std_error


def test_wos_is_deterministic_in_seed():
    a = estimate_disk_measure(DISK, Disk(1, 0.3), 2000, seed=9, backend="wos")
    b = estimate_disk_measure(DISK, Disk(1, 0.3), 2000, seed=9, backend="wos")
    assert a == b


def test_wos_exit_points_lie_on_boundary():
    pts = wos_exit_points(DISK, 2000, seed=1)
    assert np.all(np.abs(np.abs(pts) - 1) < 1e-5)


def test_preconditions():
    with pytest.raises(PreconditionError):
        estimate_disk_measure(DISK, Disk(1, 0.1), 999, backend="wos")
    with pytest.raises(PreconditionError):
        DomainSpec.unit_disk(1.5)
    with pytest.raises(PreconditionError):
        DomainSpec.sector(1.2)
    with pytest.raises(PreconditionError):
        DomainSpec.sampled_jordan([0, 1, 1j], 5 + 5j)


def test_backend_unavailable():
    star = star_domain(0)
    with pytest.raises(BackendUnavailable):
        estimate_disk_measure(star, Disk(1, 0.1), backend="riemann")
    basin = DomainSpec.poly_basin(Polynomial([0, 0, 1]))
    with pytest.raises(BackendUnavailable):
        estimate_disk_measure(basin, Disk(1, 0.1), 1000, backend="wos")


def test_basin_of_z_squared_is_uniform_on_circle():
    basin = DomainSpec.poly_basin(Polynomial([0, 0, 1]))
    target = Disk(1, 2 * math.sin(math.pi / 8))  # arc of length pi/2
    est = estimate_disk_measure(basin, target, 4000, seed=2)
    assert est.backend == "boettcher"
    assert abs(est.value - 0.25) <= 4 * est.std_error


def test_slit_and_sector_closed_form_slopes():
    radii = [1e-1, 1e-2, 1e-3, 1e-4]
    slit = DomainSpec.slit_plane(1.0)
    v = [estimate_disk_measure(slit, Disk(0, r), backend="riemann").value for r in radii]
    assert fit_decay_exponent(radii, v)[0] == pytest.approx(0.5, abs=0.01)
    sector = DomainSpec.sector(0.25, 1.0)
    v = [estimate_disk_measure(sector, Disk(0, r), backend="riemann").value for r in radii]
    assert fit_decay_exponent(radii, v)[0] == pytest.approx(2.0, abs=0.01)


def test_slit_closed_form_against_sqrt_map():
    # D(0, r) meets the slit in [-r, 0]; under sqrt it becomes the segment i[-sqrt r, sqrt r]
    r = 0.04
    ref = 2 * math.atan(math.sqrt(r)) / math.pi
    val = estimate_disk_measure(DomainSpec.slit_plane(1.0), Disk(0, r), backend="riemann").value
    assert val == pytest.approx(ref, abs=1e-14)


def test_fit_decay_exponent_synthetic():
    r = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    slope, err = fit_decay_exponent(r, r ** 2)
    assert slope == pytest.approx(2.0, abs=1e-12)
    assert err < 1e-10


def test_fit_decay_exponent_errors():
    with pytest.raises(NonPositiveValue):
        fit_decay_exponent([4, 3, 2, 1], [1, 0, 1, 1])
    with pytest.raises(PreconditionError):
        fit_decay_exponent([1, 2, 3, 4], [1, 1, 1, 1])
    with pytest.raises(PreconditionError):
        fit_decay_exponent([3, 2, 1], [1, 1, 1])


def test_beurling_vacuous_and_disk_family():
    rep = beurling_bound_check(DISK, [Disk(1, 2 ** -k) for k in range(1, 12)])
    assert rep.passed
    assert all(row["margin"] > 0 for row in rep.rows)
    # bound sqrt(2 r') is at least 2 once r' >= 2
    big = [row for row in rep.rows if row["r_normalized"] >= 2]
    assert all(row["bound"] >= 2 for row in big)


def test_beurling_normalization_diameter_two():
    star = star_domain(3)
    m = beurling_normalization(star)
    img = np.asarray(m(star.boundary_samples(2048)))
    diam = np.abs(img[:, None] - img[None, :]).max()
    assert diam == pytest.approx(2.0, rel=1e-6)
    assert m(star.basepoint) is not None


def test_beurling_on_star_domain():
    star = star_domain(5)
    rep = beurling_bound_check(star, [Disk(star.vertices[0], 0.1)], 2000, seed=1)
    assert rep.passed


def test_shrinking_series_empty_and_disk():
    rep = shrinking_target_series(DISK, 10.0, 1.0, 0.5, 8)
    assert rep.terms == [0.0] * 8 and rep.partial_sums[-1] == 0.0
    rep = shrinking_target_series(DISK, 1.0, 1.0, 0.5, 20)
    for n, term in enumerate(rep.terms):
        assert term == pytest.approx(2 / math.pi * math.asin(0.5 ** n / 2), abs=1e-14)
    assert rep.tail < rep.terms[10] * 2.01
    with pytest.raises(PreconditionError):
        shrinking_target_series(DISK, 1.0, 1.0, 1.5, 4)


def test_shrinking_series_slit_tip_exponent():
    rep = shrinking_target_series(DomainSpec.slit_plane(1.0), 0.0, 1.0, 0.9, 60)
    radii = 0.9 ** np.arange(20, 60)
    slope, _ = fit_decay_exponent(radii, rep.terms[20:])
    assert slope == pytest.approx(0.5, abs=0.02)
    assert rep.tail < rep.partial_sums[-1]


@given(st.integers(1, 40), st.floats(0, 2 * math.pi))
@settings(max_examples=60, deadline=None)
def test_partition_additivity_riemann(n_arcs, offset):
    ests = partition_measures(DISK, arc_partition(n_arcs, offset))
    assert math.fsum(e.value for e in ests) == pytest.approx(1.0, abs=1e-12)


def test_partition_additivity_wos():
    ests = partition_measures(DomainSpec.unit_disk(0.2 - 0.1j), arc_partition(6), 5000, seed=3, backend="wos")
    total = math.fsum(e.value for e in ests)
    joint = math.sqrt(sum(e.std_error ** 2 for e in ests))
    assert abs(total - 1) <= 4 * max(joint, 1e-12)


@given(st.floats(0.01, 1.0), st.floats(1.0, 3.0), st.floats(-math.pi, math.pi))
@settings(max_examples=60, deadline=None)
def test_monotonicity_riemann(r, factor, angle):
    c = complex(math.cos(angle), math.sin(angle))
    small = estimate_disk_measure(DISK, Disk(c, r), backend="riemann").value
    large = estimate_disk_measure(DISK, Disk(c, r * factor), backend="riemann").value
    assert small <= large + 1e-15


def test_monotonicity_wos_shared_walks():
    pts = wos_exit_points(DISK, 5000, seed=8)
    a = measure_from_points(pts, Disk(1, 0.2))
    b = measure_from_points(pts, Disk(1, 0.5))
    assert a.value <= b.value


def test_comparison_nested_domains():
    # V = half disk inside U = disk; B = arc near 1 shared by both boundaries
    half = DomainSpec.sampled_jordan(np.exp(1j * np.linspace(-math.pi / 2, math.pi / 2, 400)), 0.5)
    u = DomainSpec.unit_disk(0.5)
    target = Disk(1, 0.3)
    ev = estimate_disk_measure(half, target, 5000, seed=6, backend="wos")
    eu = estimate_disk_measure(u, target, backend="riemann")
    assert ev.value <= eu.value + 3 * ev.std_error


@given(st.floats(0.05, 0.95), st.floats(-math.pi, math.pi))
@settings(max_examples=40, deadline=None)
def test_estimates_are_probabilities(r, angle):
    c = complex(math.cos(angle), math.sin(angle))
    for dom in (DISK, DomainSpec.slit_plane(1.0), DomainSpec.sector(0.3, 1.0)):
        v = estimate_disk_measure(dom, Disk(c, r), backend="riemann").value
        assert 0.0 <= v <= 1.0


def test_polyline_distance_never_exceeds_true_distance():
    star = star_domain(7)
    rng = np.random.default_rng(0)
    z = rng.uniform(-0.7, 0.7, 500) + 1j * rng.uniform(-0.7, 0.7, 500)
    b = star.boundary_samples(40_000)
    true = np.abs(z[:, None] - b[None, :]).min(axis=1)
    d, _ = star.distance(z)
    assert np.all(d <= true + 1e-12)
    assert np.all(d > 0)
