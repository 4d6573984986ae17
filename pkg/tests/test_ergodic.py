import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pesinlab.boundary import escape_rate
from pesinlab.errors import AllCensored, CriticalProximity, OrbitEscaped, PreconditionError
from pesinlab.ergodic import (
    Arc,
    GrowthSectorParams,
    ReturnData,
    baker_strip_expansion,
    birkhoff_average,
    first_return,
    kac_check,
    lyapunov_pushforward,
    lyapunov_quadrature_circle,
    return_lyapunov_identity,
    sector_growth_check,
)
from pesinlab.geometry import INFINITY, MobiusTransform
from pesinlab.maps import Blaschke, ExpFamily, FatouBaker, Polynomial

LOG2 = math.log(2)
DOUBLING = Blaschke.power(2)
CENTERED = Blaschke((0, 0.5))


def _escape_oracle(c, n=60):
    # G_c(0) = lim 2^-n log|f^n(0)|, iterated until the value settles
    z, prev = 0j, None
    for k in range(1, n):
        z = z * z + c
        val = math.log(abs(z)) / 2 ** k
        if abs(z) > 1e100:
            return val
        prev = val
    return prev


@pytest.mark.parametrize("d", [2, 3, 5])
def test_quadrature_power_is_log_d(d):
    assert lyapunov_quadrature_circle(Blaschke.power(d)).chi == pytest.approx(math.log(d), abs=1e-14)


def test_quadrature_degree_one_rejected():
    with pytest.raises(PreconditionError):
        lyapunov_quadrature_circle(Blaschke((0.3,)))
    with pytest.raises(PreconditionError):
        lyapunov_quadrature_circle(Polynomial([0, 0, 1]))


def test_quadrature_matches_birkhoff():
    chi_q = lyapunov_quadrature_circle(CENTERED).chi
    chi_b = birkhoff_average(CENTERED, cmath.exp(0.3j), 200_000).chi
    assert abs(chi_q - chi_b) < 5e-3


@pytest.mark.parametrize("g", [CENTERED, Blaschke((0, 0.3 + 0.4j, -0.7j)), Blaschke((0.2, -0.5j))])
def test_quadrature_convergence(g):
    a = lyapunov_quadrature_circle(g, 1024).chi
    b = lyapunov_quadrature_circle(g, 2048).chi
    assert abs(a - b) < 1e-10
    assert a >= 0


def test_forward_and_backward_power_map():
    for d in (2, 3):
        g = Blaschke.power(d)
        fwd = birkhoff_average(g, cmath.exp(1.234j), 1000)
        bwd = birkhoff_average(g, cmath.exp(1.234j), 300, "backward", seed=2, n_chains=8)
        assert np.allclose(fwd.running_tail, math.log(d), atol=1e-14)
        assert np.allclose(bwd.running_tail, math.log(d), atol=1e-14)
        assert fwd.converged and bwd.converged


def test_forward_one_step_doubling():
    assert birkhoff_average(DOUBLING, 1j, 1).chi == pytest.approx(LOG2, abs=1e-15)


def test_running_tail_recorded_every_tenth():
    res = birkhoff_average(CENTERED, cmath.exp(0.5j), 1000)
    assert len(res.running_tail) == 10
    assert res.running_tail[-1] == pytest.approx(res.chi, abs=1e-12)


def test_green_term_backward_chain():
    g_oracle = _escape_oracle(0.5)
    assert g_oracle == pytest.approx(0.036691867651292384, abs=1e-8)
    assert escape_rate(Polynomial([0.5, 0, 1]), 0.0) == pytest.approx(g_oracle, abs=1e-10)
    res = birkhoff_average(Polynomial([0.5, 0, 1]), 2.0, 2000, "backward", seed=1, n_chains=16)
    assert res.chi == pytest.approx(LOG2 + g_oracle, rel=0.02)


def test_connected_julia_set_has_no_green_term():
    f = Polynomial([-0.1, 0, 1])
    assert escape_rate(f, 0.0) == 0.0
    res = birkhoff_average(f, 2.0, 2000, "backward", seed=1, n_chains=16)
    assert res.chi == pytest.approx(LOG2, rel=0.02)


def test_forward_escape_and_critical_hit():
    with pytest.raises(OrbitEscaped) as info:
        birkhoff_average(Polynomial([0.5, 0, 1]), 1.0, 200)
    assert info.value.step is not None
    with pytest.raises(CriticalProximity):
        birkhoff_average(Polynomial([0.5, 0, 1]), 0.0, 200)


def test_backward_needs_centered_blaschke():
    with pytest.raises(PreconditionError):
        birkhoff_average(Blaschke((0.3, 0.2)), 1.0, 10, "backward")
    with pytest.raises(PreconditionError):
        birkhoff_average(DOUBLING, 1.0, 10, "sideways")


def test_first_return_full_circle_and_kac():
    rd = first_return(DOUBLING, None, Arc(0.0, 2 * math.pi), 1000, seed=0)
    assert np.all(rd.return_times == 1)
    rep = kac_check(rd)
    assert rep.product == 1.0 and rep.passed


def test_first_return_tiny_arc_censored():
    with pytest.raises(AllCensored):
        first_return(DOUBLING, None, Arc(0.3, 1e-7), 200, seed=0, max_steps=2000)


def test_kac_doubling_eighth_arc():
    rd = first_return(DOUBLING, None, Arc(math.pi / 8, math.pi / 4), 20_000, seed=3)
    rep = kac_check(rd)
    assert rep.passed
    assert rep.mean_return == pytest.approx(8, rel=0.05)


def test_kac_synthetic_constant_time():
    rd = ReturnData(Arc(0.0, math.pi / 2), [4] * 50, 0.25)
    rep = kac_check(rd)
    assert rep.product == 1.0 and rep.passed
    with pytest.raises(PreconditionError):
        ReturnData(Arc(0.0, 1.0), [0, 1], 0.1)


def test_return_identity_doubling():
    rep = return_lyapunov_identity(DOUBLING, Arc(math.pi / 8, math.pi / 4), 20_000, seed=4)
    assert rep.right == pytest.approx(8 * LOG2)
    assert rep.relative_discrepancy < 0.02


def test_return_identity_full_circle():
    rep = return_lyapunov_identity(CENTERED, Arc(0, 2 * math.pi), 2000, seed=0)
    assert rep.right == pytest.approx(rep.chi)
    assert rep.left == pytest.approx(rep.chi, abs=5 * rep.left_std_error + 1e-12)


def test_return_identity_centered_quarter():
    rep = return_lyapunov_identity(CENTERED, Arc(1.0, math.pi / 2), 40_000, seed=5)
    assert rep.relative_discrepancy < 0.02


@given(st.floats(0.05, 6.0), st.floats(-math.pi, math.pi))
@settings(max_examples=30, deadline=None)
def test_return_log_sums_are_time_times_log2(length, center):
    rd = first_return(DOUBLING, None, Arc(center, length), 200, seed=1, max_steps=10_000)
    assert np.allclose(rd.log_derivative_sums, rd.return_times * LOG2, rtol=1e-12)


def test_growth_polynomial_is_zero_order():
    p = GrowthSectorParams(0.25, 1, 1, 1, 0.5, 1)
    rep = sector_growth_check(Polynomial([0, 1, 3, 1]), p, [0.5, 0.2, 0.1, 0.05])
    assert rep.beta_hat == pytest.approx(0.0, abs=1e-3)
    assert rep.integrable
    for alpha in (0.1, 0.5, 0.9):
        assert sector_growth_check(Polynomial([0, 1, 3, 1]), GrowthSectorParams(alpha, 1, 1, 1, 0.5, 1),
                                   [0.5, 0.2, 0.1]).integrable


def test_growth_fatou_baker_left_sector():
    p = GrowthSectorParams(0.25, 1, 1, 1, INFINITY, -1)
    rep = sector_growth_check(FatouBaker(), p, [1 / 2, 1 / 5, 1 / 10, 1 / 20, 1 / 40])
    assert rep.beta_hat == pytest.approx(1.0, abs=0.05)
    # envelope equals log|1 - e^{-z}| at the real point of largest modulus
    assert rep.envelope[-1] == pytest.approx(math.log(math.exp(40 * (1 - 1e-12)) - 1), rel=1e-3)


def test_growth_exponential_right_sector():
    p = GrowthSectorParams(0.25, 1, 1, 1, INFINITY, 1)
    rep = sector_growth_check(ExpFamily(0.3), p, [1 / 2, 1 / 5, 1 / 10, 1 / 20, 1 / 40])
    assert rep.beta_hat == pytest.approx(1.0, abs=0.15)


def test_growth_integrability_predicate():
    assert GrowthSectorParams(0.25, 1.9, 1, 1, 0, 1).integrable
    assert not GrowthSectorParams(0.25, 2.1, 1, 1, 0, 1).integrable
    with pytest.raises(PreconditionError):
        GrowthSectorParams(1.5, 1, 1, 1, 0, 1)
    with pytest.raises(PreconditionError):
        sector_growth_check(FatouBaker(), GrowthSectorParams(0.25, 1, 1, 1, INFINITY, -1), [0.1, 0.2, 0.3])


def test_baker_strip_expands():
    assert baker_strip_expansion(FatouBaker()) > 1


def test_pushforward_of_lebesgue_under_rotation():
    rot = MobiusTransform(cmath.exp(0.4j), 0, 0, 1)
    chi = lyapunov_pushforward(CENTERED, rot)
    assert chi == pytest.approx(lyapunov_quadrature_circle(CENTERED).chi, abs=1e-12)
