"""Finite Blaschke products as inner functions acting on the unit circle."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BranchUndefined,
    CriticalFiber,
    EllipticRotation,
    Inconclusive,
    PreconditionError,
    WrongNormalization,
)
from .geometry import MobiusTransform
from .maps import Blaschke, companion_roots, lift_paths_adaptive, preimages_all, preimages_batch, singular_data
from .orbit import BackwardOrbit
from .rng import substream

STEP_THRESHOLD = 1e-3
STEP_HORIZON = 10_000


@dataclass(frozen=True)
class InnerMap:
    blaschke: Blaschke
    denjoy_wolff: complex
    dw_derivative: float


def _fixed_point_candidates(g: Blaschke):
    num, den = g.numerator_denominator()
    poly = num - np.polynomial.Polynomial([0, 1]) * den
    coeffs = np.trim_zeros(poly.coef, "b")
    roots = companion_roots(coeffs)
    # merge clusters (multiple fixed points) by their mean, which is far better conditioned
    merged, used = [], np.zeros(roots.size, dtype=bool)
    for i in range(roots.size):
        if used[i]:
            continue
        group = np.abs(roots - roots[i]) < 1e-4
        group &= ~used
        used |= group
        merged.append(roots[group].mean())
    return np.array(merged)


def denjoy_wolff(g: Blaschke, max_iter=2000):
    """Denjoy-Wolff point p of g and |g'(p)|.

    Iterates from 0; if the orbit settles (Cauchy within 1e-12) strictly inside
    the disk the limit is polished by Newton. Otherwise the boundary fixed point
    with angular derivative in (0, 1] is selected among the roots of g(z) = z.
    """
    if g.degree == 1:
        # rot (z - a) / (1 - conj(a) z) is elliptic iff |trace|^2 / |det| < 4
        a = g.zeros[0]
        if abs(g.rotation + 1) ** 2 / (1 - abs(a) ** 2) < 4 - 1e-9:
            raise EllipticRotation("disk automorphism with an interior fixed point")
    z = 0j
    for _ in range(max_iter):
        w = complex(g(np.asarray(z)))
        if abs(w - z) < 1e-12:
            z = w
            break
        z = w
    if abs(z) < 1 - 1e-8 and abs(complex(g(np.asarray(z))) - z) < 1e-10:
        for _ in range(20):
            dz = (complex(g(np.asarray(z))) - z) / (complex(g.derivative(np.asarray(z))) - 1)
            z -= dz
            if abs(dz) < 1e-16:
                break
        return complex(z), float(abs(g.derivative(np.asarray(z))))
    fps = _fixed_point_candidates(g)
    inside = [p for p in fps if abs(p) < 1 - 1e-8 and abs(g.derivative(np.asarray(p))) < 1]
    if inside:
        p = complex(inside[0])
        return p, float(abs(g.derivative(np.asarray(p))))
    best = None
    for p in fps:
        if abs(abs(p) - 1) > 1e-6:
            continue
        p = p / abs(p)
        deriv = complex(g.derivative(np.asarray(p)))
        if deriv.real > 0 and abs(deriv.imag) < 1e-6 and deriv.real <= 1 + 1e-6:
            if best is None or deriv.real < best[1]:
                best = (complex(p), min(deriv.real, 1.0))
    if best is None:
        raise PreconditionError("no Denjoy-Wolff point found among the fixed points")
    return best


def inner_map(g: Blaschke) -> InnerMap:
    p, d = denjoy_wolff(g)
    return InnerMap(g, p, d)


def hyperbolic_distance(z, w):
    """Hyperbolic distance in the unit disk (curvature -1)."""
    z, w = np.asarray(z, dtype=complex), np.asarray(w, dtype=complex)
    ratio = np.abs(z - w) / np.abs(1 - np.conj(w) * z)
    return 2 * np.arctanh(np.minimum(ratio, 1 - 1e-16))


@dataclass
class Classification:
    kind: str
    denjoy_wolff: complex
    dw_derivative: float
    step_distances: list
    threshold: float = STEP_THRESHOLD
    horizon: int = STEP_HORIZON


def cowen_classify(g: Blaschke, threshold=STEP_THRESHOLD, horizon=STEP_HORIZON) -> Classification:
    """elliptic / hyperbolic / doubly_parabolic / simply_parabolic.

    The parabolic subtype is read off the hyperbolic step distances
    d(g^{n+1}(0), g^n(0)): they tend to 0 for doubly parabolic maps and stay
    bounded below for simply parabolic ones.
    """
    p, deriv = denjoy_wolff(g)
    if abs(p) < 1 - 1e-8:
        return Classification("elliptic", p, deriv, [], threshold, horizon)
    if deriv < 1 - 1e-8:
        return Classification("hyperbolic", p, deriv, [], threshold, horizon)
    z = np.zeros(horizon + 1, dtype=complex)
    for n in range(horizon):
        z[n + 1] = g(z[n])
    steps = hyperbolic_distance(z[1:], z[:-1])
    record = steps[:: max(1, horizon // 100)].tolist()
    if np.any(steps < threshold):
        return Classification("doubly_parabolic", p, deriv, record, threshold, horizon)
    tail = steps[-horizon // 10:]
    if (tail.max() - tail.min()) < threshold * tail.min():
        return Classification("simply_parabolic", p, deriv, record, threshold, horizon)
    raise Inconclusive(f"step distances unresolved after {horizon} iterations (last {steps[-1]:.3g})")


def circle_orbit(g: Blaschke, xi0, n):
    """Forward orbit on the unit circle, renormalised to modulus 1 at every step.

    Returns the points and the largest modulus drift seen before renormalising.
    """
    xi = complex(xi0)
    if abs(abs(xi) - 1) > 1e-12:
        raise PreconditionError("xi0 must lie on the unit circle")
    out = np.empty(n + 1, dtype=complex)
    out[0] = xi
    drift = 0.0
    for k in range(n):
        w = complex(g(np.asarray(out[k])))
        drift = max(drift, abs(abs(w) - 1))
        out[k + 1] = w / abs(w)
    return out, drift


def circle_fiber(g: Blaschke, xi):
    """Preimages of circle points (rows), projected to the circle, with 1/|g'| weights."""
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    roots = preimages_batch(g, xi)
    roots = roots / np.abs(roots)
    weights = 1.0 / g.circle_derivative_modulus(roots)
    return roots, weights


def backward_sample_circle(g: Blaschke, xi0, n, seed, *, key=0) -> BackwardOrbit:
    """Backward chain on the circle choosing preimages with probability ∝ 1/|g'|."""
    if abs(complex(g(np.asarray(0j)))) > 1e-12:
        raise WrongNormalization("transfer weights need a centered Blaschke product (g(0) = 0)")
    xi0 = complex(xi0)
    if abs(abs(xi0) - 1) > 1e-12:
        raise PreconditionError("xi0 must lie on the unit circle")
    rng = substream(seed, key)
    pts = np.empty(n + 1, dtype=complex)
    pts[0] = xi0
    derivs = np.empty(n, dtype=complex)
    logw = np.empty(n)
    raw = np.empty(n)
    u = rng.uniform(0.0, 1.0, n)
    for k in range(n):
        roots, w = circle_fiber(g, pts[k])
        roots, w = roots[0], w[0]
        if np.any(1.0 / w < 1e-10):
            raise CriticalFiber(f"critical preimage at step {k}")
        total = w.sum()
        raw[k] = total
        cdf = np.cumsum(w) / total
        j = min(int(np.searchsorted(cdf, u[k], side="right")), w.size - 1)
        pts[k + 1] = roots[j]
        derivs[k] = complex(g.derivative(np.asarray(roots[j])))
        logw[k] = math.log(w[j] / total)
    resid = np.abs(g(pts[1:]) - pts[:-1]).max() if n else 0.0
    return BackwardOrbit(pts, derivs, logw, "circle_transfer", raw_weight_sums=raw, max_residual=float(resid))


def backward_circle_chains(g: Blaschke, xi0, n, n_chains, seed, *, key=0):
    """Endpoints x_n of many independent transfer-weighted chains (vectorised)."""
    rng = substream(seed, key)
    z = np.full(n_chains, complex(xi0))
    for _ in range(n):
        roots, w = circle_fiber(g, z)
        cdf = np.cumsum(w, axis=1) / w.sum(axis=1, keepdims=True)
        u = rng.uniform(0.0, 1.0, n_chains)
        j = np.minimum((cdf < u[:, None]).sum(axis=1), g.degree - 1)
        z = roots[np.arange(n_chains), j]
    return z


# -- invariance ---------------------------------------------------------------------

def bump(x):
    """Smooth bump supported on (-1, 1)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    inside = np.abs(x) < 1
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def trig_test_functions(k_max=4):
    fns = [("1", lambda w: np.ones(np.shape(w)))]
    for k in range(1, k_max + 1):
        fns.append((f"cos{k}", lambda w, k=k: np.cos(k * np.angle(w))))
        fns.append((f"sin{k}", lambda w, k=k: np.sin(k * np.angle(w))))
    return fns


def bump_test_functions(centers=(math.pi / 2, math.pi, 3 * math.pi / 2), width=0.6):
    """Bumps on arcs centred at the given angles, vanishing near w = 1."""
    fns = []
    for c in centers:
        fns.append((f"bump@{c:.3f}", lambda w, c=c: bump(np.angle(w * complex(math.cos(-c), math.sin(-c))) / width)))
    return fns


@dataclass
class InvarianceReport:
    measure: str
    max_discrepancy: float
    rows: list
    n_quad: int
    gap: float


def _circle_integral(values, theta, weight, mask):
    return float(np.sum(values * np.where(mask, weight, 0.0)) * (theta[1] - theta[0]) / (2 * math.pi))


def invariance_check(g: Blaschke, measure="lebesgue", test_fns=None, n_quad=4096, gap=1e-3) -> InvarianceReport:
    """Compare ∫ φ∘g dμ with ∫ φ dμ by periodic trapezoid quadrature.

    ``lambda_R`` is the measure |w - 1|^-2 dλ(w); its integrals are truncated to
    angles outside (-gap, gap) and Richardson-extrapolated in the gap.
    """
    theta = 2 * math.pi * np.arange(n_quad) / n_quad
    w = np.exp(1j * theta)
    gw = g(w)
    gw = gw / np.abs(gw)
    if measure == "lebesgue":
        if abs(complex(g(np.asarray(0j)))) > 1e-12:
            raise WrongNormalization("Lebesgue invariance needs a centered map")
        test_fns = test_fns or trig_test_functions()
        weight = np.ones(n_quad)
        masks = {gap: np.ones(n_quad, dtype=bool)}
    elif measure == "lambda_R":
        p, deriv = denjoy_wolff(g)
        if abs(p - 1) > 1e-8 or abs(deriv - 1) > 1e-6:
            raise WrongNormalization("lambda_R invariance needs Denjoy-Wolff point 1 with derivative 1")
        test_fns = test_fns or bump_test_functions()
        with np.errstate(divide="ignore"):
            weight = 1.0 / np.abs(w - 1) ** 2
        ang = np.abs(np.angle(w))
        masks = {gap: ang >= gap, gap / 2: ang >= gap / 2}
    else:
        raise PreconditionError(f"unknown measure {measure!r}")
    rows = []
    worst = 0.0
    for name, phi in test_fns:
        vals = {}
        for gp, mask in masks.items():
            lhs = _circle_integral(phi(gw), theta, weight, mask)
            rhs = _circle_integral(phi(w), theta, weight, mask)
            vals[gp] = (lhs, rhs)
        if len(vals) == 2:
            (l1, r1), (l2, r2) = vals[gap], vals[gap / 2]
            lhs, rhs = 2 * l2 - l1, 2 * r2 - r1
        else:
            lhs, rhs = vals[gap]
        disc = abs(lhs - rhs)
        worst = max(worst, disc)
        rows.append({"test_fn": name, "pushforward": lhs, "original": rhs, "discrepancy": disc})
    return InvarianceReport(measure, worst, rows, n_quad, gap)


# -- Stolz angles ---------------------------------------------------------------------

@dataclass(frozen=True)
class StolzAngle:
    vertex: complex
    opening: float
    length: float

    def __post_init__(self):
        if abs(abs(self.vertex) - 1) > 1e-12:
            raise PreconditionError("Stolz vertex must lie on the unit circle")
        if not 0 < self.opening < math.pi / 2 or not 0 < self.length < 1:
            raise PreconditionError("need 0 < opening < pi/2 and 0 < length < 1")

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        ang = np.abs(np.angle((self.vertex - z) / self.vertex))
        return (ang < self.opening) & (np.abs(z) > 1 - self.length) & (np.abs(z) < 1)


@dataclass
class StolzReport:
    passed: bool
    rho1: float
    violations: int
    worst_angle: float
    image_vertex: complex


def stolz_containment_check(g: Blaschke, xi, rho, alpha, branch_seed, n_samples=256) -> StolzReport:
    """Map the radius {t xi : 1 - rho < t < 1} through the branch G with G(xi) = branch_seed.

    The branch is continued inward from xi; every image must lie in the Stolz
    angle of opening ``alpha`` and length ``rho`` at branch_seed.
    """
    xi = complex(xi)
    seed = complex(branch_seed)
    if abs(complex(g(np.asarray(seed))) - xi) > 1e-10:
        raise PreconditionError("branch_seed is not a preimage of xi")
    cvs = np.asarray(singular_data(g).critical_values, dtype=complex)
    rho1 = float(np.abs(cvs - xi).min()) if cvs.size else math.inf
    if rho1 <= rho:
        raise BranchUndefined(f"a critical value lies within {rho1:.3g} of xi")
    t = 1 - rho * np.arange(n_samples + 1) / n_samples
    t[-1] = 1 - rho * (1 - 1e-12)
    path = t * xi
    images = lift_paths_adaptive(g, path[None, :], np.array([seed]))[0][1:]
    angle = StolzAngle(seed / abs(seed), alpha, rho)
    inside = angle.contains(images)
    worst = float(np.max(np.abs(np.angle((angle.vertex - images) / angle.vertex))))
    return StolzReport(bool(inside.all()), rho1, int(np.count_nonzero(~inside)), worst, seed)


# -- catalog and conjugation -------------------------------------------------------------

def parabolic_translation() -> Blaschke:
    """Disk conjugate of w -> w + 1 on the upper half-plane (fixes 1, derivative 1)."""
    a = (1 + 2j) / 5
    g0 = 1 / (1 + 2j)
    return Blaschke((a,), -g0 / a)


def doubly_parabolic_example() -> Blaschke:
    """(z^2 + 1/3) / (1 + z^2/3), parabolic at 1 with real orbit of 0."""
    s = 1j / math.sqrt(3)
    return Blaschke((s, -s), 1.0)


def conjugate_blaschke(g: Blaschke, m: MobiusTransform) -> Blaschke:
    """m ∘ g ∘ m^-1 as a Blaschke product, for a disk automorphism m."""
    minv = m.inverse()
    zeros = np.asarray(m(preimages_all(g, minv(0j), warn=False)))
    probe = 0.1 + 0.2j
    value = m(complex(g(np.asarray(minv(probe)))))
    base = complex(Blaschke(tuple(zeros), 1.0)(np.asarray(probe)))
    rot = value / base
    return Blaschke(tuple(zeros), rot / abs(rot))
