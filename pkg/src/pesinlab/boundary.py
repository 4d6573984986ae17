"""Julia-set samplers for polynomials: escape rate, Brolin sampling, external rays.

The Green function of the basin of infinity is computed by the escape-rate
limit d^-n log|f^n(z)|. Boundary points are produced either by equal-weight
backward iteration (which samples the balanced measure) or by following
external rays down to tiny potential, which pushes Lebesgue measure on angles
forward to the same measure.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import PreconditionError, RootFindingError
from .maps import Polynomial, preimages_batch
from .rng import blocks, substream


def _escape_threshold(f: Polynomial) -> float:
    return 10.0 ** (300.0 / f.degree)


def escape_rate(f: Polynomial, z, max_iter=2000):
    """Green function G(z) = lim d^-n log|f^n(z)|, 0 for orbits that stay bounded."""
    z = np.array(z, dtype=complex, copy=True)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    d = f.degree
    shift = math.log(abs(f.leading)) / (d - 1)
    big = _escape_threshold(f)
    out = np.zeros(z.shape)
    active = np.ones(z.shape, dtype=bool)
    for n in range(max_iter + 1):
        esc = active & (np.abs(z) > big)
        if esc.any():
            out[esc] = (np.log(np.abs(z[esc])) + shift) / float(d) ** n
            active &= ~esc
        if not active.any():
            break
        z[active] = f(z[active])
    return float(out[0]) if scalar else out


def critical_escape_rate(f: Polynomial) -> float:
    """Largest Green value over the critical points; zero iff the Julia set is connected."""
    return float(np.max(escape_rate(f, np.asarray(f.critical_points()))))


def escape_radius(f: Polynomial) -> float:
    """A radius R with |f(z)| > 2|z| for |z| > R."""
    c = np.abs(np.array(f.coefficients))
    lead = c[-1]
    return float(max(2.0, (2 + c[:-1].sum()) / lead))


def brolin_samples(f: Polynomial, n_points, seed, depth=48, start=None, key=0):
    """Endpoints of equal-weight backward chains (approximately balanced-measure samples).

    Chains start at ``start`` (default a point on the escape circle) and take
    ``depth`` uniformly chosen preimages.
    """
    if start is None:
        start = escape_radius(f) * 1.5
    out = np.empty(n_points, dtype=complex)
    for b, lo, hi in blocks(n_points):
        rng = substream(seed, key, b)
        z = np.full(hi - lo, complex(start))
        for _ in range(depth):
            roots = preimages_batch(f, z)
            z = roots[np.arange(z.size), rng.integers(0, f.degree, z.size)]
        out[lo:hi] = z
    return out


def julia_cloud(f: Polynomial, n_points=20_000, seed=0, depth=48):
    """A boundary sample cloud for thin-SV and cover construction."""
    return brolin_samples(f, n_points, seed, depth=depth, key=7)


def _newton_preimage(f, target, guess, iters=30):
    z = guess.copy()
    for _ in range(iters):
        step = (f(z) - target) / f.derivative(z)
        z = z - step
        if np.all(np.abs(step) <= 1e-15 * (1 + np.abs(z))):
            break
    return z


def external_ray_points(f: Polynomial, angles, depth=30, substeps=4, top_potential=None):
    """Points on the external rays of the given angles (in turns) at potential ~ top * d^-depth.

    Requires a monic polynomial with connected Julia set. Points are built from
    the far end: near infinity the Böttcher coordinate is the identity up to a
    translation, and lower potentials are reached by pulling back the ray of
    angle d*t with Newton's method, seeded at the previous point on the same ray.
    """
    if abs(f.leading - 1) > 1e-14:
        raise PreconditionError("ray tracing is implemented for monic polynomials")
    if critical_escape_rate(f) > 0:
        raise PreconditionError("rays of a disconnected Julia set may crash into critical points")
    d = f.degree
    angles = np.asarray(angles, dtype=float).ravel()
    g0 = math.log(1e8) if top_potential is None else top_potential
    shift = -f.coefficients[-2] / d
    # potentials g0 * d^(-m/substeps), m = 0 .. substeps*depth
    ray = {}
    for k in range(depth, -1, -1):
        alpha = np.mod(angles * float(d) ** k, 1.0)
        count = substeps * (depth - k) + 1
        pts = np.empty((count, angles.size), dtype=complex)
        for m in range(count):
            g = g0 * float(d) ** (-m / substeps)
            if m < substeps:
                pts[m] = np.exp(g + 2j * np.pi * alpha) + shift
                continue
            target = ray[k + 1][m - substeps]
            pts[m] = _newton_preimage(f, target, pts[m - 1])
        ray[k] = pts
        ray.pop(k + 2, None)
    end = ray[0][-1]
    if not np.all(np.isfinite(end)):
        raise RootFindingError("ray tracing diverged", math.inf)
    return end


def ray_landing_samples(f: Polynomial, n_points, seed, depth=30, substeps=4, key=0):
    """Harmonic-measure samples from infinity: uniform angles pushed down their rays."""
    out = np.empty(n_points, dtype=complex)
    for b, lo, hi in blocks(n_points):
        rng = substream(seed, key, b)
        out[lo:hi] = external_ray_points(f, rng.uniform(0, 1, hi - lo), depth, substeps)
    return out
