"""The punctured conformal density rho and the thin-singular-values test.

Near each puncture v_i the density is eps^2 / |z - v_i|^2 inside D(v_i, eps)
and 1 elsewhere. Distances are computed as the infimum of rho-lengths over a
small family of candidate paths, each integrated in closed form:

* the straight segment,
* for every puncture disk the segment crosses, the two shortest Euclidean
  detours around that disk (tangent, arc, tangent),
* when both endpoints share a puncture disk, the preimage of the straight
  segment under the normalising map zeta = eps^2 / (z - v), and of the detour
  around zeta = 0,
* a once-bent polyline, only when every other candidate runs through a puncture.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import HypothesisViolated, PreconditionError, PunctureHit, ResolutionTooCoarse
from .geometry import INFINITY, MobiusTransform

PUNCTURE_TOL = 1e-14


@dataclass(frozen=True)
class RhoConfig:
    punctures: tuple
    epsilon: float

    def __post_init__(self):
        pts = tuple(complex(v) for v in self.punctures)
        object.__setattr__(self, "punctures", pts)
        if not self.epsilon > 0:
            raise PreconditionError("epsilon must be positive")
        eps = self.epsilon
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                # disjoint disks separated by a gap larger than eps
                if abs(pts[i] - pts[j]) <= 3 * eps:
                    raise PreconditionError(f"puncture disks {i} and {j} are closer than the required gap")

    @property
    def centers(self) -> np.ndarray:
        return np.array(self.punctures, dtype=complex)

    def mobius(self, i) -> MobiusTransform:
        return MobiusTransform.puncture(self.punctures[i], self.epsilon)


@dataclass(frozen=True)
class ThinSVParams:
    mu: float
    d: int
    eta: float
    horizon: int

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise PreconditionError("mu must lie in (0, 1)")
        if self.d < 0 or self.horizon < 1:
            raise PreconditionError("d must be >= 0 and horizon >= 1")
        if not self.eta > 0:
            raise PreconditionError("eta must be positive")


def _check_punctures(cfg, z):
    if len(cfg.punctures) == 0:
        return
    dist = np.abs(np.asarray(z, dtype=complex)[..., None] - cfg.centers)
    if np.any(dist < PUNCTURE_TOL):
        raise PunctureHit("point coincides with a puncture")


def rho_density(cfg: RhoConfig, z):
    z = np.asarray(z, dtype=complex)
    _check_punctures(cfg, z)
    out = np.ones(z.shape)
    eps2 = cfg.epsilon**2
    for v in cfg.punctures:
        d2 = np.abs(z - v) ** 2
        out = np.where(d2 < eps2, eps2 / np.where(d2 > 0, d2, 1), out)
    return float(out) if out.ndim == 0 else out


def _inv_square_integral(a, b, h, eps2):
    """Integral of eps2 / (s^2 + h^2) for s from a to b (a <= b), vectorised."""
    a, b, h = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(h, float))
    out = np.zeros(a.shape)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        zero_h = h == 0
        denom = h * h + a * b
        # arctan(t) / t keeps the h -> 0 limit eps2 (1/a - 1/b) without dividing by h
        stable = denom > 0
        t = h * (b - a) / denom
        ratio = np.where(np.abs(t) > 1e-8, np.arctan(t) / np.where(t != 0, t, 1), 1.0)
        out = np.where(stable, eps2 * (b - a) / denom * ratio, out)
        crossing = (~zero_h) & (denom <= 0)
        out = np.where(crossing, eps2 / h * (np.arctan(b / h) - np.arctan(a / h)), out)
        out = np.where(zero_h & (a * b <= 0) & (b > a), np.inf, out)
    return out


def segment_rho_length(centers, eps, z, w):
    """Closed-form rho-length of straight segments [z, w] (broadcast over z, w).

    ``centers`` are the puncture centres; all disks have radius ``eps``.
    """
    z, w = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(w, dtype=complex))
    length = np.abs(w - z)
    total = length.astype(float).copy()
    safe = np.where(length > 0, length, 1.0)
    u = (w - z) / safe
    eps2 = eps * eps
    for v in np.atleast_1d(centers):
        rel = (v - z) * np.conj(u)
        s0, h = rel.real, np.abs(rel.imag)
        half = np.sqrt(np.maximum(eps2 - h * h, 0.0))
        lo = np.clip(s0 - half, 0.0, length)
        hi = np.clip(s0 + half, 0.0, length)
        inside = (h < eps) & (hi > lo)
        if not inside.any():
            continue
        extra = _inv_square_integral(lo - s0, hi - s0, h, eps2) - (hi - lo)
        total = total + np.where(inside, extra, 0.0)
    return np.where(length > 0, total, 0.0)


def _detour_lengths(centers, eps, j, z, w):
    """rho-length of the two tangent-arc-tangent detours around disk j (min of both)."""
    v = centers[j]
    dz, dw = np.abs(z - v), np.abs(w - v)
    ok = (dz > eps) & (dw > eps)
    dz_s, dw_s = np.where(ok, dz, 2 * eps), np.where(ok, dw, 2 * eps)
    th_z, th_w = np.angle(z - v), np.angle(w - v)
    al_z, al_w = np.arccos(eps / dz_s), np.arccos(eps / dw_s)
    best = np.full(np.shape(z), np.inf)
    for s in (1.0, -1.0):
        a0 = th_z + s * al_z
        a1 = th_w - s * al_w
        sweep = np.mod(s * (a1 - a0), 2 * np.pi)
        t0 = v + eps * np.exp(1j * a0)
        t1 = v + eps * np.exp(1j * a1)
        total = (
            segment_rho_length(centers, eps, z, t0)
            + eps * sweep
            + segment_rho_length(centers, eps, t1, w)
        )
        best = np.minimum(best, total)
    return np.where(ok, best, np.inf)


def _pullback_lengths(centers, eps, i, z, w, n_check=33):
    """rho-length of the preimage of [M_i z, M_i w] under M_i(z) = eps^2 / (z - v_i).

    In zeta coordinates the density becomes max(1, eps^2 / |zeta|^2), so the
    length is a straight-segment integral with one puncture at zeta = 0. Paths
    whose preimage enters another puncture disk are discarded.
    """
    v = centers[i]
    eps2 = eps * eps
    zeta_z, zeta_w = eps2 / (z - v), eps2 / (w - v)
    length = segment_rho_length(np.array([0j]), eps, zeta_z, zeta_w)
    # going around zeta = 0 keeps the path inside the closed disk i
    around = _detour_lengths(np.array([0j]), eps, 0, zeta_z, zeta_w)
    others = np.delete(centers, i)
    if others.size:
        t = np.linspace(0.0, 1.0, n_check)
        zeta = zeta_z[..., None] + (zeta_w - zeta_z)[..., None] * t
        with np.errstate(divide="ignore", invalid="ignore"):
            pts = v + eps2 / zeta
        near = np.min(np.abs(pts[..., None] - others), axis=-1) < eps * (1 + 1e-9)
        length = np.where(near.any(axis=-1), np.inf, length)
    return np.minimum(length, around)


MAX_WRAP = 3


def _tangent_in(c, eps, p, s):
    """Angle of the tangent point where a path from p starts travelling around circle c in direction s."""
    d = np.maximum(np.abs(p - c), eps)
    return np.angle(p - c) + s * np.arccos(np.minimum(1.0, eps / d))


def _tangent_out(c, eps, q, s):
    """Angle of the tangent point where a path travelling in direction s leaves circle c for q."""
    d = np.maximum(np.abs(q - c), eps)
    return np.angle(q - c) - s * np.arccos(np.minimum(1.0, eps / d))


def _bitangent(ci, cj, eps, si, sj):
    """Departure angle on circle i and arrival angle on circle j of the common tangent."""
    diff = cj - ci
    dist = abs(diff)
    u = diff / dist
    if si == sj:
        t = u
    else:
        t = u * np.exp(1j * math.asin(2 * si * eps / dist))
    return np.angle(-si * 1j * t), np.angle(-sj * 1j * t)


@functools.lru_cache(maxsize=64)
def _wrap_table(centers: tuple, eps: float):
    """Every tangent-arc chain around up to MAX_WRAP distinct disks.

    Each entry is (first disk, first sign, arrival angle on the first disk,
    last disk, last sign, departure angle on the last disk, fixed length of the
    middle part); the arrival/departure angles are None for one-disk chains.
    """
    c = np.array(centers, dtype=complex)
    k = len(centers)
    table = []

    def grow(prefix):
        if prefix:
            for signs in itertools.product((1.0, -1.0), repeat=len(prefix)):
                seq = list(zip(prefix, signs))
                middle, first_out, last_in, prev_in = 0.0, None, None, None
                for (i, si), (j, sj) in zip(seq[:-1], seq[1:]):
                    a_out, b_in = _bitangent(c[i], c[j], eps, si, sj)
                    if prev_in is None:
                        first_out = a_out
                    else:
                        middle += eps * float(np.mod(si * (a_out - prev_in), 2 * np.pi))
                    middle += float(segment_rho_length(c, eps, c[i] + eps * np.exp(1j * a_out),
                                                       c[j] + eps * np.exp(1j * b_in)))
                    prev_in = b_in
                last_in = prev_in
                table.append((seq[0][0], seq[0][1], first_out, seq[-1][0], seq[-1][1], last_in, middle))
        if len(prefix) < min(k, MAX_WRAP):
            for j in range(k):
                if j not in prefix:
                    grow(prefix + (j,))

    grow(())
    return table


def _outside_distance(centers, eps, z, w):
    """Shortest rho-length between points outside the puncture disks.

    The flat region outside disjoint disks has tangent-arc geodesics that
    touch each disk at most once; all chains around up to MAX_WRAP disks in
    either orientation are compared with the straight segment.
    """
    best = segment_rho_length(centers, eps, z, w)
    if centers.size == 0:
        return best
    blocked = best > np.abs(w - z) * (1 + 1e-14)
    if not np.any(blocked):
        return best
    zb, wb = z[blocked], w[blocked]
    out = best[blocked]
    # tangent legs from z onto, and from each circle to w, per (disk, sign)
    legs_in, legs_out = {}, {}
    for i in range(centers.size):
        for sgn in (1.0, -1.0):
            a = _tangent_in(centers[i], eps, zb, sgn)
            legs_in[i, sgn] = (a, segment_rho_length(centers, eps, zb, centers[i] + eps * np.exp(1j * a)))
            b = _tangent_out(centers[i], eps, wb, sgn)
            legs_out[i, sgn] = (b, segment_rho_length(centers, eps, centers[i] + eps * np.exp(1j * b), wb))
    for i0, s0, first_out, il, sl, last_in, middle in _wrap_table(tuple(centers.tolist()), float(eps)):
        a_in, len_in = legs_in[i0, s0]
        a_out, len_out = legs_out[il, sl]
        if first_out is None:
            arcs = eps * np.mod(s0 * (a_out - a_in), 2 * np.pi)
        else:
            arcs = eps * (np.mod(s0 * (first_out - a_in), 2 * np.pi) + np.mod(sl * (a_out - last_in), 2 * np.pi))
        out = np.minimum(out, len_in + arcs + middle + len_out)
    best = best.copy()
    best[blocked] = out
    return best


ZOOM_STAGES = 12


def _zoom_min(fun, grids, spacing):
    """Minimise fun over crossing angles by repeatedly zooming a 9-point stencil.

    ``grids`` is a list of angle arrays of shape (K, G_1, ..., G_m) spanning
    each angle's circle; the stencil around the best point shrinks fourfold per
    stage, so the final angles are resolved to spacing * 4^-ZOOM_STAGES.
    """
    vals = fun(*grids)
    k = vals.shape[0]
    flat = vals.reshape(k, -1)
    idx = np.argmin(flat, axis=1)
    best = flat[np.arange(k), idx]
    centre = [g.reshape(k, -1)[np.arange(k), idx] for g in grids]
    m = len(grids)
    offsets = np.stack(np.meshgrid(*([np.arange(-4, 5)] * m), indexing="ij"), axis=0).reshape(m, -1)
    h = spacing
    for _ in range(ZOOM_STAGES):
        h = h / 4
        cand = [centre[i][:, None] + h * offsets[i][None, :] for i in range(m)]
        v = fun(*cand)
        j = np.argmin(v, axis=1)
        centre = [c[np.arange(k), j] for c in cand]
        best = np.minimum(best, v[np.arange(k), j])
    return best


def _crossing(v, eps, theta):
    e = np.exp(1j * theta)
    return v + eps * (1 - 1e-12) * e, v + eps * (1 + 1e-12) * e


def _via_circle(cfg, j, inner, outer, n_grid=48):
    """Paths from ``inner`` (inside disk j) to ``outer`` (outside every disk) crossing circle j once.

    Inside the disk the leg is the pullback of a straight segment under M_j;
    the crossing angle is optimised numerically.
    """
    centers, eps = cfg.centers, cfg.epsilon

    def length(theta):
        p_in, p_out = _crossing(centers[j], eps, theta)
        a = np.broadcast_to(inner[:, None], theta.shape)
        b = np.broadcast_to(outer[:, None], theta.shape)
        return _pullback_lengths(centers, eps, j, a, p_in) + _outside_distance(
            centers, eps, p_out.ravel(), b.ravel()).reshape(theta.shape)

    grid = np.broadcast_to(2 * np.pi * np.arange(n_grid) / n_grid, (inner.size, n_grid))
    return _zoom_min(length, [grid], 2 * np.pi / n_grid)


def _via_two_circles(cfg, j, k, a, b, n_grid=32):
    """Paths from ``a`` in disk j to ``b`` in disk k crossing each circle once."""
    centers, eps = cfg.centers, cfg.epsilon

    def length(t1, t2):
        p1_in, p1_out = _crossing(centers[j], eps, t1)
        p2_in, p2_out = _crossing(centers[k], eps, t2)
        shape = t1.shape
        aa = np.broadcast_to(a.reshape((-1,) + (1,) * (len(shape) - 1)), shape)
        bb = np.broadcast_to(b.reshape((-1,) + (1,) * (len(shape) - 1)), shape)
        middle = _outside_distance(centers, eps, p1_out.ravel(), p2_out.ravel()).reshape(shape)
        return _pullback_lengths(centers, eps, j, aa, p1_in) + middle + _pullback_lengths(centers, eps, k, bb, p2_in)

    g = 2 * np.pi * np.arange(n_grid) / n_grid
    t1, t2 = np.meshgrid(g, g, indexing="ij")
    shape = (a.size, n_grid, n_grid)
    return _zoom_min(length, [np.broadcast_to(t1, shape), np.broadcast_to(t2, shape)], 2 * np.pi / n_grid)


def _distance(cfg, z, w):
    centers, eps = cfg.centers, cfg.epsilon
    z, w = np.asarray(z), np.asarray(w)
    shape = np.broadcast_shapes(z.shape, w.shape)
    z, w = np.broadcast_to(z, shape).ravel(), np.broadcast_to(w, shape).ravel()
    if centers.size == 0:
        return np.abs(w - z).reshape(shape)
    in_z = np.abs(z[:, None] - centers[None, :]) < eps
    in_w = np.abs(w[:, None] - centers[None, :]) < eps
    any_z, any_w = in_z.any(axis=1), in_w.any(axis=1)
    best = np.full(z.shape, np.inf)
    outside = ~any_z & ~any_w
    if np.any(outside):
        best[outside] = _outside_distance(centers, eps, z[outside], w[outside])
    for j in range(centers.size):
        shared = in_z[:, j] & in_w[:, j]
        if np.any(shared):
            best[shared] = _pullback_lengths(centers, eps, j, z[shared], w[shared])
        mixed = in_z[:, j] & ~any_w
        if np.any(mixed):
            best[mixed] = _via_circle(cfg, j, z[mixed], w[mixed])
        mixed = in_w[:, j] & ~any_z
        if np.any(mixed):
            best[mixed] = _via_circle(cfg, j, w[mixed], z[mixed])
        for k in range(centers.size):
            apart = in_z[:, j] & in_w[:, k] & (j != k)
            if np.any(apart):
                best[apart] = _via_two_circles(cfg, j, k, z[apart], w[apart])
    return best.reshape(shape)


def rho_distance(cfg: RhoConfig, z, w):
    """Candidate-path infimum of the rho-length between z and w (vectorised).

    Candidates: the straight segment; tangent-arc chains around the disks it
    meets; the pullback of the straight segment under M_i when both points
    share disk i; and single-crossing paths when a point lies in a disk, with
    the crossing angle optimised numerically.
    """
    z, w = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(w, dtype=complex))
    # fixed endpoint order makes the computation exactly symmetric
    swap = (z.real > w.real) | ((z.real == w.real) & (z.imag > w.imag))
    z, w = np.where(swap, w, z), np.where(swap, z, w)
    _check_punctures(cfg, z)
    _check_punctures(cfg, w)
    best = _distance(cfg, z, w)
    best = np.where(z == w, 0.0, best)
    return float(best) if best.ndim == 0 else best


@dataclass
class InclusionReport:
    passed: bool
    n_samples: int
    worst_lower_ratio: float
    worst_upper_ratio: float
    bound: float
    violations: int


def rho_inclusion_check(cfg: RhoConfig, x, r, n_samples=256, seed=0) -> InclusionReport:
    """Sample D(x, r) and compare rho-distances from x with the Euclidean ones.

    Checks |y - x| <= dist_rho(x, y) <= 16 r rho(x) on every sample.
    """
    x = complex(x)
    if not r > 0:
        raise PreconditionError("radius must be positive")
    if cfg.punctures and np.any(np.abs(cfg.centers - x) < 2 * r):
        raise HypothesisViolated("a puncture lies in D(x, 2r)")
    rng = np.random.default_rng(seed)
    rad = r * np.sqrt(rng.uniform(0, 1, n_samples))
    rad[: max(1, n_samples // 8)] = r * (1 - 1e-12)
    y = x + rad * np.exp(2j * np.pi * rng.uniform(0, 1, n_samples))
    dist = rho_distance(cfg, x, y)
    eucl = np.abs(y - x)
    bound = 16 * r * rho_density(cfg, x)
    lower = eucl / dist
    upper = dist / bound
    bad = int(np.count_nonzero((dist < eucl * (1 - 1e-12)) | (dist > bound)))
    return InclusionReport(bad == 0, n_samples, float(lower.max()), float(upper.max()), bound, bad)


def separated_subset(points, delta):
    """Greedy maximal delta-separated subset, scanning the input in order."""
    if not delta > 0:
        raise PreconditionError("delta must be positive")
    pts = np.asarray(points, dtype=complex).ravel()
    if pts.size == 0:
        return pts
    tree = cKDTree(np.column_stack([pts.real, pts.imag]))
    blocked = np.zeros(pts.size, dtype=bool)
    keep = []
    for idx in range(pts.size):
        if blocked[idx]:
            continue
        keep.append(idx)
        # everything strictly closer than delta is now excluded
        for nb in tree.query_ball_point([pts[idx].real, pts[idx].imag], delta * (1 - 1e-12)):
            blocked[nb] = True
    return pts[np.array(keep)]


def sampling_resolution(samples) -> float:
    """Largest nearest-neighbour gap in a point cloud."""
    pts = np.asarray(samples, dtype=complex).ravel()
    if pts.size < 2:
        return math.inf
    tree = cKDTree(np.column_stack([pts.real, pts.imag]))
    d, _ = tree.query(np.column_stack([pts.real, pts.imag]), k=2)
    return float(d[:, 1].max())


@dataclass
class ThinVerdict:
    condition_a: bool
    condition_b: bool
    counts: list = field(default_factory=list)
    failures_a: list = field(default_factory=list)
    failures_b: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.condition_a and self.condition_b

    def to_dict(self):
        return {
            "passed": self.passed,
            "condition_a": self.condition_a,
            "condition_b": self.condition_b,
            "counts": self.counts,
            "failures_a": self.failures_a,
            "failures_b": [{"puncture": repr(p), "distance": d} for p, d in self.failures_b],
        }


def thin_sv_check(svs, boundary_samples, cfg: RhoConfig, params: ThinSVParams, check_resolution=True) -> ThinVerdict:
    """Test the two conditions defining thin singular values on sampled data.

    (a) for n = 1..horizon the greedy mu^n-separated subset of singular values
        within mu^n of the boundary samples and outside the puncture disks has
        at most n^d elements;
    (b) for each puncture, the Möbius-normalised singular values in its disk
        stay farther than eta from the normalised boundary samples in the disk.

    ``svs`` is a ``SingularData`` or a plain array of singular values.
    """
    values = svs.finite_values if hasattr(svs, "finite_values") else np.asarray(svs, dtype=complex).ravel()
    values = np.array([v for v in values if v is not INFINITY], dtype=complex)
    bd = np.asarray(boundary_samples, dtype=complex).ravel()
    if check_resolution:
        res = sampling_resolution(bd)
        if res > params.mu**params.horizon:
            raise ResolutionTooCoarse(f"boundary sampling gap {res:.3g} exceeds mu^N = {params.mu ** params.horizon:.3g}")
    centers, eps = cfg.centers, cfg.epsilon

    outside = np.ones(values.size, dtype=bool)
    for v in centers:
        outside &= np.abs(values - v) >= eps
    cand = values[outside]
    if cand.size and bd.size:
        tree = cKDTree(np.column_stack([bd.real, bd.imag]))
        dist_to_bd, _ = tree.query(np.column_stack([cand.real, cand.imag]))
    else:
        dist_to_bd = np.full(cand.size, np.inf)

    counts, failures_a = [], []
    for n in range(1, params.horizon + 1):
        scale = params.mu**n
        near = cand[dist_to_bd <= scale]
        count = int(separated_subset(near, scale).size) if near.size else 0
        counts.append(count)
        if count > n**params.d:
            failures_a.append({"n": n, "count": count, "limit": n**params.d})

    failures_b = []
    for i, v in enumerate(centers):
        m = cfg.mobius(i)
        sv_in = values[(np.abs(values - v) < eps) & (np.abs(values - v) > 0)]
        bd_in = bd[(np.abs(bd - v) < eps) & (np.abs(bd - v) > 0)]
        if sv_in.size == 0 or bd_in.size == 0:
            continue
        a, b = m(sv_in), m(bd_in)
        tree = cKDTree(np.column_stack([b.real, b.imag]))
        d, _ = tree.query(np.column_stack([a.real, a.imag]))
        if d.min() <= params.eta:
            failures_b.append((complex(v), float(d.min())))
    return ThinVerdict(not failures_a, not failures_b, counts, failures_a, failures_b)


# -- generators for validation ------------------------------------------------------

def random_admissible(rng, max_punctures=3, box=2.0):
    """A random (cfg, x, r) with no puncture in D(x, 2r)."""
    while True:
        k = int(rng.integers(0, max_punctures + 1))
        eps = float(rng.uniform(0.05, 0.5))
        pts = box * (rng.uniform(-1, 1, k) + 1j * rng.uniform(-1, 1, k))
        try:
            cfg = RhoConfig(tuple(pts), eps)
        except PreconditionError:
            continue
        x = complex(1.5 * box * rng.uniform(-1, 1), 1.5 * box * rng.uniform(-1, 1))
        room = float(np.min(np.abs(pts - x))) / 2 if k else 1.0
        if room <= 1e-6:
            continue
        r = min(1.0, room) * float(rng.uniform(0.01, 1.0)) * (1 - 1e-9)
        return cfg, x, r


@dataclass
class ThinFamily:
    """Synthetic singular values around the unit circle with a known thin verdict."""

    name: str
    svs: np.ndarray
    boundary: np.ndarray
    cfg: RhoConfig
    params: ThinSVParams
    expected: bool


def _circle(m=4096):
    return np.exp(2j * np.pi * np.arange(m) / m)


def thin_families(horizon=12, mu=1 / 3):
    """Pass/fail families for both conditions.

    In the exponential family level n holds 2^n values; at scale mu^n the
    finer levels stay mu^n-separated too, so the count at n = 9 already
    exceeds 9^4 for mu = 1/3. The boundary is the unit circle, sampled at the radial feet of the singular
    values (so distances are exact) plus a uniform grid.
    """
    fams = []
    empty = RhoConfig((), 0.1)
    n = np.arange(1, horizon + 1)

    # one value per scale, all on the same ray: greedy count is 1 at every scale
    svs = 1 + mu ** n
    for d in (0, 1, 2):
        fams.append(ThinFamily(f"clustered_d{d}", svs.astype(complex), np.append(_circle(), 1 + 0j), empty,
                               ThinSVParams(mu, d, 0.05, horizon), True))

    # 2^n values spread around the circle at distance mu^n
    ang = np.concatenate([2 * np.pi * np.arange(2 ** k) / 2 ** k + 0.1 * k for k in n])
    dist = np.concatenate([np.full(2 ** k, mu ** k) for k in n])
    feet = np.exp(1j * ang)
    svs = (1 + dist) * feet
    bd = np.concatenate([_circle(), feet])
    for d in range(5):
        fams.append(ThinFamily(f"exponential_d{d}", svs, bd, empty, ThinSVParams(mu, d, 0.05, horizon), False))

    # puncture at 1: radial approach stays away after normalisation, tangential does not
    cfg = RhoConfig((1 + 0j,), 0.1)
    t = 0.1 * mu ** np.arange(1, 12)
    radial = 1 + t
    phi = 0.05 * mu ** np.arange(1, 12)
    tangential = np.exp(1j * phi) * (1 + phi ** 2)
    fine = np.exp(1j * np.linspace(-0.2, 0.2, 20001))
    bd = np.concatenate([_circle(), fine])
    params = ThinSVParams(mu, 1, 0.05, 8)
    fams.append(ThinFamily("puncture_radial", radial.astype(complex), bd, cfg, params, True))
    fams.append(ThinFamily("puncture_tangential", tangential, bd, cfg, params, False))
    fams.append(ThinFamily("empty", np.array([], dtype=complex), _circle(), empty, ThinSVParams(mu, 0, 0.05, 4), True))
    return fams
