"""Inverse-branch towers along backward orbits, first-return towers and periodic points.

A backward orbit x_0, x_1, ... with f(x_{n+1}) = x_n determines branches F_n of
f^{-n} with F_n(x_0) = x_n. When |(f^n)'(x_n)| grows exponentially, the
schedule

    b_n = 1/2 |(f^{n+1})'(x_{n+1})|^{-1/4},   P = prod_{n >= n2} (1 - b_n)^{-1},
    level radius rho_n = r prod_{m >= n} (1 - b_m)^{-1},

with 32 r P < eta keeps every F_n defined on D(x_0, rho_n) and shrinks
F_n(D(x_0, rho_n)) below eta M^n. Towers are built by continuing 64 radial
paths level by level; diameters are measured on the continued boundary
samples and compared with the Koebe bound.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from scipy import stats

from .boundary import escape_rate, external_ray_points, julia_cloud
from .ergodic import Arc
from .errors import (
    BranchObstructed,
    BudgetExhausted,
    CriticalFiberHit,
    CriticalProximity,
    InsufficientDepth,
    PreconditionError,
    ReturnTimeBlowup,
    ScheduleNeverStarts,
    StepTooLarge,
    VerificationFailed,
)
from .geometry import Disk
from .inner import _fixed_point_candidates, backward_sample_circle
from .maps import (
    FINITE_DEGREE,
    Blaschke,
    MapSpec,
    Polynomial,
    derivative_mp,
    evaluate_mp,
    lift_offsets_adaptive,
    postcritical_points,
    preimages_all,
    preimages_batch,
    to_mpc,
)
from .orbit import BackwardOrbit
from .rng import substream

N_BOUNDARY = 64
CRIT_TOL = 1e-8
VERIFY_TOL = 1e-10
RESAMPLE_LIMIT = 32
MP_BITS = 128
M_INTERPRETATION = "M is taken in (exp(-chi/4), 1)"

MODES = ("plane_equal_weight", "circle_transfer", "first_return")


# -- backward orbits ------------------------------------------------------------------

def _circle_model(f):
    """The centered Blaschke product acting on the circle, or None."""
    if isinstance(f, Blaschke):
        return f if f.is_centered else None
    if isinstance(f, Polynomial):
        coeffs = np.array(f.coefficients)
        if np.all(coeffs[:-1] == 0) and coeffs[-1] == 1:
            return Blaschke.power(f.degree)
    return None


def _check_on_boundary(f, x0):
    g = _circle_model(f)
    if isinstance(f, Blaschke):
        if abs(abs(x0) - 1) > 1e-6:
            raise PreconditionError("x0 must lie within 1e-6 of the unit circle")
    elif g is not None:
        if abs(abs(x0) - 1) > 1e-6:
            raise PreconditionError("x0 must lie within 1e-6 of the Julia set (the unit circle)")
    elif isinstance(f, Polynomial):
        if escape_rate(f, x0) > 1e-6:
            raise PreconditionError("x0 escapes: Green function above 1e-6")
    else:
        raise PreconditionError("backward orbits need a finite-degree map")


def _plane_chain(f, x0, n, rng):
    crit = np.asarray(f.critical_points(), dtype=complex)
    pts = np.empty(n + 1, dtype=complex)
    pts[0] = x0
    resamples = 0
    for k in range(n):
        roots = preimages_all(f, pts[k], warn=False)
        for attempt in range(RESAMPLE_LIMIT + 1):
            z = roots[rng.integers(0, f.degree)]
            if crit.size == 0 or np.min(np.abs(z - crit)) >= CRIT_TOL:
                break
            resamples += 1
        else:
            raise CriticalFiberHit(f"every draw at step {k} landed within 1e-8 of a critical point")
        pts[k + 1] = z
    return pts, resamples


def _verify(f, pts):
    if pts.size < 2:
        return 0.0
    resid = np.abs(f(pts[1:]) - pts[:-1]) / (1 + np.abs(pts[:-1]))
    worst = float(resid.max())
    if worst >= VERIFY_TOL:
        k = int(np.argmax(resid))
        raise VerificationFailed(f"f(x_{k + 1}) misses x_{k} by {worst:.3g}")
    return worst


def sample_backward_orbit(f: MapSpec, x0, N: int, mode="plane_equal_weight", seed=0, *, cell=None,
                          key=0, max_chain=1_000_000) -> BackwardOrbit:
    """Sample a backward orbit of depth N starting at a boundary point x0.

    ``plane_equal_weight`` picks each preimage uniformly (finite degree maps),
    ``circle_transfer`` uses the 1/|g'| weights of a centered Blaschke product
    (z^d is treated as its own Blaschke model), and ``first_return`` records the
    successive visits of an underlying chain to ``cell``.
    """
    if mode not in MODES:
        raise PreconditionError(f"unknown sampling mode {mode!r}")
    if N < 0:
        raise PreconditionError("depth must be non-negative")
    x0 = complex(x0)
    _check_on_boundary(f, x0)
    if mode == "first_return":
        return _first_return_orbit(f, x0, N, seed, cell, key, max_chain)
    if mode == "circle_transfer":
        g = _circle_model(f)
        if g is None:
            raise PreconditionError("circle_transfer needs a centered Blaschke model")
        orbit = backward_sample_circle(g, x0, N, seed, key=key)
        orbit.max_residual = _verify(f, orbit.points)
        return orbit
    if not isinstance(f, FINITE_DEGREE):
        raise PreconditionError("plane_equal_weight needs a finite-degree map")
    pts, resamples = _plane_chain(f, x0, N, substream(seed, key))
    resid = _verify(f, pts)
    derivs = f.derivative(pts[1:])
    logw = np.full(N, -math.log(f.degree))
    return BackwardOrbit(pts, derivs, logw, mode, resamples=resamples, max_residual=resid)


def _first_return_orbit(f, x0, N, seed, cell, key, max_chain):
    if cell is None:
        raise PreconditionError("first_return mode needs a cell")
    if not bool(cell.contains(np.asarray(x0))):
        raise PreconditionError("x0 must lie in the cell")
    g = _circle_model(f)
    length = max(4 * N, 16)
    while True:
        if g is not None:
            base = backward_sample_circle(g, x0, length, seed, key=key)
            chain, logw_all = base.points, base.log_weights
        else:
            chain, _ = _plane_chain(f, x0, length, substream(seed, key))
            logw_all = np.full(length, -math.log(f.degree))
        hits = np.flatnonzero(cell.contains(chain))
        if hits.size > N or length >= max_chain:
            break
        length = min(2 * length, max_chain)
    if hits.size <= N:
        raise ReturnTimeBlowup("chain cap reached before N returns",
                               stats={"returns": int(hits.size - 1), "chain_length": int(length)})
    idx = hits[: N + 1]
    chain = chain[: idx[-1] + 1]
    resid = _verify(f, chain)
    logd = np.log(np.abs(f.derivative(chain[1:])))
    phase = np.angle(f.derivative(chain[1:]))
    csum = np.concatenate([[0.0], np.cumsum(logd)])
    psum = np.concatenate([[0.0], np.cumsum(phase)])
    wsum = np.concatenate([[0.0], np.cumsum(logw_all[: idx[-1]])])
    step_log = csum[idx[1:]] - csum[idx[:-1]]
    with np.errstate(over="ignore"):
        derivs = np.exp(step_log + 1j * (psum[idx[1:]] - psum[idx[:-1]]))
    orbit = BackwardOrbit(chain[idx], derivs, wsum[idx[1:]] - wsum[idx[:-1]], "first_return",
                          return_times=np.diff(idx), chain=chain, max_residual=resid)
    orbit.meta["cell"] = cell.to_dict() if hasattr(cell, "to_dict") else repr(cell)
    orbit.meta["step_log_derivs"] = step_log
    return orbit


def _log_chain(orbit: BackwardOrbit):
    if "step_log_derivs" in orbit.meta:
        return np.concatenate([[0.0], np.cumsum(orbit.meta["step_log_derivs"])])
    return orbit.log_derivative_chain()


# -- towers ---------------------------------------------------------------------------

@dataclass
class BranchTower:
    """Radius schedule and per-level certificates of an inverse-branch tower.

    Arrays indexed by level hold the values for n = n2, ..., depth (see
    ``levels``); ``deriv_at_base`` holds |F_n'(x_0)| for every n = 0..depth.
    ``koebe_bounds`` is NaN at the first level, where no larger disk is known.
    """

    base: Disk
    eta: float
    M: float
    n2: int
    depth: int
    P: float
    chi_hat: float
    b: np.ndarray
    level_radii: np.ndarray
    diam_certs: np.ndarray
    koebe_bounds: np.ndarray
    deriv_at_base: np.ndarray
    branch_residuals: np.ndarray
    refinement_gaps: np.ndarray
    tail_factor: float
    boundary_offsets: list = field(default_factory=list, repr=False)
    level_centers: np.ndarray | None = field(default=None, repr=False)
    boundary_angles: np.ndarray | None = field(default=None, repr=False)
    return_times: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.n2, self.depth + 1)

    @property
    def certified(self) -> np.ndarray:
        return self.diam_certs <= self.eta * self.M ** self.levels

    def boundary_points(self, n) -> np.ndarray:
        """F_n on the circle |y - x_0| = level_radii[n], sampled at ``boundary_angles``."""
        i = n - self.n2
        return self.level_centers[i] + self.boundary_offsets[i]

    def level_disk(self, n) -> Disk:
        return Disk(self.base.center, float(self.level_radii[n - self.n2]))

    def to_dict(self):
        return {
            "base": {"center": [self.base.center.real, self.base.center.imag], "radius": self.base.radius},
            "eta": self.eta,
            "M": self.M,
            "M_interpretation": M_INTERPRETATION,
            "n2": self.n2,
            "depth": self.depth,
            "P": self.P,
            "chi_hat": self.chi_hat,
            "schedule_condition": 32 * self.base.radius * self.P,
            "b": self.b.tolist(),
            "level_radii": self.level_radii.tolist(),
            "diam_certs": self.diam_certs.tolist(),
            "koebe_bounds": [None if math.isnan(v) else v for v in self.koebe_bounds],
            "deriv_at_base": self.deriv_at_base.tolist(),
            "branch_residuals": self.branch_residuals.tolist(),
            "refinement_gaps": self.refinement_gaps.tolist(),
            "tail_factor": self.tail_factor,
            "return_times": None if self.return_times is None else self.return_times.tolist(),
            "meta": {k: v for k, v in self.meta.items() if isinstance(v, (int, float, str, bool, dict))},
        }


def _schedule_start(logD, logM):
    """Smallest n >= 1 with |(f^m)'(x_m)|^{-1/4} < M^m for all m in [n, N]."""
    N = logD.size - 1
    m = np.arange(1, N + 1)
    ok = -logD[1:] / 4 < m * logM
    bad = np.flatnonzero(~ok)
    return 1 if bad.size == 0 else int(bad[-1]) + 2


def _tail_log(M, N):
    """log prod_{m >= N} (1 - M^{m+1}/2)^{-1}."""
    total, m = 0.0, N
    while True:
        term = -math.log1p(-0.5 * M ** (m + 1))
        total += term
        if term < 1e-18:
            return total
        m += 1


def default_eta(f: MapSpec, x0) -> float:
    """Half the distance from x0 to the nearest postcritical point."""
    pc = postcritical_points(f)
    if pc.size == 0:
        return 0.5
    return 0.5 * float(np.min(np.abs(pc - complex(x0))))


def _radial_paths(radii, n_boundary):
    """Offsets of 64 radial paths from the base point, one row per direction."""
    theta = 2 * np.pi * np.arange(n_boundary) / n_boundary
    return theta, np.exp(1j * theta)[:, None] * radii[None, :]


def _lift_through(f, offsets, bases):
    """Lift offset paths successively through single-map steps based at ``bases``."""
    for x in bases:
        offsets = lift_offsets_adaptive(f, x, offsets)
    return offsets


def _diameter(points):
    pts = np.asarray(points)
    return float(np.max(np.abs(pts[:, None] - pts[None, :])))


def _mp_bits(log_total):
    return int(MP_BITS + math.ceil(log_total / math.log(2)))


def _mp_chain(f, x0, bases, bits):
    """The backward chain re-solved in multiprecision from its double values."""
    with gmpy2.context(gmpy2.context(), precision=bits):
        eps = gmpy2.mpfr(2) ** (-bits + 8)
        out = [to_mpc(x0)]
        for x in bases:
            z = to_mpc(x)
            for _ in range(12):
                step = (evaluate_mp(f, z) - out[-1]) / derivative_mp(f, z)
                z = z - step
                if abs(step) <= eps * (1 + abs(z)):
                    break
            out.append(z)
    return out


def _mp_branch_check(f, ref_top, y_offsets, z_offsets, x0, n_steps, bits):
    """Newton-refine F_n(y) in multiprecision on f^n(z) = y.

    ``z_offsets`` are the double offsets of F_n(y) from the reference chain
    point ``ref_top``. Returns the residual |f^n(z*) - y| at the refined point
    and the gap |z* - z| relative to the spread of the offsets.
    """
    with gmpy2.context(gmpy2.context(), precision=bits):
        x0m = to_mpc(x0)
        yy = np.array([x0m + to_mpc(v) for v in y_offsets], dtype=object)
        start = np.array([ref_top + to_mpc(v) for v in z_offsets], dtype=object)
        zz = start.copy()

        def forward(u):
            w, dw = u, np.full(u.shape, gmpy2.mpc(1), dtype=object)
            for _ in range(n_steps):
                dw = dw * derivative_mp(f, w)
                w = evaluate_mp(f, w)
            return w, dw

        for _ in range(int(math.ceil(math.log2(bits / 40.0))) + 2):
            w, dw = forward(zz)
            zz = zz - (w - yy) / dw
        w, _ = forward(zz)
        resid = max(float(abs(v)) for v in (w - yy))
        gap = max(float(abs(v)) for v in (zz - start))
    spread = _diameter(z_offsets)
    return resid, gap / spread if spread > 0 else math.inf


def _build_tower(f, x0, logD, step_seeds, eta, M, *, n_boundary=N_BOUNDARY, max_halvings=40,
                 check_identity=True, n_inner=16):
    N = logD.size - 1
    if N < 1:
        raise ScheduleNeverStarts("an orbit of depth 0 has no schedule")
    chi_hat = float(logD[N] / N)
    if not chi_hat > 0:
        raise ScheduleNeverStarts(f"empirical exponent {chi_hat:.4g} is not positive")
    if M is None:
        M = math.exp(-chi_hat / 5)
    if not 0 < M < 1:
        raise PreconditionError("M must lie in (0, 1)")
    logM = math.log(M)
    n2 = _schedule_start(logD, logM)
    if n2 > N / 2:
        raise ScheduleNeverStarts(f"derivative condition first holds from n2={n2} > N/2={N / 2}")
    if eta is None:
        eta = default_eta(f, x0)
    if not eta > 0:
        raise PreconditionError("eta must be positive")

    # b_n for n = n2..N (b_N from the tail bound), cumulative products of (1-b)^{-1}
    b = 0.5 * np.exp(-logD[n2 + 1:] / 4)
    b = np.append(b, 0.5 * M ** (N + 1))
    tail = _tail_log(M, N + 1)
    logfac = -np.log1p(-b)
    logcum = np.cumsum(logfac[::-1])[::-1] + tail  # index n - n2 -> log prod_{m>=n}
    P = math.exp(logcum[0])
    rel = np.exp(logcum)  # rho_n / r
    deriv = np.exp(-logD)
    levels = np.arange(n2, N + 1)

    r = 0.999 * eta / (32 * P)
    for halving in range(max_halvings + 1):
        radii_rel = np.unique(np.concatenate([[0.0], rel[0] * np.arange(1, n_inner + 1) / n_inner, rel]))
        theta, paths = _radial_paths(r * radii_rel, n_boundary)
        try:
            lifted = _lift_through(f, paths, [s for step in step_seeds[:n2] for s in step])
        except (CriticalProximity, StepTooLarge):
            r *= 0.5
            continue
        col = np.searchsorted(radii_rel, rel[0])
        if _diameter(lifted[:, col]) > eta * M ** n2:
            r *= 0.5
            continue
        try:
            result = _climb(f, lifted, radii_rel, rel, levels, step_seeds, eta, M, b, deriv, r)
        except _Restart:
            r *= 0.5
            continue
        break
    else:
        raise BranchObstructed("no admissible base radius found", level=n2)

    diam, koebe, images = result
    resid = np.zeros(levels.size)
    gaps = np.zeros(levels.size)
    flat = [s for step in step_seeds for s in step]
    steps_done = np.cumsum([len(s) for s in step_seeds])
    bits = _mp_bits(logD[N])
    if check_identity:
        ref = _mp_chain(f, x0, flat, bits)
        for i, n in enumerate(levels):
            k = int(steps_done[n - 1])
            y = r * rel[i] * np.exp(1j * theta)
            resid[i], gaps[i] = _mp_branch_check(f, ref[k], y, images[i], x0, k, bits)
    tops = np.array([flat[int(steps_done[n - 1]) - 1] for n in levels])
    return BranchTower(
        base=Disk(x0, r), eta=float(eta), M=float(M), n2=int(n2), depth=int(N), P=float(P),
        chi_hat=chi_hat, b=b, level_radii=r * rel, diam_certs=diam, koebe_bounds=koebe,
        deriv_at_base=deriv, branch_residuals=resid, refinement_gaps=gaps, tail_factor=math.exp(tail),
        boundary_offsets=images, level_centers=tops, boundary_angles=theta,
        meta={"base_halvings": halving, "M_interpretation": M_INTERPRETATION, "mp_bits": bits},
    )


class _Restart(Exception):
    pass


def _climb(f, lifted, radii_rel, rel, levels, step_seeds, eta, M, b, deriv, r):
    """Continue the radial paths from level n2 to the top and certify each level."""
    diam = np.empty(levels.size)
    koebe = np.full(levels.size, np.nan)
    images = []
    for i, n in enumerate(levels):
        if i > 0:
            # F_n = F_1 o F_{n-1} on D(x0, rho_{n-1}): drop path nodes outside that disk
            keep = radii_rel <= rel[i - 1] * (1 + 1e-12)
            radii_rel = radii_rel[keep]
            try:
                lifted = _lift_through(f, lifted[:, keep], step_seeds[n - 1])
            except (CriticalProximity, StepTooLarge) as exc:
                raise BranchObstructed(f"continuation failed at level {n}: {exc}", level=int(n)) from exc
            koebe[i] = (2 / b[i - 1] ** 3) * deriv[n] * 2 * r * rel[i]
        col = int(np.argmin(np.abs(radii_rel - rel[i])))
        ring = lifted[:, col].copy()
        images.append(ring)
        diam[i] = _diameter(ring)
        if diam[i] > eta * M ** n:
            raise _Restart
    return diam, koebe, images


def build_branch_tower(f: MapSpec, orbit: BackwardOrbit, eta=None, M=None, r_policy="max", *,
                       n_boundary=N_BOUNDARY, check_identity=True) -> BranchTower:
    """Inverse-branch tower F_n along a plain backward orbit.

    ``r_policy`` "max" starts from r just below eta / (32 P) and halves until
    the base level is definable and every level meets its diameter target; a
    float fixes r exactly (failures then raise).
    """
    if orbit.mode == "first_return":
        raise PreconditionError("use build_return_branch_tower for first-return orbits")
    crit = np.abs(orbit.step_derivs) < CRIT_TOL
    if crit.any():
        level = int(np.argmax(crit)) + 1
        raise BranchObstructed(f"x_{level} lies within 1e-8 of a critical point", level=level)
    logD = _log_chain(orbit)
    seeds = [[z] for z in orbit.points[1:]]
    x0 = complex(orbit.points[0])
    if r_policy == "max":
        return _build_tower(f, x0, logD, seeds, eta, M, n_boundary=n_boundary, check_identity=check_identity)
    return _fixed_radius_tower(f, x0, logD, seeds, eta, M, float(r_policy), n_boundary, check_identity)


def _fixed_radius_tower(f, x0, logD, seeds, eta, M, r, n_boundary, check_identity):
    tower = _build_tower(f, x0, logD, seeds, eta, M, n_boundary=n_boundary, max_halvings=0,
                         check_identity=False)
    if r > tower.base.radius:
        raise PreconditionError("requested r violates 32 r P < eta")
    scale = tower.eta * r / tower.base.radius
    return _build_tower(f, x0, logD, seeds, scale, tower.M, n_boundary=n_boundary, max_halvings=0,
                        check_identity=check_identity)


# -- contraction ----------------------------------------------------------------------

@dataclass
class ContractionReport:
    slope: float
    intercept: float
    chi: float
    n_levels: int
    slope_ok: bool
    relative_error: float
    C: float
    exponent: float

    def to_dict(self):
        return dict(self.__dict__)


def _level_series(t):
    if isinstance(t, BranchTower):
        n = t.levels
        return n.astype(float), np.log(t.deriv_at_base[n])
    arr = np.asarray(t, dtype=float)
    n = np.arange(arr.size)
    return n.astype(float), np.log(arr)


def verify_contraction(t, chi: float, *, tol=0.15) -> ContractionReport:
    """Fit the decay of log|F_n'(x_0)| over certified levels.

    ``t`` is a tower, a list of towers (pooled fit) or a plain sequence of
    derivative moduli indexed from n = 0.
    """
    towers = t if isinstance(t, (list, tuple)) and t and isinstance(t[0], BranchTower) else [t]
    ns, logs = zip(*(_level_series(x) for x in towers))
    n, y = np.concatenate(ns), np.concatenate(logs)
    if min(s.size for s in ns) < 10:
        raise InsufficientDepth("need at least 10 certified levels")
    fit = stats.linregress(n, y)
    exponent = -0.9 * chi
    C = float(np.exp(np.max(y - exponent * n)) * (1 + 1e-12))
    return ContractionReport(
        slope=float(fit.slope), intercept=float(fit.intercept), chi=float(chi), n_levels=int(n.size),
        slope_ok=bool(fit.slope <= -chi * (1 - tol)),
        relative_error=float(abs(fit.slope + chi) / chi), C=C, exponent=exponent,
    )


# -- first-return towers --------------------------------------------------------------

@dataclass
class ReturnPartition:
    """Disjoint arcs of the circle kept away from the recorded fixed points."""

    cells: list
    grand_orbit_exclusion_radius: float
    excluded_points: np.ndarray

    def to_dict(self):
        return {"cells": [c.to_dict() for c in self.cells],
                "grand_orbit_exclusion_radius": self.grand_orbit_exclusion_radius,
                "excluded_points": [[z.real, z.imag] for z in self.excluded_points]}


def circle_fixed_points(g: Blaschke):
    fps = _fixed_point_candidates(g)
    fps = fps[np.abs(np.abs(fps) - 1) < 1e-6]
    return fps / np.abs(fps)


def circle_return_partition(g, n_cells, exclusion=1e-3) -> ReturnPartition:
    """Equal arcs starting at a fixed point, split at the others and trimmed by ``exclusion``."""
    g = _circle_model(g) if not isinstance(g, Blaschke) else g
    if g is None:
        raise PreconditionError("partitions are built on the circle of a Blaschke model")
    fps = circle_fixed_points(g)
    start = float(np.angle(fps[0])) if fps.size else 0.0
    cuts = start + 2 * np.pi * np.arange(n_cells + 1) / n_cells
    extra = np.mod(np.angle(fps) - start, 2 * np.pi) + start
    cuts = np.unique(np.concatenate([cuts, extra, [start + 2 * np.pi]]))
    trim = 1.01 * exclusion
    cells = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        length = hi - lo - 2 * trim
        if length > trim:
            cells.append(Arc(float(np.angle(np.exp(0.5j * (lo + hi)))), float(length)))
    return ReturnPartition(cells, exclusion, fps)


def whole_circle_partition() -> ReturnPartition:
    return ReturnPartition([Arc(0.0, 2 * math.pi)], 0.0, np.array([], dtype=complex))


def _blowup_stats(T):
    N = T.size
    n = np.arange(1, N + 1)
    tail = n >= max(N / 2, 1)
    offenders = np.flatnonzero(tail & (T > n ** 2)) + 1
    return {
        "n_steps": int(N),
        "mean_return_time": float(T.mean()) if N else 0.0,
        "max_return_time": int(T.max()) if N else 0,
        "tail_offenders": offenders.tolist(),
        "tail_offender_count": int(offenders.size),
    }


def build_return_branch_tower(f: MapSpec, partition: ReturnPartition, cell_index: int, orbit: BackwardOrbit,
                              eps=None, M=None, *, n_boundary=N_BOUNDARY, check_identity=True) -> BranchTower:
    """Tower for the first-return map to ``partition.cells[cell_index]``.

    Each level lifts through the T(x_{n+1}) single-map steps of the underlying
    chain; the diameter target at level n is eps M^n.
    """
    if orbit.mode != "first_return" or orbit.return_times is None:
        raise PreconditionError("orbit must be sampled in first_return mode")
    cell = partition.cells[cell_index]
    if not np.all(cell.contains(orbit.points)):
        raise PreconditionError("orbit points must lie in the chosen cell")
    T = np.asarray(orbit.return_times, dtype=np.int64)
    blow = _blowup_stats(T)
    if blow["tail_offender_count"]:
        raise ReturnTimeBlowup("return times exceed n^2 in the tail of the orbit", stats=blow)
    chain = orbit.chain
    if np.any(np.abs(f.derivative(chain[1:])) < CRIT_TOL):
        k = int(np.argmax(np.abs(f.derivative(chain[1:])) < CRIT_TOL)) + 1
        level = int(np.searchsorted(np.cumsum(T), k)) + 1
        raise BranchObstructed("underlying chain meets a critical point", level=level)
    idx = np.concatenate([[0], np.cumsum(T)])
    seeds = [list(chain[idx[k] + 1: idx[k + 1] + 1]) for k in range(T.size)]
    tower = _build_tower(f, complex(orbit.points[0]), _log_chain(orbit), seeds, eps, M,
                         n_boundary=n_boundary, check_identity=check_identity)
    tower.return_times = T
    tower.meta["return_stats"] = blow
    tower.meta["cell"] = cell.to_dict()
    return tower


# -- periodic points ------------------------------------------------------------------

@dataclass
class PeriodicPointRecord:
    point: complex
    period: int
    residual: float
    multiplier_modulus: float
    banach_iterations: int
    search_depth: int
    base_point: complex
    radius: float

    def to_dict(self):
        return {
            "point": [self.point.real, self.point.imag],
            "period": self.period,
            "residual": self.residual,
            "multiplier_modulus": self.multiplier_modulus,
            "banach_iterations": self.banach_iterations,
            "search_depth": self.search_depth,
            "base_point": [self.base_point.real, self.base_point.imag],
            "radius": self.radius,
        }


def boundary_cloud(f: MapSpec, n_points=20_000, seed=0):
    """Sample points of the boundary set used to place base points."""
    if _circle_model(f) is not None:
        return np.exp(2j * np.pi * np.arange(n_points) / n_points)
    if isinstance(f, Polynomial):
        return julia_cloud(f, n_points, seed)
    raise PreconditionError("boundary sampling needs a polynomial or a Blaschke product on the circle")


def _nearest_boundary_point(f, center, cloud):
    if _circle_model(f) is not None:
        return center / abs(center) if center != 0 else 1 + 0j
    return complex(cloud[int(np.argmin(np.abs(cloud - center)))])


def _forward(f, z, m):
    w, dw = complex(z), 1 + 0j
    for _ in range(m):
        dw *= complex(f.derivative(np.asarray(w)))
        w = complex(f(np.asarray(w)))
    return w, dw


def _reduce_period(f, p, m, tol):
    for k in range(1, m + 1):
        if m % k == 0 and abs(_forward(f, p, k)[0] - p) < tol:
            return k
    return m


def find_periodic_point(f: MapSpec, target: Disk, search_budget=256, seed=0, *, max_depth=20, key=0,
                        cloud=None, n_boundary=N_BOUNDARY) -> PeriodicPointRecord:
    """Repelling periodic point in ``target`` from a contracting inverse branch.

    A base point x_0 on the boundary is chosen near the target center and
    r is set so that D(x_0, r) lies in the target and at most half as far
    out as the nearest postcritical point. Random equal-weight backward
    chains are scanned for the smallest m with x_m in D(x_0, r/3) and sampled
    diam F_m(D(x_0, r)) < r/3, so F_m maps D(x_0, r) into itself; its fixed point
    is found by iterating F_m and polished by Newton's method on f^m(z) - z.
    """
    if not isinstance(f, FINITE_DEGREE):
        raise PreconditionError("periodic search needs a finite-degree map")
    if cloud is None and _circle_model(f) is None:
        cloud = boundary_cloud(f, seed=seed)
    x0 = _nearest_boundary_point(f, target.center, cloud)
    dist = abs(x0 - target.center)
    if dist >= target.radius:
        raise PreconditionError("target disk does not meet the boundary sample")
    # the branch must exist on D(x0, r): stay clear of the postcritical set as well
    r = min(target.radius / 2, target.radius - dist, default_eta(f, x0))

    rng = substream(seed, key, 1)
    chains = np.empty((search_budget, max_depth + 1), dtype=complex)
    chains[:, 0] = x0
    for k in range(max_depth):
        roots = preimages_batch(f, chains[:, k])
        chains[:, k + 1] = roots[np.arange(search_budget), rng.integers(0, f.degree, search_budget)]

    theta = 2 * np.pi * np.arange(n_boundary) / n_boundary
    radial = np.exp(1j * theta)[:, None] * (r * np.linspace(0, 1, 13))[None, :]
    for m in range(1, max_depth + 1):
        near = np.flatnonzero(np.abs(chains[:, m] - x0) < r / 3)
        near = near[np.argsort(np.abs(chains[near, m] - x0))][:8]
        for c in near:
            seeds = chains[c, 1: m + 1]
            try:
                ring = _lift_through(f, radial, seeds)[:, -1]
            except (CriticalProximity, StepTooLarge):
                continue
            if _diameter(ring) >= r / 3:
                continue
            return _banach_fixed_point(f, x0, r, m, seeds)
    raise BudgetExhausted(f"no contracting return in {search_budget} chains of depth {max_depth}")


def _banach_fixed_point(f, x0, r, m, seeds, max_iter=500):
    p = x0
    for it in range(1, max_iter + 1):
        seg = np.linspace(0, p - x0, 9)[None, :]
        new = complex(seeds[-1] + _lift_through(f, seg, seeds)[0, -1])
        step = abs(new - p)
        p = new
        if step < 1e-12:
            break
    for _ in range(3):
        w, dw = _forward(f, p, m)
        if abs(dw - 1) == 0:
            break
        p = p - (w - p) / (dw - 1)
    tol = 1e-9
    residual = abs(_forward(f, p, m)[0] - p)
    if residual >= tol or abs(p - x0) >= r:
        raise VerificationFailed(f"periodic point residual {residual:.3g} above 1e-9")
    k = _reduce_period(f, p, m, tol)
    w, dw = _forward(f, p, k)
    if not abs(dw) > 1:
        raise VerificationFailed("fixed point of F_m is not repelling for f^m")
    return PeriodicPointRecord(complex(p), int(k), float(abs(w - p)), float(abs(dw)), it, int(m),
                               complex(x0), float(r))


@dataclass
class DensityScanReport:
    records: list
    warnings: list
    cover: list

    @property
    def hits(self) -> int:
        return sum(r is not None for r in self.records)

    @property
    def hit_rate(self) -> float:
        return self.hits / len(self.cover) if self.cover else 0.0

    def to_dict(self):
        return {
            "hits": self.hits,
            "hit_rate": self.hit_rate,
            "records": [None if r is None else r.to_dict() for r in self.records],
            "warnings": self.warnings,
            "cover": [{"center": [d.center.real, d.center.imag], "radius": d.radius} for d in self.cover],
        }


def density_scan(f: MapSpec, cover, budget=256, seed=0, *, max_depth=20) -> DensityScanReport:
    """One periodic-point search per cover disk."""
    cloud = None if _circle_model(f) is not None else boundary_cloud(f, seed=seed)
    records, notes = [], []
    for i, disk in enumerate(cover):
        try:
            records.append(find_periodic_point(f, disk, budget, seed, max_depth=max_depth, key=i, cloud=cloud))
        except PreconditionError as exc:
            warnings.warn(f"cover disk {i}: {exc}", stacklevel=2)
            notes.append({"disk": i, "error": type(exc).__name__, "message": str(exc)})
            records.append(None)
        except (BudgetExhausted, VerificationFailed) as exc:
            notes.append({"disk": i, "error": type(exc).__name__, "message": str(exc)})
            records.append(None)
    return DensityScanReport(records, notes, list(cover))


def ray_landing_cover(f: Polynomial, n_disks=16, radius=0.2):
    """Disks centered at the landing points of the rays of angles k / n_disks."""
    pts = external_ray_points(f, np.arange(n_disks) / n_disks)
    return [Disk(complex(z), radius) for z in pts]
