"""Harmonic measure of boundary disks: closed forms and walk-on-spheres.

Closed forms use explicit conformal maps onto the disk or the right half-plane:

* unit disk: a disk automorphism moving the basepoint to 0;
* sector |Arg z| < πα (and the slit plane, the case α = 1): z -> z^(1/(2α));
* basin of infinity of a polynomial: external rays (Monte-Carlo over angles).

The walk-on-spheres estimator jumps to a uniform point on the largest circle
inside the domain until it comes within ``shell`` of the boundary. Very small
targets can be handled by fixed-effort multilevel splitting on concentric
circles around the target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.spatial import ConvexHull, cKDTree

from .boundary import brolin_samples, critical_escape_rate, ray_landing_samples
from .errors import BackendUnavailable, NonPositiveValue, PreconditionError
from .geometry import INFINITY, Disk, MobiusTransform, circumcircle, winding_number
from .maps import Polynomial
from .rng import blocks, fsum, substream

SHELL = 1e-6
MAX_STEPS = 100_000


@dataclass(frozen=True)
class DomainSpec:
    """A planar domain with a basepoint.

    kind is one of ``unit_disk``, ``sector``, ``slit_plane``, ``poly_basin``,
    ``sampled_jordan``.
    """

    kind: str
    basepoint: object = 0j
    alpha: float = 1.0
    polynomial: Polynomial | None = None
    vertices: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("unit_disk", "sector", "slit_plane", "poly_basin", "sampled_jordan"):
            raise PreconditionError(f"unknown domain kind {self.kind!r}")
        if self.kind == "sector" and not 0 < self.alpha < 1:
            raise PreconditionError("sector parameter alpha must lie in (0, 1)")
        if self.kind == "poly_basin":
            if self.polynomial is None:
                raise PreconditionError("poly_basin needs a polynomial")
            object.__setattr__(self, "basepoint", INFINITY)
            return
        if self.kind == "sampled_jordan":
            verts = np.asarray(self.vertices, dtype=complex).ravel()
            if verts.size < 3:
                raise PreconditionError("a sampled Jordan domain needs at least three vertices")
            object.__setattr__(self, "vertices", verts)
            if winding_number(verts, np.array([complex(self.basepoint)]))[0] == 0:
                raise PreconditionError("basepoint lies outside the polygon")
        object.__setattr__(self, "basepoint", complex(self.basepoint))
        if not self.distance(np.array([self.basepoint]))[0][0] > 0:
            raise PreconditionError("basepoint must lie strictly inside the domain")

    # constructors
    @classmethod
    def unit_disk(cls, basepoint=0j):
        return cls("unit_disk", basepoint)

    @classmethod
    def sector(cls, alpha, basepoint=1.0):
        return cls("sector", basepoint, alpha=alpha)

    @classmethod
    def slit_plane(cls, basepoint=1.0):
        return cls("slit_plane", basepoint)

    @classmethod
    def poly_basin(cls, f):
        return cls("poly_basin", INFINITY, polynomial=f)

    @classmethod
    def sampled_jordan(cls, vertices, basepoint):
        return cls("sampled_jordan", basepoint, vertices=np.asarray(vertices, dtype=complex))

    @property
    def half_angle(self) -> float:
        return math.pi * (1.0 if self.kind == "slit_plane" else self.alpha)

    @property
    def bounded(self) -> bool:
        return self.kind in ("unit_disk", "sampled_jordan")

    @property
    def _tree(self):
        """KD-tree over the polyline refined so no edge exceeds the median edge length."""
        cache = self.__dict__.get("_tree_cache")
        if cache is None:
            v = self.vertices
            edge = np.roll(v, -1) - v
            seg = np.abs(edge)
            pieces = np.maximum(1, np.ceil(seg / np.median(seg) - 1e-9)).astype(int)
            fine = np.concatenate([v[i] + edge[i] * np.arange(m) / m for i, m in enumerate(pieces)])
            h = float(np.abs(np.roll(fine, -1) - fine).max())
            cache = (cKDTree(np.column_stack([fine.real, fine.imag])), h, fine)
            object.__setattr__(self, "_tree_cache", cache)
        return cache

    def distance(self, z):
        """Distance to the boundary and the nearest boundary point, for interior points z."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "unit_disk":
            mod = np.abs(z)
            proj = np.where(mod > 0, z / np.where(mod > 0, mod, 1), 1.0 + 0j)
            return 1.0 - mod, proj
        if self.kind in ("sector", "slit_plane"):
            return _sector_distance(z, self.half_angle)
        if self.kind == "sampled_jordan":
            tree, h, fine = self._tree
            return _polyline_distance(fine, z, tree, h)
        raise BackendUnavailable("walk-on-spheres needs an explicit boundary")

    def boundary_samples(self, m=4096, far=1e6):
        """Points on the boundary; unbounded kinds are truncated at radius ``far``."""
        if self.kind == "unit_disk":
            return np.exp(2j * np.pi * np.arange(m) / m)
        if self.kind == "sampled_jordan":
            v = self.vertices
            per = max(1, m // v.size)
            t = np.arange(per) / per
            return (v[:, None] + (np.roll(v, -1) - v)[:, None] * t[None, :]).ravel()
        if self.kind in ("sector", "slit_plane"):
            t = np.geomspace(1e-9, far, m // 2)
            th = self.half_angle
            return np.concatenate([t * np.exp(1j * th), t * np.exp(-1j * th), [0j]])
        return brolin_samples(self.polynomial, m, seed=0, key=11)


def _sector_distance(z, th):
    mod = np.abs(z)
    phi = np.angle(z)
    best = np.full(z.shape, np.inf)
    proj = np.zeros(z.shape, dtype=complex)
    for ray in (th, -th):
        diff = np.abs(ray - phi)
        u = complex(math.cos(ray), math.sin(ray))
        near_ray = diff <= math.pi / 2
        d = np.where(near_ray, mod * np.sin(np.minimum(diff, math.pi / 2)), mod)
        p = np.where(near_ray, (z * np.conj(u)).real * u, 0j)
        take = d < best
        best = np.where(take, d, best)
        proj = np.where(take, p, proj)
    return best, proj


def _segment_distance(z, a, b):
    ab = b - a
    den = np.abs(ab) ** 2
    t = np.clip(((z - a) * np.conj(ab)).real / np.where(den > 0, den, 1), 0, 1)
    p = a + t * ab
    return np.abs(z - p), p


def _polyline_distance(verts, z, tree, hmax, k=8):
    """Distance to the closed polyline, exact within 2*hmax of the vertices.

    Farther out the vertex lower bound d_v - hmax/2 is returned (with the
    nearest vertex as the projection), which keeps every walk-on-spheres disk
    inside the domain; absorption only happens in the exact zone. Near points
    test the edges at every vertex within d_v + hmax/2, which contains an
    endpoint of the nearest edge.
    """
    shape = z.shape
    zf = z.ravel()
    n = verts.size
    k = min(k, n)
    xy = np.column_stack([zf.real, zf.imag])
    dk, idx = tree.query(xy, k=k)
    dk, idx = dk.reshape(zf.size, k), idx.reshape(zf.size, k)
    d1 = dk[:, 0]
    best = d1 - hmax / 2
    proj = verts[idx[:, 0]]
    near = np.flatnonzero(d1 <= 2 * hmax)
    if near.size:
        zn = zf[near]
        dk, idx = dk[near], idx[near]
        bn, pn = _edges_min(verts, zn, idx)
        reach = d1[near] + hmax / 2
        short = np.flatnonzero(dk[:, -1] <= reach)
        for j in short:
            ball = np.asarray(tree.query_ball_point(xy[near[j]], reach[j] * (1 + 1e-12)), dtype=int)
            bj, pj = _edges_min(verts, zn[j:j + 1], ball[None, :])
            bn[j], pn[j] = bj[0], pj[0]
        best[near] = bn
        proj[near] = pn
    return best.reshape(shape), proj.reshape(shape)


def _edges_min(verts, z, idx):
    """Nearest point of z on the edges adjacent to the vertices idx (one row per point)."""
    n = verts.size
    best = np.full(z.shape, np.inf)
    proj = np.zeros(z.shape, dtype=complex)
    for j in range(idx.shape[1]):
        for off in (-1, 0):
            i0 = (idx[:, j] + off) % n
            d, p = _segment_distance(z, verts[i0], verts[(i0 + 1) % n])
            take = d < best
            best = np.where(take, d, best)
            proj = np.where(take, p, proj)
    return best, proj


@dataclass
class HarmonicEstimate:
    value: float
    std_error: float
    n_samples: int
    backend: str
    censored: int = 0
    levels: int = 0

    def to_dict(self):
        return {
            "value": self.value,
            "std_error": self.std_error,
            "n_samples": self.n_samples,
            "backend": self.backend,
            "censored": self.censored,
            "levels": self.levels,
        }


# -- closed forms --------------------------------------------------------------

def circle_arc_of_disk(target: Disk):
    """The arc of the unit circle inside the target disk as (center angle, half-width).

    Returns half-width 0 for an empty intersection and pi for the full circle.
    """
    c, r = target.center, target.radius
    m = abs(c)
    if m == 0:
        return 0.0, (math.pi if r > 1 else 0.0)
    # cos(half-width) = (1 + m^2 - r^2) / (2m); 1 - cos computed without cancellation
    one_minus = (r * r - (1 - m) ** 2) / (2 * m)
    if one_minus <= 0:
        return math.atan2(c.imag, c.real), 0.0
    if one_minus >= 2:
        return math.atan2(c.imag, c.real), math.pi
    return math.atan2(c.imag, c.real), 2 * math.asin(math.sqrt(one_minus / 2))


def _disk_riemann(dom: DomainSpec, target: Disk) -> float:
    center, half = circle_arc_of_disk(target)
    if half == 0.0:
        return 0.0
    if half == math.pi:
        return 1.0
    b = dom.basepoint
    if b == 0:
        return half / math.pi
    phi = MobiusTransform.disk_automorphism(b)
    e1 = phi(complex(math.cos(center - half), math.sin(center - half)))
    e2 = phi(complex(math.cos(center + half), math.sin(center + half)))
    sweep = (math.atan2(e2.imag, e2.real) - math.atan2(e1.imag, e1.real)) % (2 * math.pi)
    return sweep / (2 * math.pi)


def _ray_interval(th, target: Disk):
    """Parameter interval {t >= 0 : t e^{i th} in target}, or None."""
    c, r = target.center, target.radius
    p = (c * complex(math.cos(th), -math.sin(th))).real
    disc = p * p - abs(c) ** 2 + r * r
    if disc <= 0:
        return None
    s = math.sqrt(disc)
    lo, hi = max(p - s, 0.0), p + s
    if hi <= lo:
        return None
    return lo, hi


def _sector_riemann(dom: DomainSpec, target: Disk) -> float:
    th = dom.half_angle
    k = math.pi / (2 * th)  # exponent of the map onto the right half-plane
    b = dom.basepoint
    w0 = abs(b) ** k * complex(math.cos(k * math.atan2(b.imag, b.real)), math.sin(k * math.atan2(b.imag, b.real)))
    if th == math.pi:
        # both banks of the slit carry the same parameter interval
        rays = [(th, 1.0), (th, -1.0)]
    else:
        rays = [(th, 1.0), (-th, -1.0)]
    total = 0.0
    for ray, side in rays:
        iv = _ray_interval(ray, target)
        if iv is None:
            continue
        y1, y2 = side * iv[0] ** k, side * iv[1] ** k
        lo, hi = min(y1, y2), max(y1, y2)
        total += (math.atan((hi - w0.imag) / w0.real) - math.atan((lo - w0.imag) / w0.real)) / math.pi
    return min(max(total, 0.0), 1.0)


def riemann_measure(dom: DomainSpec, target: Disk) -> float:
    """Exact harmonic measure of target ∩ ∂U from the basepoint."""
    if dom.kind == "unit_disk":
        return _disk_riemann(dom, target)
    if dom.kind in ("sector", "slit_plane"):
        return _sector_riemann(dom, target)
    raise BackendUnavailable(f"no closed-form conformal map for {dom.kind}")


# -- walk on spheres --------------------------------------------------------------

ABSORBED, ENTERED, CENSORED = 0, 1, 2


def _walk(dom, starts, rng, shell, max_steps, stop: Disk | None = None):
    z = np.array(starts, dtype=complex, copy=True)
    status = np.full(z.size, CENSORED, dtype=np.int8)
    active = np.arange(z.size)
    for _ in range(int(max_steps)):
        if active.size == 0:
            break
        za = z[active]
        if stop is not None:
            inside = np.abs(za - stop.center) < stop.radius
            if inside.any():
                status[active[inside]] = ENTERED
                active, za = active[~inside], za[~inside]
        d, proj = dom.distance(za)
        hit = d < shell
        if hit.any():
            z[active[hit]] = proj[hit]
            status[active[hit]] = ABSORBED
            active, za, d = active[~hit], za[~hit], d[~hit]
        z[active] = za + d * np.exp(2j * np.pi * rng.uniform(0.0, 1.0, active.size))
    return z, status


def wos_exit_points(dom: DomainSpec, n, seed, *, shell=SHELL, max_steps=MAX_STEPS, key=0):
    """Exit points of n walks from the basepoint; censored walks are returned as NaN."""
    out = np.empty(n, dtype=complex)
    for b, lo, hi in blocks(n):
        rng = substream(seed, key, b)
        z, status = _walk(dom, np.full(hi - lo, dom.basepoint), rng, shell, max_steps)
        z[status != ABSORBED] = complex(np.nan, np.nan)
        out[lo:hi] = z
    return out


def _binomial(hits, n, backend, censored=0):
    p = hits / n
    return HarmonicEstimate(p, math.sqrt(max(p * (1 - p), 0.0) / n), n, backend, censored)


def measure_from_points(points, target: Disk, backend="wos") -> HarmonicEstimate:
    pts = np.asarray(points, dtype=complex)
    censored = int(np.count_nonzero(~np.isfinite(pts)))
    hits = int(np.count_nonzero(np.abs(pts - target.center) < target.radius))
    return _binomial(hits, pts.size, backend, censored)


def _splitting(dom, target: Disk, n, seed, shell, max_steps, ratio=0.5, key=0):
    """Fixed-effort multilevel splitting on circles |z - c| = r / ratio^j."""
    c, r = target.center, target.radius
    dist0 = abs(dom.basepoint - c)
    radii = []
    rad = r / ratio
    while rad < dist0 * ratio:
        radii.append(rad)
        rad /= ratio
    radii = radii[::-1]
    states = np.full(n, dom.basepoint)
    log_p, rel_var, censored = 0.0, 0.0, 0
    for j, rad in enumerate(radii):
        hits = []
        for b, lo, hi in blocks(n):
            rng = substream(seed, key, j, b)
            z, status = _walk(dom, states[lo:hi], rng, shell, max_steps, Disk(c, rad))
            hits.append(z[status == ENTERED])
            censored += int(np.count_nonzero(status == CENSORED))
        hits = np.concatenate(hits)
        if hits.size == 0:
            return HarmonicEstimate(0.0, 0.0, n, "wos", censored, j + 1)
        p = hits.size / n
        log_p += math.log(p)
        rel_var += (1 - p) / (n * p)
        pick = substream(seed, key, j, 10**6).integers(0, hits.size, n)
        states = hits[pick]
    success = 0
    for b, lo, hi in blocks(n):
        rng = substream(seed, key, len(radii), b)
        z, status = _walk(dom, states[lo:hi], rng, shell, max_steps)
        censored += int(np.count_nonzero(status == CENSORED))
        success += int(np.count_nonzero((status == ABSORBED) & (np.abs(z - c) < r)))
    if success == 0:
        return HarmonicEstimate(0.0, 0.0, n, "wos", censored, len(radii) + 1)
    pf = success / n
    value = math.exp(log_p) * pf
    rel_var += (1 - pf) / (n * pf)
    return HarmonicEstimate(value, value * math.sqrt(rel_var), n, "wos", censored, len(radii) + 1)


def estimate_disk_measure(dom: DomainSpec, target: Disk, n=100_000, seed=0, *, backend="riemann",
                          splitting=False, shell=SHELL, max_steps=MAX_STEPS) -> HarmonicEstimate:
    """Harmonic measure of target ∩ ∂U seen from the basepoint.

    ``backend='riemann'`` returns the closed form (for the basin of infinity the
    pushforward of uniform external angles, tagged ``boettcher``).
    ``backend='wos'`` runs ``n`` walks; ``splitting=True`` switches to
    fixed-effort multilevel splitting for targets far smaller than their distance
    to the basepoint. The splitting standard error treats levels as independent.
    """
    if backend == "riemann":
        if dom.kind == "poly_basin":
            return basin_measure(dom, target, n, seed)
        return HarmonicEstimate(riemann_measure(dom, target), 0.0, 0, "riemann")
    if backend != "wos":
        raise PreconditionError(f"unknown backend {backend!r}")
    if n < 1000:
        raise PreconditionError("walk-on-spheres estimates need at least 1000 walks")
    if dom.kind == "poly_basin":
        raise BackendUnavailable("walk-on-spheres is not available for basins of infinity")
    if splitting:
        return _splitting(dom, target, n, seed, shell, max_steps)
    return measure_from_points(wos_exit_points(dom, n, seed, shell=shell, max_steps=max_steps), target)


def basin_measure(dom: DomainSpec, target: Disk, n, seed) -> HarmonicEstimate:
    f = dom.polynomial
    if critical_escape_rate(f) == 0 and abs(f.leading - 1) < 1e-14:
        return measure_from_points(ray_landing_samples(f, n, seed), target, "boettcher")
    return measure_from_points(brolin_samples(f, n, seed), target, "brolin")


# -- validators -------------------------------------------------------------------

def fit_decay_exponent(radii, values):
    """Least-squares slope of log(value) against log(radius), with its standard error."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if radii.size < 4 or radii.size != values.size:
        raise PreconditionError("need at least four (radius, value) pairs")
    if np.any(np.diff(radii) >= 0):
        raise PreconditionError("radii must be strictly decreasing")
    if np.any(values <= 0) or np.any(radii <= 0):
        raise NonPositiveValue("log-log fit needs positive radii and values")
    fit = stats.linregress(np.log(radii), np.log(values))
    return float(fit.slope), float(fit.stderr)


def _diameter(points):
    pts = np.asarray(points, dtype=complex)
    pts = pts[np.isfinite(pts)]
    xy = np.column_stack([pts.real, pts.imag])
    if pts.size > 3:
        try:
            pts = pts[ConvexHull(xy).vertices]
        except Exception:  # degenerate (collinear) clouds
            pass
    return float(np.abs(pts[:, None] - pts[None, :]).max())


def beurling_normalization(dom: DomainSpec):
    """The map M2∘M1 sending the basepoint to infinity and ∂U to a set of diameter 2."""
    if dom.basepoint is INFINITY:
        m1 = MobiusTransform.identity()
        image = dom.boundary_samples()
    else:
        m1 = MobiusTransform(0, 1, 1, -dom.basepoint)
        bd = dom.boundary_samples()
        image = np.asarray(m1(bd))
        if not dom.bounded:
            image = np.append(image[np.isfinite(image)], 0j)  # infinity on the boundary maps to 0
    scale = 2.0 / _diameter(image)
    return MobiusTransform(scale, 0, 0, 1).compose(m1)


@dataclass
class BeurlingReport:
    passed: bool
    worst_margin: float
    rows: list


def beurling_bound_check(dom: DomainSpec, targets, n=100_000, seed=0, *, backend=None) -> BeurlingReport:
    """Check estimate - 3σ <= sqrt(2 r') after the normalisation above.

    With the wos backend the targets share one set of n walks.

    r' bounds the radius of a disk centred at the image of the target centre
    that contains the image of the target, so the claim for boundary-centred
    disks applies.
    """
    if backend is None:
        backend = "wos" if dom.kind == "sampled_jordan" else "riemann"
    m = beurling_normalization(dom)
    rows = []
    worst = math.inf
    # one set of walks serves every target; each estimate stays binomial
    pts = None
    if backend == "wos":
        if n < 1000:
            raise PreconditionError("walk-on-spheres estimates need at least 1000 walks")
        pts = wos_exit_points(dom, n, seed)
    for target in targets:
        img = m.image_disk(target)
        x_img = m(target.center)
        r_norm = img.radius + abs(img.center - x_img)
        if pts is not None:
            est = measure_from_points(pts, target)
        else:
            est = estimate_disk_measure(dom, target, n, seed, backend=backend)
        bound = math.sqrt(2 * r_norm)
        margin = bound - (est.value - 3 * est.std_error)
        worst = min(worst, margin)
        rows.append({"radius": target.radius, "r_normalized": r_norm, "value": est.value,
                     "std_error": est.std_error, "bound": bound, "margin": margin})
    return BeurlingReport(worst >= 0, worst, rows)


def star_domain(seed, n_vertices=512, n_modes=4, amplitude=0.25):
    """A random star-shaped polygon around 0 (boundary radius 1 + small Fourier modes)."""
    rng = np.random.default_rng(seed)
    th = 2 * np.pi * np.arange(n_vertices) / n_vertices
    rad = np.ones(n_vertices)
    amps = rng.uniform(0, amplitude / n_modes, n_modes)
    phases = rng.uniform(0, 2 * np.pi, n_modes)
    for k in range(n_modes):
        rad += amps[k] * np.cos((k + 2) * th + phases[k])
    return DomainSpec.sampled_jordan(rad * np.exp(1j * th), 0j)


@dataclass
class SeriesReport:
    terms: list
    std_errors: list
    partial_sums: list
    tail: float


def shrinking_target_series(dom: DomainSpec, a, C, t, N, n=100_000, seed=0, *, backend="riemann") -> SeriesReport:
    """Partial sums of ω(D(a, C t^k)) for k < N, with the tail S_N - S_{N/2}."""
    if not 0 < t < 1 or not C > 0:
        raise PreconditionError("need 0 < t < 1 and C > 0")
    terms, errs = [], []
    for k in range(N):
        est = estimate_disk_measure(dom, Disk(a, C * t**k), n, seed + k, backend=backend)
        terms.append(est.value)
        errs.append(est.std_error)
    sums = np.cumsum(terms).tolist()
    tail = fsum(terms[N // 2:]) if N else 0.0
    return SeriesReport(terms, errs, sums, tail)


def arc_partition(n_arcs, offset=0.0):
    """Target disks whose traces on the unit circle are n_arcs equal disjoint arcs."""
    half = math.pi / n_arcs
    return [Disk(np.exp(1j * (offset + (2 * k + 1) * half)), 2 * math.sin(half / 2)) for k in range(n_arcs)]


def partition_measures(dom: DomainSpec, targets, n=100_000, seed=0, *, backend="riemann"):
    """Estimates for several targets from one shared set of walks (joint sampling)."""
    if backend == "riemann":
        return [estimate_disk_measure(dom, t, backend="riemann") for t in targets]
    pts = wos_exit_points(dom, n, seed)
    return [measure_from_points(pts, t) for t in targets]
