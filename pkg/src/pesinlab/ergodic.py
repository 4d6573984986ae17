"""Lyapunov exponents, growth diagnostics and first-return statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .boundary import escape_radius
from .errors import AllCensored, CriticalOnCircle, CriticalProximity, EmptyShell, OrbitEscaped, PreconditionError
from .geometry import INFINITY
from .inner import backward_circle_chains, circle_fiber
from .maps import Blaschke, FatouBaker, Polynomial, log_abs_derivative, preimages_batch
from .rng import blocks, fsum, mean_and_stderr, substream

CAUCHY_TOL = 1e-3
RETURN_CAP = 1_000_000


@dataclass
class LyapunovResult:
    chi: float
    method: str
    n: int
    running_tail: list = field(default_factory=list)
    std_error: float = 0.0
    n_chains: int = 1

    @property
    def converged(self) -> bool:
        tail = self.running_tail
        return len(tail) >= 2 and abs(tail[-1] - tail[-2]) <= CAUCHY_TOL

    @property
    def negative(self) -> bool:
        return self.chi < 0

    def to_dict(self):
        return {
            "chi": self.chi,
            "method": self.method,
            "n": self.n,
            "running_tail": self.running_tail,
            "std_error": self.std_error,
            "n_chains": self.n_chains,
            "converged": self.converged,
            "negative": self.negative,
        }


def lyapunov_quadrature_circle(g: Blaschke, n_quad=1024) -> LyapunovResult:
    """Periodic trapezoid rule for the Lebesgue average of log|g'| on the circle."""
    if not isinstance(g, Blaschke) or g.degree < 2:
        raise PreconditionError("quadrature needs a Blaschke product of degree >= 2")
    xi = np.exp(2j * np.pi * np.arange(n_quad) / n_quad)
    d = g.circle_derivative_modulus(xi)
    if np.any(d < 1e-12):
        raise CriticalOnCircle("|g'| vanishes at a quadrature node")
    chi = fsum(np.log(d)) / n_quad
    return LyapunovResult(chi, "quadrature", n_quad)


def _scalar_blaschke(g: Blaschke):
    zeros = [(a, a.conjugate(), 1 - abs(a) ** 2) for a in g.zeros]
    rot = g.rotation

    def step(z):
        w = rot
        dsum = 0.0
        for a, ac, s in zeros:
            w *= (z - a) / (1 - ac * z)
            dsum += s / abs(z - a) ** 2
        w /= abs(w)
        return w, dsum

    return step


def _scalar_polynomial(f: Polynomial):
    coeffs = f.coefficients[::-1]
    dcoeffs = [k * c for k, c in enumerate(f.coefficients)][1:][::-1]

    def step(z):
        w = 0j
        for c in coeffs:
            w = w * z + c
        dw = 0j
        for c in dcoeffs:
            dw = dw * z + c
        return w, abs(dw)

    return step


def _record_points(n):
    return sorted({max(1, (n * k) // 10) for k in range(1, 11)})


def birkhoff_average(f, x0, n, direction="forward", seed=0, *, n_chains=1) -> LyapunovResult:
    """Time average of log|f'| along an orbit.

    forward: (1/n) Σ log|f'(f^k x0)|, with circle points renormalised for
    Blaschke products and an escape check for polynomials.
    backward: (1/n) log|(f^n)'(x_n)| along natural-extension chains started at
    x0 (equal weights for polynomials, 1/|g'| weights for centered Blaschke
    products); with several chains the mean and its standard error are returned.
    """
    marks = _record_points(n)
    if direction == "forward":
        if isinstance(f, Blaschke):
            step = _scalar_blaschke(f)
            z = complex(x0) / abs(complex(x0))
        elif isinstance(f, Polynomial):
            step = _scalar_polynomial(f)
            z = complex(x0)
        else:
            def step(z):
                return complex(f(np.asarray(z))), abs(complex(f.derivative(np.asarray(z))))
            z = complex(x0)
        big = escape_radius(f) if isinstance(f, Polynomial) else math.inf
        logs = np.empty(n)
        for k in range(n):
            w, dmod = step(z)
            if dmod == 0:
                raise CriticalProximity(f"orbit hit a critical point at step {k}", index=k, point=z)
            logs[k] = math.log(dmod)
            z = w
            if not abs(z) < big:
                raise OrbitEscaped(f"orbit left the escape disk at step {k + 1}", step=k + 1)
        partial = np.cumsum(logs)
        tail = [float(partial[m - 1] / m) for m in marks]
        return LyapunovResult(fsum(logs) / n, "birkhoff_forward", n, tail)
    if direction != "backward":
        raise PreconditionError(f"unknown direction {direction!r}")
    sums = np.zeros(n_chains)
    tail_sums = []
    rng = substream(seed, 0)
    z = np.full(n_chains, complex(x0))
    if isinstance(f, Blaschke):
        if abs(complex(f(np.asarray(0j)))) > 1e-12:
            raise PreconditionError("backward circle chains need a centered Blaschke product")
        z = z / np.abs(z)
    elif not isinstance(f, Polynomial):
        raise PreconditionError("backward sampling needs a finite-degree map")
    mark_set = set(marks)
    for k in range(1, n + 1):
        if isinstance(f, Blaschke):
            roots, w = circle_fiber(f, z)
            cdf = np.cumsum(w, axis=1) / w.sum(axis=1, keepdims=True)
            j = np.minimum((cdf < rng.uniform(0, 1, n_chains)[:, None]).sum(axis=1), f.degree - 1)
            z = roots[np.arange(n_chains), j]
            sums += np.log(f.circle_derivative_modulus(z))
        else:
            roots = preimages_batch(f, z)
            z = roots[np.arange(n_chains), rng.integers(0, f.degree, n_chains)]
            sums += np.log(np.abs(f.derivative(z)))
        if k in mark_set:
            tail_sums.append(float(np.mean(sums) / k))
    mean, err = mean_and_stderr(sums / n)
    return LyapunovResult(mean, "birkhoff_backward", n, tail_sums, err, n_chains)


# -- sets and first returns --------------------------------------------------------------

@dataclass(frozen=True)
class Arc:
    """Open arc of the unit circle: angles within length/2 of ``center`` (radians)."""

    center: float
    length: float

    def __post_init__(self):
        if not 0 < self.length <= 2 * math.pi:
            raise PreconditionError("arc length must lie in (0, 2π]")

    @property
    def measure(self) -> float:
        return self.length / (2 * math.pi)

    def contains(self, z):
        if self.length >= 2 * math.pi:
            return np.ones(np.shape(z), dtype=bool)
        rel = np.angle(np.asarray(z) * complex(math.cos(-self.center), math.sin(-self.center)))
        return np.abs(rel) < self.length / 2

    def sample(self, rng, n):
        th = self.center + self.length * (rng.uniform(0, 1, n) - 0.5)
        return np.exp(1j * th)

    def to_dict(self):
        return {"kind": "arc", "center": self.center, "length": self.length}


@dataclass(frozen=True)
class DiskSet:
    """A disk in the plane together with its measure and a sampler of the conditioned measure."""

    center: complex
    radius: float
    measure: float
    sampler: object = field(default=None, compare=False, repr=False)

    def contains(self, z):
        return np.abs(np.asarray(z) - self.center) < self.radius

    def sample(self, rng, n):
        if self.sampler is None:
            raise PreconditionError("this disk set has no sampler for its conditioned measure")
        return self.sampler(rng, n)

    def to_dict(self):
        return {"kind": "disk", "center": [self.center.real, self.center.imag], "radius": self.radius,
                "measure": self.measure}


@dataclass
class ReturnData:
    set_descriptor: object
    return_times: np.ndarray
    measure_of_set: float
    censored: int = 0
    log_derivative_sums: np.ndarray | None = None

    def __post_init__(self):
        self.return_times = np.asarray(self.return_times, dtype=np.int64)
        if np.any(self.return_times < 1):
            raise PreconditionError("return times must be >= 1")


def _circle_step_vec(f):
    if isinstance(f, Blaschke):
        def step(z):
            w = f(z)
            return w / np.abs(w), np.log(f.circle_derivative_modulus(z))
    else:
        def step(z):
            return f(z), np.log(np.abs(f.derivative(z)))
    return step


def first_return(f, source, set_descriptor, n_trials, seed, *, max_steps=RETURN_CAP) -> ReturnData:
    """First return times to a set for ``n_trials`` starting points.

    ``source(rng, n)`` draws starting points from the set with the invariant
    measure conditioned on it (default: the set's own sampler). Trials that
    have not returned after ``max_steps`` iterations are censored.
    """
    source = source or set_descriptor.sample
    step = _circle_step_vec(f)
    times, logsums = [], []
    censored = 0
    for b, lo, hi in blocks(n_trials):
        rng = substream(seed, b)
        z = source(rng, hi - lo)
        t = np.zeros(hi - lo, dtype=np.int64)
        acc = np.zeros(hi - lo)
        active = np.arange(hi - lo)
        for k in range(1, int(max_steps) + 1):
            w, logd = step(z[active])
            acc[active] += logd
            z[active] = w
            back = set_descriptor.contains(w)
            t[active[back]] = k
            active = active[~back]
            if active.size == 0:
                break
        done = t > 0
        censored += int(np.count_nonzero(~done))
        times.append(t[done])
        logsums.append(acc[done])
    times = np.concatenate(times)
    if times.size == 0:
        raise AllCensored(f"no trial returned within {max_steps} steps")
    return ReturnData(set_descriptor, times, set_descriptor.measure, censored, np.concatenate(logsums))


@dataclass
class KacReport:
    passed: bool
    product: float
    margin: float
    mean_return: float
    n: int


def kac_check(rd: ReturnData) -> KacReport:
    """|mean(T) μ(X) - 1| <= 3 (std(T)/√n) μ(X)."""
    mu = rd.measure_of_set
    if not 0 < mu <= 1:
        raise PreconditionError("set measure must lie in (0, 1]")
    t = rd.return_times.astype(float)
    mean = fsum(t) / t.size
    sd = float(np.std(t, ddof=1)) if t.size > 1 else 0.0
    margin = 3 * sd / math.sqrt(t.size) * mu
    product = mean * mu
    return KacReport(abs(product - 1) <= margin + 1e-15, product, margin, mean, int(t.size))


@dataclass
class ReturnIdentityReport:
    left: float
    right: float
    relative_discrepancy: float
    left_std_error: float
    chi: float


def return_lyapunov_identity(f, set_descriptor, n_trials, seed, *, chi=None, source=None) -> ReturnIdentityReport:
    """Compare the average of log|(f^T)'| over the set with chi / μ(X)."""
    rd = first_return(f, source, set_descriptor, n_trials, seed)
    left, err = mean_and_stderr(rd.log_derivative_sums)
    if chi is None:
        if not isinstance(f, Blaschke):
            raise PreconditionError("supply chi for maps other than Blaschke products")
        chi = lyapunov_quadrature_circle(f).chi
    right = chi / rd.measure_of_set
    return ReturnIdentityReport(left, right, abs(left - right) / abs(right), err, chi)


# -- growth in sectors ----------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthSectorParams:
    alpha: float
    beta: float
    A: float
    B: float
    vertex: object
    direction: complex

    def __post_init__(self):
        if not 0 < self.alpha < 1 or not self.beta > 0 or not self.A > 0 or not self.B > 0:
            raise PreconditionError("need alpha in (0,1) and beta, A, B > 0")

    @property
    def integrable(self) -> bool:
        return self.beta < 1 / (2 * self.alpha)


@dataclass
class GrowthReport:
    beta_hat: float
    stderr: float
    integrable: bool
    envelope: list


def _sector_shell(params, r_outer, r_inner, n_rad=48, n_ang=48):
    """Polar grid of S_{α,r_outer} \\ S_{α,r_inner} (|z - x| between the radii)."""
    u = complex(params.direction) / abs(complex(params.direction))
    ang = math.pi * params.alpha * np.linspace(-1, 1, n_ang + 2)[1:-1]
    if params.vertex is INFINITY:
        rad = np.geomspace(1 / r_outer, 1 / r_inner, n_rad)
        return (rad[:, None] * u * np.exp(1j * ang)[None, :]).ravel()
    rad = np.geomspace(r_inner, r_outer, n_rad + 1)[:-1]
    return (complex(params.vertex) + rad[:, None] * u * np.exp(1j * ang)[None, :]).ravel()


def sector_growth_check(f, params: GrowthSectorParams, radii) -> GrowthReport:
    """Empirical order of growth β̂ of |f'| in sector shells.

    For each r < r0 = radii[0] the envelope max log⁺|f'| over the shell
    S_{α,r0} \\ S_{α,r} is recorded; β̂ is the slope of log(envelope) against
    log(1/r). With the vertex at infinity the shell is 1/r0 < |z| < 1/r.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size < 3 or np.any(np.diff(radii) >= 0):
        raise PreconditionError("need at least three strictly decreasing radii")
    env = []
    for r in radii[1:]:
        pts = _sector_shell(params, radii[0], r)
        if pts.size == 0:
            raise EmptyShell(f"empty shell at r={r}")
        logd = log_abs_derivative(f, pts)
        env.append(float(np.max(np.maximum(logd, 0.0))))
    env = np.array(env)
    x = np.log(1 / radii[1:])
    ok = env > 0
    if ok.sum() < 2:
        beta, err = 0.0, 0.0
    else:
        fit = stats.linregress(x[ok], np.log(env[ok]))
        beta, err = max(float(fit.slope), 0.0), float(fit.stderr)
    return GrowthReport(beta, err, beta < 1 / (2 * params.alpha), env.tolist())


def baker_strip_expansion(f: FatouBaker, half_width=math.pi / 2 - 0.01, x_range=(-5.0, 30.0), n=200):
    """min |f'| on horizontal bands of the given half-width around Im z = ±π."""
    x = np.linspace(*x_range, n)
    y = np.linspace(-half_width, half_width, n)
    pts = []
    for centre in (math.pi, -math.pi):
        pts.append((x[:, None] + 1j * (centre + y)[None, :]).ravel())
    pts = np.concatenate(pts)
    return float(np.min(np.abs(f.derivative(pts))))


def lyapunov_pushforward(h: Blaschke, m, n_quad=1024) -> float:
    """∫ log|h'(m(ξ))| dλ(ξ): the exponent of h for the pushforward of λ under m."""
    xi = np.exp(2j * np.pi * np.arange(n_quad) / n_quad)
    return fsum(np.log(np.abs(h.derivative(np.asarray(m(xi)))))) / n_quad
