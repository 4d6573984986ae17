"""Catalog of iterated maps with closed-form derivatives and inverse branches.

Every map is an immutable dataclass exposing ``__call__`` and ``derivative``,
both vectorised over numpy arrays. Finite-degree maps (polynomials and finite
Blaschke products) additionally support full preimage enumeration; all maps
support continuation of a chosen inverse branch along a path.
"""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import gmpy2
import numpy as np

from .errors import CriticalProximity, PreconditionError, RootFindingError, SchemaError, StepTooLarge
from .geometry import INFINITY

MP_PRECISION = 256


class ClusteredRootsWarning(UserWarning):
    """Two preimages lie closer than 1e-8: the fiber is ill-conditioned."""


def _as_complex_tuple(values):
    return tuple(complex(v) for v in values)


@dataclass(frozen=True)
class Polynomial:
    """p(z) = sum_k coefficients[k] z^k (lowest degree first)."""

    coefficients: tuple
    family = "polynomial"

    def __post_init__(self):
        coeffs = list(_as_complex_tuple(self.coefficients))
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs.pop()
        if len(coeffs) < 3:
            raise PreconditionError("polynomial maps must have degree >= 2")
        object.__setattr__(self, "coefficients", tuple(coeffs))

    @classmethod
    def quadratic(cls, c):
        """z^2 + c."""
        return cls((c, 0, 1))

    @classmethod
    def monomial(cls, d):
        return cls((0,) * d + (1,))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def leading(self) -> complex:
        return self.coefficients[-1]

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.full(z.shape, self.coefficients[-1], dtype=complex)
        with np.errstate(over="ignore", invalid="ignore"):
            for c in self.coefficients[-2::-1]:
                out = out * z + c
        return out

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        d = self.degree
        out = np.full(z.shape, d * self.coefficients[-1], dtype=complex)
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(d - 1, 0, -1):
                out = out * z + k * self.coefficients[k]
        return out

    def critical_points(self):
        dcoef = [k * c for k, c in enumerate(self.coefficients)][1:]
        return companion_roots(dcoef)

    def fiber_coefficients(self, w):
        coeffs = np.array(self.coefficients, dtype=complex)
        coeffs[0] -= w
        return coeffs

    def to_dict(self):
        return {"family": self.family, "coefficients": [complex_to_str(c) for c in self.coefficients]}


@dataclass(frozen=True)
class Blaschke:
    """rotation * prod (z - a) / (1 - conj(a) z) over the zeros a."""

    zeros: tuple
    rotation: complex = 1.0 + 0j
    family = "blaschke"

    def __post_init__(self):
        zeros = _as_complex_tuple(self.zeros)
        if not zeros:
            raise PreconditionError("a Blaschke product needs at least one zero")
        if any(abs(a) >= 1 for a in zeros):
            raise PreconditionError("Blaschke zeros must lie strictly inside the unit disk")
        rot = complex(self.rotation)
        if abs(abs(rot) - 1) > 1e-12:
            raise PreconditionError("Blaschke rotation must have modulus 1")
        object.__setattr__(self, "zeros", zeros)
        object.__setattr__(self, "rotation", rot)

    @classmethod
    def power(cls, d):
        return cls((0j,) * d)

    @property
    def degree(self) -> int:
        return len(self.zeros)

    @property
    def is_centered(self) -> bool:
        return any(a == 0 for a in self.zeros)

    def _factors(self, z):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.stack([(z - a) / (1 - a.conjugate() * z) for a in self.zeros])

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return self.rotation * np.prod(self._factors(z), axis=0)

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        fac = self._factors(z)
        # product rule with prefix/suffix products, exact at the zeros as well
        ones = np.ones((1,) + z.shape, dtype=complex)
        before = np.cumprod(np.concatenate([ones, fac[:-1]]), axis=0)
        after = np.cumprod(np.concatenate([ones, fac[:0:-1]]), axis=0)[::-1]
        total = np.zeros(z.shape, dtype=complex)
        for k, a in enumerate(self.zeros):
            total = total + (1 - abs(a) ** 2) / (1 - a.conjugate() * z) ** 2 * before[k] * after[k]
        return self.rotation * total

    def circle_derivative_modulus(self, xi):
        """|g'(xi)| for |xi| = 1, via sum (1 - |a|^2) / |xi - a|^2."""
        xi = np.asarray(xi, dtype=complex)
        return sum((1 - abs(a) ** 2) / np.abs(xi - a) ** 2 for a in self.zeros)

    def numerator_denominator(self):
        cached = self.__dict__.get("_num_den")
        if cached is None:
            num = np.polynomial.Polynomial([self.rotation])
            den = np.polynomial.Polynomial([1.0 + 0j])
            for a in self.zeros:
                num = num * np.polynomial.Polynomial([-a, 1])
                den = den * np.polynomial.Polynomial([1, -a.conjugate()])
            cached = (num, den)
            object.__setattr__(self, "_num_den", cached)
        return cached

    def critical_points(self):
        num, den = self.numerator_denominator()
        wr = num.deriv() * den - num * den.deriv()
        coeffs = np.trim_zeros(wr.coef, "b")
        if len(coeffs) < 2:
            return np.array([], dtype=complex)
        return companion_roots(coeffs)

    def fiber_coefficients(self, w):
        num, den = self.numerator_denominator()
        n = max(len(num.coef), len(den.coef))
        coeffs = np.zeros(n, dtype=complex)
        coeffs[: len(num.coef)] += num.coef
        coeffs[: len(den.coef)] -= w * den.coef
        return coeffs

    def to_dict(self):
        return {
            "family": self.family,
            "zeros": [complex_to_str(a) for a in self.zeros],
            "rotation": complex_to_str(self.rotation),
        }


@dataclass(frozen=True)
class ExpFamily:
    """lam * exp(z)."""

    lam: complex
    family = "exp"
    degree = None

    def __post_init__(self):
        object.__setattr__(self, "lam", complex(self.lam))
        if self.lam == 0:
            raise PreconditionError("lambda must be non-zero")

    def __call__(self, z):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.lam * np.exp(np.asarray(z, dtype=complex))

    def derivative(self, z):
        return self(z)

    def to_dict(self):
        return {"family": self.family, "lam": complex_to_str(self.lam)}


@dataclass(frozen=True)
class SineFamily:
    """lam * sin(z)."""

    lam: complex
    family = "sine"
    degree = None

    def __post_init__(self):
        object.__setattr__(self, "lam", complex(self.lam))
        if self.lam == 0:
            raise PreconditionError("lambda must be non-zero")

    def __call__(self, z):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.lam * np.sin(np.asarray(z, dtype=complex))

    def derivative(self, z):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.lam * np.cos(np.asarray(z, dtype=complex))

    def to_dict(self):
        return {"family": self.family, "lam": complex_to_str(self.lam)}


@dataclass(frozen=True)
class FatouBaker:
    """z + exp(-z), whose Baker domains lie in horizontal strips."""

    family = "fatou_baker"
    degree = None
    window: float = 8 * math.pi

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        with np.errstate(over="ignore", invalid="ignore"):
            return z + np.exp(-z)

    def derivative(self, z):
        with np.errstate(over="ignore", invalid="ignore"):
            return 1 - np.exp(-np.asarray(z, dtype=complex))

    def to_dict(self):
        return {"family": self.family, "window": self.window}


MapSpec = Union[Polynomial, Blaschke, ExpFamily, SineFamily, FatouBaker]
FINITE_DEGREE = (Polynomial, Blaschke)


@dataclass(frozen=True)
class SingularData:
    critical_values: tuple
    asymptotic_values: tuple
    punctures: tuple
    critical_points: tuple = field(default=())

    @property
    def finite_values(self):
        return np.array(self.critical_values + self.asymptotic_values, dtype=complex)


# -- serialisation -----------------------------------------------------------

def complex_to_str(z) -> str:
    z = complex(z)
    return repr(z).strip("()")


def parse_complex(value, path="") -> complex:
    if isinstance(value, bool):
        raise SchemaError("expected a complex number", path)
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError as exc:
            raise SchemaError(f"cannot parse {value!r} as complex", path) from exc
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise SchemaError(f"cannot parse {value!r} as complex", path)


def map_from_dict(data: dict, path="map") -> MapSpec:
    """Build a map from its configuration table."""
    if not isinstance(data, dict):
        raise SchemaError("expected a table", path)
    family = data.get("family")
    allowed = {
        "polynomial": {"family", "coefficients"},
        "blaschke": {"family", "zeros", "rotation"},
        "exp": {"family", "lam"},
        "sine": {"family", "lam"},
        "fatou_baker": {"family", "window"},
    }
    if family not in allowed:
        raise SchemaError(f"unknown map family {family!r}", f"{path}.family")
    for key in data:
        if key not in allowed[family]:
            raise SchemaError("unknown key", f"{path}.{key}")
    try:
        if family == "polynomial":
            coeffs = [parse_complex(c, f"{path}.coefficients") for c in data["coefficients"]]
            return Polynomial(tuple(coeffs))
        if family == "blaschke":
            zeros = [parse_complex(c, f"{path}.zeros") for c in data["zeros"]]
            return Blaschke(tuple(zeros), parse_complex(data.get("rotation", 1.0), f"{path}.rotation"))
        if family == "exp":
            return ExpFamily(parse_complex(data["lam"], f"{path}.lam"))
        if family == "sine":
            return SineFamily(parse_complex(data["lam"], f"{path}.lam"))
        return FatouBaker(float(data.get("window", 8 * math.pi)))
    except KeyError as exc:
        raise SchemaError("missing key", f"{path}.{exc.args[0]}") from exc
    except PreconditionError as exc:
        raise SchemaError(str(exc), path) from exc


# -- evaluation ----------------------------------------------------------------

def evaluate(f: MapSpec, z):
    """f(z); scalar overflow is reported as INFINITY, array overflow as complex inf."""
    if np.ndim(z) == 0:
        value = complex(f(np.asarray(z, dtype=complex)))
        return value if cmath.isfinite(value) else INFINITY
    out = f(z)
    out[~np.isfinite(out)] = complex(np.inf, 0)
    return out


def derivative(f: MapSpec, z):
    if np.ndim(z) == 0:
        value = complex(f.derivative(np.asarray(z, dtype=complex)))
        return value if cmath.isfinite(value) else INFINITY
    return f.derivative(z)


def singular_data(f: MapSpec, window: float | None = None) -> SingularData:
    """Critical and asymptotic values of f.

    For ``FatouBaker`` the critical values 1 + 2πik are truncated to
    |Im| <= window (default 8π).
    """
    if isinstance(f, FINITE_DEGREE):
        cps = np.asarray(f.critical_points(), dtype=complex)
        if cps.size:
            resid = np.abs(f.derivative(cps))
            scale = 1 + np.abs(cps) ** (f.degree - 1)
            if np.any(resid > 1e-10 * scale):
                raise RootFindingError("critical point polishing failed", float(resid.max()))
        cvs = f(cps) if cps.size else cps
        return SingularData(tuple(complex(v) for v in cvs), (), (), tuple(complex(c) for c in cps))
    if isinstance(f, ExpFamily):
        return SingularData((), (0j,), (INFINITY,))
    if isinstance(f, SineFamily):
        return SingularData((f.lam, -f.lam), (), (INFINITY,), (math.pi / 2 + 0j, -math.pi / 2 + 0j))
    if isinstance(f, FatouBaker):
        window = f.window if window is None else window
        kmax = int(math.floor(window / (2 * math.pi) + 1e-12))
        cps = tuple(complex(0, 2 * math.pi * k) for k in range(-kmax, kmax + 1))
        return SingularData(tuple(c + 1 for c in cps), (), (INFINITY,), cps)
    raise PreconditionError(f"unsupported map {f!r}")


def postcritical_points(f: MapSpec, n_iter=64, window=None):
    """Forward orbits of the finite critical and asymptotic values (finite points only)."""
    sd = singular_data(f, window)
    pts = [complex(v) for v in sd.critical_values + sd.asymptotic_values]
    out = list(pts)
    z = np.array(pts, dtype=complex)
    for _ in range(n_iter):
        if not z.size:
            break
        z = f(z)
        z = z[np.isfinite(z) & (np.abs(z) < 1e8)]
        out.extend(z.tolist())
    return np.array(out, dtype=complex)


# -- roots and preimages ---------------------------------------------------------

def companion_matrix(coeffs):
    """Companion matrix of the polynomial with the given coefficients (lowest first)."""
    coeffs = np.asarray(coeffs, dtype=complex)
    d = len(coeffs) - 1
    mat = np.zeros((d, d), dtype=complex)
    mat[1:, :-1] = np.eye(d - 1)
    mat[:, -1] = -coeffs[:-1] / coeffs[-1]
    return mat


def companion_roots(coeffs, polish_steps=3):
    """All roots via companion-matrix eigenvalues, Newton-polished on the polynomial."""
    coeffs = np.asarray(coeffs, dtype=complex)
    if len(coeffs) == 2:
        return np.array([-coeffs[0] / coeffs[1]])
    roots = np.linalg.eigvals(companion_matrix(coeffs))
    poly = np.polynomial.Polynomial(coeffs)
    dpoly = poly.deriv()
    for _ in range(polish_steps):
        dp = dpoly(roots)
        ok = np.abs(dp) > 1e-10 * (1 + np.abs(roots))
        roots = np.where(ok, roots - poly(roots) / np.where(ok, dp, 1), roots)
    return roots


def _polish_on_map(f, z, w, iterations=6):
    for _ in range(iterations):
        fp = f.derivative(z)
        ok = np.abs(fp) > 1e-12
        step = np.where(ok, (f(z) - w) / np.where(ok, fp, 1), 0)
        z = z - step
        if np.all(np.abs(step) <= 1e-15 * (1 + np.abs(z))):
            break
    return z


def preimages_all(f: MapSpec, w, *, warn=True) -> np.ndarray:
    """All ``degree`` solutions of f(z) = w, counted with multiplicity.

    Roots come from companion-matrix eigenvalues and are Newton-polished on the
    map itself. A ``ClusteredRootsWarning`` flags fibers with two roots closer
    than 1e-8.
    """
    if not isinstance(f, FINITE_DEGREE):
        raise PreconditionError("full preimage enumeration needs a finite-degree map")
    w = complex(w)
    roots = preimages_batch(f, np.array([w]))[0]
    resid = np.abs(f(roots) - w)
    ok = resid < 1e-12 * (1 + abs(w))
    if not ok.all():
        # multiple roots converge slowly; accept them when the derivative vanishes too
        crit = np.abs(f.derivative(roots)) < 1e-6
        if not np.all(ok | (crit & (resid < 1e-10 * (1 + abs(w))))):
            raise RootFindingError("preimage polishing failed", float(resid.max()))
    if warn and len(roots) > 1:
        gaps = np.abs(roots[:, None] - roots[None, :])[np.triu_indices(len(roots), 1)]
        if gaps.min() < 1e-8:
            warnings.warn(f"preimage cluster of size < 1e-8 over w={w}", ClusteredRootsWarning, stacklevel=2)
    return roots


def preimages_batch(f: MapSpec, w) -> np.ndarray:
    """Preimages of many points at once; returns an array of shape (len(w), degree)."""
    w = np.asarray(w, dtype=complex).ravel()
    d = f.degree
    base = f.fiber_coefficients(0.0)
    if isinstance(f, Polynomial):
        lead = np.full(w.shape, base[d])
        low = np.broadcast_to(base[:d], (w.size, d)).copy()
        low[:, 0] -= w
    else:
        _, den = f.numerator_denominator()
        dc = np.zeros(d + 1, dtype=complex)
        dc[: len(den.coef)] = den.coef
        full = base[None, : d + 1] - w[:, None] * dc[None, :]
        lead = full[:, d]
        low = full[:, :d]
    if np.any(np.abs(lead) < 1e-14):
        raise PreconditionError("fiber polynomial drops degree (w too far outside)")
    mats = np.zeros((w.size, d, d), dtype=complex)
    if d > 1:
        mats[:, np.arange(1, d), np.arange(d - 1)] = 1.0
    mats[:, :, -1] = -low / lead[:, None]
    roots = np.linalg.eigvals(mats)
    return _polish_on_map(f, roots, w[:, None])


# -- continuation -------------------------------------------------------------------

def lift_paths(f: MapSpec, paths, seeds, *, max_newton=8, crit_tol=1e-8, rtol=1e-13):
    """Continue inverse branches of f along many paths simultaneously.

    ``paths`` has shape (m, L); ``seeds[j]`` must satisfy f(seed) = paths[j, 0].
    Returns the lifted paths, shape (m, L). Raises ``StepTooLarge`` when the
    Newton corrector leaves the linearisation regime or fails to converge in
    ``max_newton`` iterations, and ``CriticalProximity`` when |f'| < crit_tol.
    """
    paths = np.atleast_2d(np.asarray(paths, dtype=complex))
    z = np.atleast_1d(np.asarray(seeds, dtype=complex)).copy()
    m, length = paths.shape
    out = np.empty((m, length), dtype=complex)
    out[:, 0] = z
    fp = f.derivative(z)
    if np.any(np.abs(fp) < crit_tol):
        j = int(np.argmin(np.abs(fp)))
        raise CriticalProximity("seed sits on a critical point", index=0, point=complex(z[j]))
    for k in range(1, length):
        w = paths[:, k]
        pred = z + (w - paths[:, k - 1]) / fp
        move = np.abs(pred - z)
        zk = pred
        done = np.zeros(m, dtype=bool)
        tol = rtol * (1 + np.abs(w))
        for it in range(max_newton):
            resid = f(zk) - w
            done = np.abs(resid) <= tol
            if done.all():
                break
            dk = f.derivative(zk)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(done, 0, resid / dk)
            if it == 0:
                bad = np.abs(step) > 0.5 * move + 1e-13 * (1 + np.abs(zk))
                if bad.any():
                    raise StepTooLarge(f"predictor error too large at path index {k}", index=k)
            zk = zk - step
        else:
            resid = f(zk) - w
            done = np.abs(resid) <= tol
        if not done.all():
            raise StepTooLarge(f"Newton did not converge at path index {k}", index=k)
        fp = f.derivative(zk)
        if np.any(np.abs(fp) < crit_tol):
            j = int(np.argmin(np.abs(fp)))
            raise CriticalProximity("continuation met a critical point", index=k, point=complex(zk[j]))
        z = zk
        out[:, k] = z
    return out


def refine_polyline(paths, factor=2):
    """Insert ``factor - 1`` evenly spaced points into every segment of each path."""
    paths = np.atleast_2d(np.asarray(paths, dtype=complex))
    t = np.arange(factor) / factor
    seg = paths[:, :-1, None] + (paths[:, 1:, None] - paths[:, :-1, None]) * t[None, None, :]
    return np.concatenate([seg.reshape(paths.shape[0], -1), paths[:, -1:]], axis=1)


def lift_paths_adaptive(f: MapSpec, paths, seeds, *, max_refine=6, **kw):
    """``lift_paths`` that refines the polyline on ``StepTooLarge`` and retries.

    The returned array holds the lifts of the original path vertices only.
    """
    paths = np.atleast_2d(np.asarray(paths, dtype=complex))
    factor = 1
    for _ in range(max_refine + 1):
        try:
            lifted = lift_paths(f, refine_polyline(paths, factor) if factor > 1 else paths, seeds, **kw)
            return lifted[:, ::factor]
        except StepTooLarge:
            factor *= 2
    raise StepTooLarge(f"continuation failed after refining paths {factor // 2}-fold")


def preimage_continue(f: MapSpec, path, seed, *, return_path=False):
    """Analytic continuation of the inverse branch through ``seed`` along ``path``.

    ``path`` is a polyline in the image plane starting at f(seed). Returns the
    endpoint of the lifted path (or the whole lift with ``return_path=True``).
    """
    path = np.asarray(path, dtype=complex).ravel()
    seed = complex(seed)
    if abs(complex(f(np.asarray(seed))) - path[0]) >= 1e-10 * (1 + abs(path[0])):
        raise PreconditionError("seed is not a preimage of the first path point")
    lifted = lift_paths(f, path[None, :], np.array([seed]))[0]
    final = lifted[-1]
    if abs(complex(f(np.asarray(final))) - path[-1]) >= 1e-10 * (1 + abs(path[-1])):
        raise StepTooLarge("final residual above 1e-10", index=len(path) - 1)
    return lifted if return_path else complex(final)


def difference_function(f: MapSpec, x):
    """delta -> f(x + delta) - f(x), evaluated without cancellation for small delta."""
    x = complex(x)
    if isinstance(f, Polynomial):
        # Taylor coefficients at x by repeated synthetic division
        a = list(f.coefficients)
        taylor = []
        for _ in range(len(a)):
            acc, rest = 0j, []
            for c in reversed(a):
                acc = acc * x + c
                rest.append(acc)
            taylor.append(rest[-1])
            a = list(reversed(rest[:-1]))
        c = taylor[1:]

        def diff(delta):
            out = np.full(np.shape(delta), c[-1], dtype=complex)
            for ck in c[-2::-1]:
                out = out * delta + ck
            return out * delta
        return diff
    if isinstance(f, Blaschke):
        zeros = f.zeros
        u = [(x - a) / (1 - a.conjugate() * x) for a in zeros]

        def diff(delta):
            delta = np.asarray(delta, dtype=complex)
            e = [delta * (1 - abs(a) ** 2) / ((1 - a.conjugate() * x) * (1 - a.conjugate() * (x + delta)))
                 for a in zeros]
            total = np.zeros(delta.shape, dtype=complex)
            head = np.ones(delta.shape, dtype=complex)
            for i in range(len(zeros)):
                tail = 1.0 + 0j
                for j in range(i + 1, len(zeros)):
                    tail *= u[j]
                total = total + head * e[i] * tail
                head = head * (u[i] + e[i])
            return f.rotation * total
        return diff
    fx = complex(f(np.asarray(x)))
    return lambda delta: f(x + np.asarray(delta)) - fx


def lift_offsets(f: MapSpec, base, paths, *, max_newton=8, crit_tol=1e-8, rtol=1e-13):
    """``lift_paths`` in offset coordinates around a preimage ``base``.

    Path values are offsets from f(base); the lift returns offsets from
    ``base``. Every path must start at offset 0. Working with offsets keeps
    images far below the double-precision spacing of |base| resolvable.
    """
    paths = np.atleast_2d(np.asarray(paths, dtype=complex))
    base = complex(base)
    diff = difference_function(f, base)
    m, length = paths.shape
    out = np.zeros((m, length), dtype=complex)
    d = np.zeros(m, dtype=complex)
    fp = f.derivative(np.full(m, base))
    if np.any(np.abs(fp) < crit_tol):
        raise CriticalProximity("base point sits on a critical point", index=0, point=base)
    for k in range(1, length):
        w = paths[:, k]
        pred = d + (w - paths[:, k - 1]) / fp
        move = np.abs(pred - d)
        dk = pred
        tol = rtol * np.abs(w)
        for it in range(max_newton):
            resid = diff(dk) - w
            done = np.abs(resid) <= tol
            if done.all():
                break
            step = np.where(done, 0, resid / f.derivative(base + dk))
            if it == 0:
                bad = np.abs(step) > 0.5 * move + 1e-13 * np.abs(dk)
                if bad.any():
                    raise StepTooLarge(f"predictor error too large at path index {k}", index=k)
            dk = dk - step
        else:
            done = np.abs(diff(dk) - w) <= tol
        if not done.all():
            raise StepTooLarge(f"Newton did not converge at path index {k}", index=k)
        fp = f.derivative(base + dk)
        if np.any(np.abs(fp) < crit_tol):
            j = int(np.argmin(np.abs(fp)))
            raise CriticalProximity("continuation met a critical point", index=k, point=complex(base + dk[j]))
        d = dk
        out[:, k] = d
    return out


def lift_offsets_adaptive(f: MapSpec, base, paths, *, max_refine=6, **kw):
    paths = np.atleast_2d(np.asarray(paths, dtype=complex))
    factor = 1
    for _ in range(max_refine + 1):
        try:
            lifted = lift_offsets(f, base, refine_polyline(paths, factor) if factor > 1 else paths, **kw)
            return lifted[:, ::factor]
        except StepTooLarge:
            factor *= 2
    raise StepTooLarge(f"continuation failed after refining paths {factor // 2}-fold")


# -- multiprecision evaluation --------------------------------------------------------

def mp_context(precision=MP_PRECISION):
    return gmpy2.context(gmpy2.context(), precision=precision)


def to_mpc(z):
    z = complex(z)
    return gmpy2.mpc(z.real, z.imag)


def evaluate_mp(f: MapSpec, z):
    """f(z) in the active gmpy2 precision; ``z`` is an mpc."""
    if isinstance(f, Polynomial):
        out = to_mpc(f.coefficients[-1])
        for c in f.coefficients[-2::-1]:
            out = out * z + to_mpc(c)
        return out
    if isinstance(f, Blaschke):
        out = to_mpc(f.rotation)
        for a in f.zeros:
            out = out * (z - to_mpc(a)) / (1 - to_mpc(a.conjugate()) * z)
        return out
    if isinstance(f, ExpFamily):
        return to_mpc(f.lam) * gmpy2.exp(z)
    if isinstance(f, SineFamily):
        return to_mpc(f.lam) * gmpy2.sin(z)
    if isinstance(f, FatouBaker):
        return z + gmpy2.exp(-z)
    raise PreconditionError(f"unsupported map {f!r}")


def derivative_mp(f: MapSpec, z):
    if isinstance(f, Polynomial):
        d = f.degree
        out = to_mpc(d * f.coefficients[-1])
        for k in range(d - 1, 0, -1):
            out = out * z + to_mpc(k * f.coefficients[k])
        return out
    if isinstance(f, Blaschke):
        fac = [(z - to_mpc(a)) / (1 - to_mpc(a.conjugate()) * z) for a in f.zeros]
        total = gmpy2.mpc(0)
        for k, a in enumerate(f.zeros):
            others = gmpy2.mpc(1)
            for j, fj in enumerate(fac):
                if j != k:
                    others *= fj
            total += (1 - abs(a) ** 2) / (1 - to_mpc(a.conjugate()) * z) ** 2 * others
        return to_mpc(f.rotation) * total
    if isinstance(f, ExpFamily):
        return to_mpc(f.lam) * gmpy2.exp(z)
    if isinstance(f, SineFamily):
        return to_mpc(f.lam) * gmpy2.cos(z)
    if isinstance(f, FatouBaker):
        return 1 - gmpy2.exp(-z)
    raise PreconditionError(f"unsupported map {f!r}")


def refine_preimage_mp(f: MapSpec, z0, w, iterations=8):
    """Newton-refine a double-precision preimage of the mpc target ``w``."""
    z = to_mpc(z0) if not isinstance(z0, type(gmpy2.mpc(0))) else z0
    for _ in range(iterations):
        step = (evaluate_mp(f, z) - w) / derivative_mp(f, z)
        z = z - step
        if abs(step) == 0:
            break
    return z


def log_abs_derivative(f: MapSpec, z):
    """log|f'(z)| without overflow for the exponential-type families."""
    z = np.asarray(z, dtype=complex)
    if isinstance(f, ExpFamily):
        return math.log(abs(f.lam)) + z.real
    if isinstance(f, SineFamily):
        y = np.abs(z.imag)
        with np.errstate(over="ignore", divide="ignore"):
            direct = np.log(np.abs(np.cos(np.where(y < 300, z, 0))))
        # |cos z| = e^|y| |1 + e^{-2|y|} e^{±2ix}| / 2 for large |y|
        return math.log(abs(f.lam)) + np.where(y < 300, direct, y - math.log(2))
    if isinstance(f, FatouBaker):
        with np.errstate(over="ignore", divide="ignore"):
            small = np.log(np.abs(1 - np.exp(-np.where(z.real > -300, z, 0))))
            large = -z.real + np.log(np.abs(1 - np.exp(np.where(z.real <= -300, z, 0))))
        return np.where(z.real > -300, small, large)
    with np.errstate(divide="ignore"):
        return np.log(np.abs(f.derivative(z)))
