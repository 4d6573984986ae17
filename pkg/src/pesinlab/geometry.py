"""Planar geometry primitives: points, disks, Möbius maps and Koebe constants.

Points are plain Python/numpy complex numbers. The point at infinity is the
``INFINITY`` marker, which never takes part in arithmetic; Möbius maps test for
it explicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTransform, PreconditionError


class _PointAtInfinity:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __reduce__(self):
        return (_PointAtInfinity, ())


INFINITY = _PointAtInfinity()


def is_infinity(z) -> bool:
    return z is INFINITY


@dataclass(frozen=True)
class Disk:
    center: complex
    radius: float

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise PreconditionError(f"disk radius must be finite and positive, got {self.radius}")
        object.__setattr__(self, "center", complex(self.center))

    def contains(self, z, closed=False):
        d = np.abs(np.asarray(z) - self.center)
        return d <= self.radius if closed else d < self.radius


@dataclass(frozen=True)
class MobiusTransform:
    """The map z -> (a z + b) / (c z + d)."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        for name in "abcd":
            object.__setattr__(self, name, complex(getattr(self, name)))
        scale = max(abs(self.a), abs(self.b), abs(self.c), abs(self.d))
        if not abs(self.a * self.d - self.b * self.c) > 1e-14 * scale**2:
            raise DegenerateTransform(f"degenerate Möbius coefficients {self}")

    @classmethod
    def identity(cls):
        return cls(1, 0, 0, 1)

    @classmethod
    def puncture(cls, v, eps):
        """eps^2 / (z - v), the normalising map with M(v + eps) = eps."""
        return cls(0, eps * eps, 1, -complex(v))

    @classmethod
    def disk_automorphism(cls, b, phi=0.0):
        """e^{i phi} (z - b) / (1 - conj(b) z) for |b| < 1."""
        b = complex(b)
        if abs(b) >= 1:
            raise PreconditionError("disk automorphism needs |b| < 1")
        rot = complex(math.cos(phi), math.sin(phi))
        return cls(rot, -rot * b, -b.conjugate(), 1)

    @property
    def determinant(self) -> complex:
        return self.a * self.d - self.b * self.c

    @property
    def pole(self):
        if self.c == 0:
            return INFINITY
        return -self.d / self.c

    def __call__(self, z):
        return mobius_apply(self, z)

    def inverse(self) -> "MobiusTransform":
        return MobiusTransform(self.d, -self.b, -self.c, self.a)

    def compose(self, inner: "MobiusTransform") -> "MobiusTransform":
        """Return self ∘ inner."""
        return MobiusTransform(
            self.a * inner.a + self.b * inner.c,
            self.a * inner.b + self.b * inner.d,
            self.c * inner.a + self.d * inner.c,
            self.c * inner.b + self.d * inner.d,
        )

    def derivative_modulus(self, z):
        return mobius_derivative_modulus(self, z)

    def image_disk(self, disk: Disk) -> Disk:
        """Image of an open disk that does not contain the pole."""
        pole = self.pole
        if pole is not INFINITY and abs(pole - disk.center) <= disk.radius:
            raise PreconditionError("disk contains the pole; its image is not a disk")
        pts = disk.center + disk.radius * np.exp(2j * np.pi * np.array([0.0, 1 / 3, 2 / 3]))
        w = np.asarray(mobius_apply(self, pts))
        return Disk(*circumcircle(w[0], w[1], w[2]))


def mobius_apply(m: MobiusTransform, z):
    """Evaluate m at z; the pole goes to INFINITY and INFINITY to a/c.

    Accepts scalars (returning a complex or INFINITY) and numpy arrays (where
    the pole evaluates to complex infinity).
    """
    if z is INFINITY:
        return INFINITY if m.c == 0 else m.a / m.c
    if np.ndim(z) == 0:
        z = complex(z)
        den = m.c * z + m.d
        if den == 0:
            return INFINITY
        return (m.a * z + m.b) / den
    z = np.asarray(z, dtype=complex)
    den = m.c * z + m.d
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (m.a * z + m.b) / den
    out[den == 0] = complex(np.inf, 0)
    return out


def mobius_derivative_modulus(m: MobiusTransform, z):
    """|ad - bc| / |cz + d|^2."""
    if z is INFINITY:
        raise PreconditionError("derivative at infinity is not defined in the plane chart")
    den = np.abs(m.c * np.asarray(z, dtype=complex) + m.d) ** 2
    if np.any(den == 0):
        raise PreconditionError("derivative requested at the pole")
    out = abs(m.determinant) / den
    return float(out) if np.ndim(out) == 0 else out


def circumcircle(p, q, s):
    """Center and radius of the circle through three non-collinear points."""
    ax, ay, bx, by, cx, cy = p.real, p.imag, q.real, q.imag, s.real, s.imag
    d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0:
        raise PreconditionError("collinear points have no circumcircle")
    ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay) + (cx**2 + cy**2) * (ay - by)) / d
    uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx) + (cx**2 + cy**2) * (bx - ax)) / d
    center = complex(ux, uy)
    return center, abs(p - center)


def spherical_distance(z, w) -> float:
    """Chordal distance on the Riemann sphere (diameter 2)."""
    if z is INFINITY and w is INFINITY:
        return 0.0
    if z is INFINITY or w is INFINITY:
        p = w if z is INFINITY else z
        return 2.0 / math.sqrt(1 + abs(p) ** 2)
    return 2 * abs(z - w) / math.sqrt((1 + abs(z) ** 2) * (1 + abs(w) ** 2))


def koebe_quarter_radius(deriv_modulus: float, r: float) -> float:
    """Radius of the disk around phi(z) certified to lie in phi(D(z, r))."""
    if not (deriv_modulus > 0 and r > 0):
        raise PreconditionError("Koebe quarter radius needs positive derivative and radius")
    return 0.25 * deriv_modulus * r


def koebe_distortion_factors(lam: float) -> tuple[float, float]:
    """Lower and upper derivative distortion factors on D(x, lam * r).

    Returns ``((1 - lam) / (1 + lam)**3, (1 + lam) / (1 - lam)**3)``.
    """
    if not 0 <= lam < 1:
        raise PreconditionError(f"lambda must lie in [0, 1), got {lam}")
    return (1 - lam) / (1 + lam) ** 3, (1 + lam) / (1 - lam) ** 3


def koebe_image_radius(deriv_modulus: float, r: float, lam: float) -> float:
    """phi(D(x, lam r)) lies in D(phi(x), r |phi'(x)| (1 + lam) / (1 - lam)^3)."""
    return r * deriv_modulus * koebe_distortion_factors(lam)[1]


def winding_number(polygon, points, chunk=512):
    """Winding number of a closed polygon around each query point.

    ``polygon`` is an array of vertices (the closing edge is implicit).
    """
    poly = np.asarray(polygon, dtype=complex)
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    out = np.empty(pts.shape, dtype=np.int64)
    nxt = np.roll(poly, -1)
    for start in range(0, pts.size, chunk):
        p = pts.ravel()[start:start + chunk, None]
        # angle swept by each edge, always in (-pi, pi]
        sweep = np.angle((nxt[None, :] - p) / (poly[None, :] - p))
        out.ravel()[start:start + chunk] = np.rint(sweep.sum(axis=1) / (2 * np.pi)).astype(np.int64)
    return out


@dataclass
class KoebeReport:
    name: str
    quarter_violations: int
    sandwich_violations: int
    samples: int
    worst_sandwich_ratio: float

    @property
    def passed(self) -> bool:
        return self.quarter_violations == 0 and self.sandwich_violations == 0


def koebe_suite_check(name, phi, dphi, center, r, lam=0.5, n_samples=10_000, seed=0) -> KoebeReport:
    """Sample the quarter inclusion and the derivative sandwich for a univalent map.

    The image boundary phi(∂D(center, r)) is sampled as a polygon and test points
    on the circle of radius |phi'(center)| r / 4 are checked by winding number.
    The derivative ratio |phi'(z)| / |phi'(center)| is checked on random points of
    the closed disk D(center, lam r).
    """
    rng = np.random.default_rng(seed)
    theta = np.linspace(0.0, 2 * np.pi, n_samples, endpoint=False)
    boundary = phi(center + r * np.exp(1j * theta))
    w0 = phi(np.array([center]))[0]
    d0 = abs(dphi(np.array([center]))[0])
    rq = koebe_quarter_radius(d0, r)
    # shrink by a hair so vertices exactly on the polygon are not counted
    test = w0 + rq * (1 - 1e-9) * np.exp(1j * (theta + np.pi / n_samples))
    quarter_bad = int(np.count_nonzero(winding_number(boundary, test) == 0))

    lower, upper = koebe_distortion_factors(lam)
    rad = lam * r * np.sqrt(rng.uniform(0, 1, n_samples))
    rad[: n_samples // 10] = lam * r  # include the extremal circle
    pts = center + rad * np.exp(1j * rng.uniform(0, 2 * np.pi, n_samples))
    ratio = np.abs(dphi(pts)) / d0
    tol = 1e-12
    sandwich_bad = int(np.count_nonzero((ratio < lower * (1 - tol)) | (ratio > upper * (1 + tol))))
    worst = float(max(ratio.max() / upper, lower / ratio.min()))
    return KoebeReport(name, quarter_bad, sandwich_bad, n_samples, worst)


def univalent_catalog():
    """Univalent test maps: (name, phi, phi', center, radius of univalence disk)."""
    return [
        ("identity", lambda z: np.asarray(z, dtype=complex), lambda z: np.ones_like(np.asarray(z, dtype=complex)), 0j, 1.0),
        ("z+z^2/2", lambda z: z + z * z / 2, lambda z: 1 + z, 0j, 0.9),
        ("koebe", lambda z: z / (1 - z) ** 2, lambda z: (1 + z) / (1 - z) ** 3, 0j, 0.99),
    ]
