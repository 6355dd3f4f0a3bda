"""Domain geometry and speed-of-sound fields.

Positions are plain numpy arrays of shape (3,) in meters; every evaluation
routine also accepts a batch of shape (N, 3). Fields and domains are immutable
after construction and safe to share between workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveSpeed, ParseError

__all__ = [
    "as_point",
    "SpeedField",
    "ConstantField",
    "AffineXYField",
    "GridField",
    "Domain",
    "BoxDomain",
    "BallDomain",
    "load_grid_field",
]


def as_point(p) -> np.ndarray:
    """Coerce to a float (3,) array, rejecting non-finite components."""
    a = np.asarray(p, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"point has non-finite components: {a}")
    return a


def _as_batch(p):
    """Return (points as (N,3), was_single)."""
    a = np.asarray(p, dtype=float)
    if a.ndim == 1:
        return a.reshape(1, 3), True
    return a, False


class SpeedField:
    """Known speed of sound c(x, y, z) > 0 with its spatial gradient."""

    def speed(self, p):
        """Evaluate c at one point (3,) or a batch (N,3).

        Raises NonPositiveSpeed if any requested value is <= 0, which means
        the field data are invalid at that location.
        """
        pts, single = _as_batch(p)
        c = self._speed(pts)
        if np.any(c <= 0.0):
            bad = pts[np.argmin(c)]
            raise NonPositiveSpeed(f"c{tuple(bad)} = {c.min():g} <= 0")
        return float(c[0]) if single else c

    def gradient(self, p):
        """Evaluate (dc/dx, dc/dy, dc/dz) at one point or a batch."""
        pts, single = _as_batch(p)
        g = self._gradient(pts)
        return g[0] if single else g

    def _speed(self, pts):
        raise NotImplementedError

    def _gradient(self, pts):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantField(SpeedField):
    """Homogeneous medium, c = c0 everywhere."""

    c0: float

    def __post_init__(self):
        if not self.c0 > 0.0:
            raise NonPositiveSpeed(f"constant speed must be positive, got {self.c0}")

    def _speed(self, pts):
        return np.full(len(pts), self.c0)

    def _gradient(self, pts):
        return np.zeros((len(pts), 3))


@dataclass(frozen=True)
class AffineXYField(SpeedField):
    """Planar affine medium, c = a*x + b*y + d (the test medium x + y + 1)."""

    a: float
    b: float
    d: float

    def _speed(self, pts):
        return self.a * pts[:, 0] + self.b * pts[:, 1] + self.d

    def _gradient(self, pts):
        g = np.zeros((len(pts), 3))
        g[:, 0] = self.a
        g[:, 1] = self.b
        return g


class GridField(SpeedField):
    """Measured medium sampled on a regular grid, trilinearly interpolated.

    The gradient is the analytic derivative of the trilinear interpolant, so
    value and gradient are consistent inside every cell. Queries outside the
    grid clamp to the boundary cell (flat extrapolation); keep the domain
    inside the sampled region.

    Parameters
    ----------
    origin : (3,) array-like
        Position of sample [0, 0, 0].
    spacing : float or (3,) array-like
        Grid step per axis, > 0.
    values : (nx, ny, nz) array-like
        Speeds at the nodes, all > 0.
    """

    def __init__(self, origin, spacing, values):
        self.origin = as_point(origin)
        spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (3,)).copy()
        if np.any(spacing <= 0.0):
            raise ValueError(f"grid spacing must be positive, got {spacing}")
        self.spacing = spacing
        values = np.asarray(values, dtype=float)
        if values.ndim != 3 or min(values.shape) < 2:
            raise ValueError("grid values must be (nx, ny, nz) with at least 2 nodes per axis")
        if np.any(values <= 0.0):
            raise NonPositiveSpeed("grid contains non-positive speed samples")
        self.values = values
        self.values.flags.writeable = False

    def _locate(self, pts):
        u = (pts - self.origin) / self.spacing
        shape = np.asarray(self.values.shape)
        idx = np.clip(np.floor(u).astype(int), 0, shape - 2)
        frac = np.clip(u - idx, 0.0, 1.0)
        return idx, frac

    def _corners(self, idx):
        v = self.values
        ix, iy, iz = idx[:, 0], idx[:, 1], idx[:, 2]
        return (
            v[ix, iy, iz], v[ix + 1, iy, iz], v[ix, iy + 1, iz], v[ix + 1, iy + 1, iz],
            v[ix, iy, iz + 1], v[ix + 1, iy, iz + 1], v[ix, iy + 1, iz + 1], v[ix + 1, iy + 1, iz + 1],
        )

    def _speed(self, pts):
        idx, f = self._locate(pts)
        c000, c100, c010, c110, c001, c101, c011, c111 = self._corners(idx)
        fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
        c00 = c000 + fx * (c100 - c000)
        c10 = c010 + fx * (c110 - c010)
        c01 = c001 + fx * (c101 - c001)
        c11 = c011 + fx * (c111 - c011)
        c0 = c00 + fy * (c10 - c00)
        c1 = c01 + fy * (c11 - c01)
        return c0 + fz * (c1 - c0)

    def _gradient(self, pts):
        idx, f = self._locate(pts)
        c000, c100, c010, c110, c001, c101, c011, c111 = self._corners(idx)
        fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
        g = np.empty((len(pts), 3))
        # d/dx of the trilinear form: bilinear in (fy, fz)
        dx00 = c100 - c000
        dx10 = c110 - c010
        dx01 = c101 - c001
        dx11 = c111 - c011
        g[:, 0] = ((dx00 * (1 - fy) + dx10 * fy) * (1 - fz)
                   + (dx01 * (1 - fy) + dx11 * fy) * fz) / self.spacing[0]
        dy00 = c010 - c000
        dy10 = c110 - c100
        dy01 = c011 - c001
        dy11 = c111 - c101
        g[:, 1] = ((dy00 * (1 - fx) + dy10 * fx) * (1 - fz)
                   + (dy01 * (1 - fx) + dy11 * fx) * fz) / self.spacing[1]
        dz00 = c001 - c000
        dz10 = c101 - c100
        dz01 = c011 - c010
        dz11 = c111 - c110
        g[:, 2] = ((dz00 * (1 - fx) + dz10 * fx) * (1 - fy)
                   + (dz01 * (1 - fx) + dz11 * fx) * fy) / self.spacing[2]
        return g


class Domain:
    """Bounded observation region with a containment test."""

    def contains(self, p):
        """True iff p lies in the closed domain; batches return a bool array."""
        pts, single = _as_batch(p)
        inside = self._contains(pts)
        return bool(inside[0]) if single else inside

    def _contains(self, pts):
        raise NotImplementedError

    def bounding_radius(self) -> float:
        """Radius of a ball around the origin that contains the domain."""
        raise NotImplementedError


@dataclass(frozen=True)
class BoxDomain(Domain):
    """Axis-aligned box [lo, hi] per axis."""

    lo: np.ndarray
    hi: np.ndarray

    def __init__(self, lo, hi):
        object.__setattr__(self, "lo", as_point(lo))
        object.__setattr__(self, "hi", as_point(hi))
        if not np.all(self.hi > self.lo):
            raise ValueError("box must have nonempty interior (hi > lo per axis)")

    def _contains(self, pts):
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def bounding_radius(self):
        return float(max(np.linalg.norm(self.lo), np.linalg.norm(self.hi)))


@dataclass(frozen=True)
class BallDomain(Domain):
    """Closed ball of given center and radius."""

    center: np.ndarray
    radius: float

    def __init__(self, center, radius):
        object.__setattr__(self, "center", as_point(center))
        object.__setattr__(self, "radius", float(radius))
        if not self.radius > 0.0:
            raise ValueError("ball radius must be positive")

    def _contains(self, pts):
        d2 = np.sum((pts - self.center) ** 2, axis=1)
        return d2 <= self.radius * self.radius

    def bounding_radius(self):
        return float(np.linalg.norm(self.center) + self.radius)


def load_grid_field(path) -> GridField:
    """Read a grid field from plain text.

    Format: header line ``nx ny nz ox oy oz dx dy dz`` followed by
    nx*ny*nz whitespace-separated speeds in x-fastest order.
    """
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 9:
        raise ParseError(f"grid field header needs 9 values, got {len(tokens)}", line=1)
    try:
        nx, ny, nz = (int(t) for t in tokens[:3])
        ox, oy, oz, dx, dy, dz = (float(t) for t in tokens[3:9])
        samples = np.array([float(t) for t in tokens[9:]])
    except ValueError as exc:
        raise ParseError(f"bad numeric value in grid field file: {exc}") from exc
    if samples.size != nx * ny * nz:
        raise ParseError(f"expected {nx * ny * nz} samples, found {samples.size}")
    values = samples.reshape((nx, ny, nz), order="F")
    return GridField((ox, oy, oz), (dx, dy, dz), values)
