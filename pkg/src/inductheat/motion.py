"""Rigid motions, analytic region shapes, velocity fields and materials."""
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .quadrature import gauss_legendre

MU0 = 4e-7 * math.pi


class Region(IntEnum):
    AIR = 0
    WORKPIECE = 1
    COIL = 2


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 2), x.ndim == 1


# ---------------------------------------------------------------- shapes

class Shape:
    """Closed analytic planar shape in its reference position."""

    def contains(self, pts):
        raise NotImplementedError

    def distance(self, pts):
        """Euclidean distance to the shape, zero inside."""
        raise NotImplementedError

    @property
    def area(self):
        raise NotImplementedError

    def quadrature(self, degree):
        """Interior (points, weights)."""
        raise NotImplementedError

    def boundary_quadrature(self, degree):
        """Boundary (points, weights, outward unit normals)."""
        raise NotImplementedError

    def boundary_samples(self, n):
        pts, _, _ = self.boundary_quadrature(max(2, n // 4))
        return pts


def _angular_count(degree):
    # trapezoid rule is spectrally accurate for periodic integrands
    return max(64, 8 * (degree + 1))


@dataclass(frozen=True)
class Disk(Shape):
    center: tuple
    radius: float

    def contains(self, pts):
        d = pts - np.asarray(self.center)
        return np.einsum("ij,ij->i", d, d) <= self.radius ** 2

    def distance(self, pts):
        d = np.hypot(*(pts - np.asarray(self.center)).T)
        return np.maximum(d - self.radius, 0.0)

    @property
    def area(self):
        return math.pi * self.radius ** 2

    def quadrature(self, degree):
        r, wr = gauss_legendre(degree // 2 + 2, 0.0, self.radius)
        m = _angular_count(degree)
        th = 2 * np.pi * np.arange(m) / m
        R, TH = np.meshgrid(r, th, indexing="ij")
        pts = np.column_stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()])
        w = (wr[:, None] * r[:, None] * np.full(m, 2 * np.pi / m)[None, :]).ravel()
        return pts + np.asarray(self.center), w

    def boundary_quadrature(self, degree):
        m = _angular_count(degree)
        th = 2 * np.pi * np.arange(m) / m
        n = np.column_stack([np.cos(th), np.sin(th)])
        return (np.asarray(self.center) + self.radius * n,
                np.full(m, 2 * np.pi * self.radius / m), n)

    def boundary_samples(self, n):
        th = 2 * np.pi * np.arange(n) / n
        return np.asarray(self.center) + self.radius * np.column_stack([np.cos(th), np.sin(th)])


@dataclass(frozen=True)
class Annulus(Shape):
    center: tuple
    r_inner: float
    r_outer: float

    def contains(self, pts):
        d = pts - np.asarray(self.center)
        r2 = np.einsum("ij,ij->i", d, d)
        return (r2 >= self.r_inner ** 2) & (r2 <= self.r_outer ** 2)

    def distance(self, pts):
        d = np.hypot(*(pts - np.asarray(self.center)).T)
        return np.maximum(np.maximum(d - self.r_outer, self.r_inner - d), 0.0)

    @property
    def area(self):
        return math.pi * (self.r_outer ** 2 - self.r_inner ** 2)

    def quadrature(self, degree):
        r, wr = gauss_legendre(degree // 2 + 2, self.r_inner, self.r_outer)
        m = _angular_count(degree)
        th = 2 * np.pi * np.arange(m) / m
        R, TH = np.meshgrid(r, th, indexing="ij")
        pts = np.column_stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()])
        w = (wr[:, None] * r[:, None] * np.full(m, 2 * np.pi / m)[None, :]).ravel()
        return pts + np.asarray(self.center), w

    def boundary_quadrature(self, degree):
        m = _angular_count(degree)
        th = 2 * np.pi * np.arange(m) / m
        n = np.column_stack([np.cos(th), np.sin(th)])
        c = np.asarray(self.center)
        pts = np.concatenate([c + self.r_outer * n, c + self.r_inner * n])
        w = np.concatenate([np.full(m, 2 * np.pi * self.r_outer / m),
                            np.full(m, 2 * np.pi * self.r_inner / m)])
        return pts, w, np.concatenate([n, -n])

    def boundary_samples(self, n):
        th = 2 * np.pi * np.arange(n // 2) / (n // 2)
        u = np.column_stack([np.cos(th), np.sin(th)])
        c = np.asarray(self.center)
        return np.concatenate([c + self.r_outer * u, c + self.r_inner * u])


@dataclass(frozen=True)
class Rectangle(Shape):
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, pts):
        return ((pts[:, 0] >= self.xmin) & (pts[:, 0] <= self.xmax)
                & (pts[:, 1] >= self.ymin) & (pts[:, 1] <= self.ymax))

    def distance(self, pts):
        dx = np.maximum(np.maximum(self.xmin - pts[:, 0], pts[:, 0] - self.xmax), 0.0)
        dy = np.maximum(np.maximum(self.ymin - pts[:, 1], pts[:, 1] - self.ymax), 0.0)
        return np.hypot(dx, dy)

    @property
    def area(self):
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def quadrature(self, degree):
        n = degree // 2 + 1
        x, wx = gauss_legendre(n, self.xmin, self.xmax)
        y, wy = gauss_legendre(n, self.ymin, self.ymax)
        X, Y = np.meshgrid(x, y, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()]), np.outer(wx, wy).ravel()

    def boundary_quadrature(self, degree):
        n = degree // 2 + 1
        x, wx = gauss_legendre(n, self.xmin, self.xmax)
        y, wy = gauss_legendre(n, self.ymin, self.ymax)
        one = np.ones(n)
        pts = np.concatenate([
            np.column_stack([x, self.ymin * one]), np.column_stack([x, self.ymax * one]),
            np.column_stack([self.xmin * one, y]), np.column_stack([self.xmax * one, y])])
        normals = np.concatenate([np.tile([0.0, -1.0], (n, 1)), np.tile([0.0, 1.0], (n, 1)),
                                  np.tile([-1.0, 0.0], (n, 1)), np.tile([1.0, 0.0], (n, 1))])
        return pts, np.concatenate([wx, wx, wy, wy]), normals

    def boundary_samples(self, n):
        k = max(1, n // 4)
        s = np.arange(k) / k
        x = self.xmin + s * (self.xmax - self.xmin)
        y = self.ymin + s * (self.ymax - self.ymin)
        one = np.ones(k)
        return np.concatenate([
            np.column_stack([x, self.ymin * one]), np.column_stack([self.xmax * one, y]),
            np.column_stack([x[::-1] + (self.xmax - self.xmin) / k, self.ymax * one]),
            np.column_stack([self.xmin * one, y[::-1] + (self.ymax - self.ymin) / k])])


@dataclass(frozen=True)
class Union(Shape):
    """Union of pairwise disjoint shapes."""

    parts: tuple

    def contains(self, pts):
        out = np.zeros(len(pts), dtype=bool)
        for p in self.parts:
            out |= p.contains(pts)
        return out

    def distance(self, pts):
        return np.min([p.distance(pts) for p in self.parts], axis=0)

    @property
    def area(self):
        return sum(p.area for p in self.parts)

    def quadrature(self, degree):
        qs = [p.quadrature(degree) for p in self.parts]
        return np.concatenate([q[0] for q in qs]), np.concatenate([q[1] for q in qs])

    def boundary_quadrature(self, degree):
        qs = [p.boundary_quadrature(degree) for p in self.parts]
        return tuple(np.concatenate([q[i] for q in qs]) for i in range(3))

    def boundary_samples(self, n):
        k = max(4, n // len(self.parts))
        return np.concatenate([p.boundary_samples(k) for p in self.parts])


# ---------------------------------------------------------------- motions

@dataclass(frozen=True)
class RigidMotion:
    """Rigid map ``x -> Phi(x, t)`` with ``Phi(., 0) = id``.

    ``kind`` is ``"identity"``, ``"rotation"`` (about ``center`` with angular
    speed ``omega`` in rad/s) or ``"translation"`` (constant ``velocity``).
    """

    kind: str = "identity"
    center: tuple = (0.0, 0.0)
    omega: float = 0.0
    velocity: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("identity", "rotation", "translation"):
            raise ValueError(f"unknown motion kind {self.kind!r}")

    @classmethod
    def rotation(cls, omega, center=(0.0, 0.0)):
        return cls("rotation", center=tuple(center), omega=float(omega))

    @classmethod
    def translation(cls, velocity):
        return cls("translation", velocity=tuple(float(v) for v in velocity))

    def _rot(self, angle):
        c, s = math.cos(angle), math.sin(angle)
        return np.array([[c, -s], [s, c]])

    def matrix(self, t):
        """Linear part of ``Phi(., t)``."""
        if self.kind == "rotation":
            return self._rot(self.omega * t)
        return np.eye(2)

    def forward(self, pts, t):
        if self.kind == "rotation":
            c = np.asarray(self.center)
            return (pts - c) @ self.matrix(t).T + c
        if self.kind == "translation":
            return pts + t * np.asarray(self.velocity)
        return pts.copy()

    def inverse(self, pts, t):
        if self.kind == "rotation":
            c = np.asarray(self.center)
            return (pts - c) @ self.matrix(t) + c
        if self.kind == "translation":
            return pts - t * np.asarray(self.velocity)
        return pts.copy()

    def rigid_velocity(self, pts):
        """Eulerian velocity of the rigid motion (time independent)."""
        if self.kind == "rotation":
            d = pts - np.asarray(self.center)
            return self.omega * np.column_stack([-d[:, 1], d[:, 0]])
        if self.kind == "translation":
            return np.broadcast_to(np.asarray(self.velocity), pts.shape).copy()
        return np.zeros_like(pts)

    @property
    def speed_scale(self):
        if self.kind == "rotation":
            return abs(self.omega)
        return float(np.hypot(*self.velocity))


def map_point(motion, x, t):
    pts, single = _as_points(x)
    out = motion.forward(pts, t)
    return out[0] if single else out


def map_point_inverse(motion, x, t):
    pts, single = _as_points(x)
    out = motion.inverse(pts, t)
    return out[0] if single else out


# ---------------------------------------------------------------- layout

@dataclass(frozen=True)
class RegionLayout:
    """Workpiece (reference position), static coil, and the domain Omega.

    Everything that is neither workpiece nor coil is air (the background).
    """

    workpiece: Shape
    coil: Shape = None
    domain: Shape = None

    def validate(self, motion, times, n_samples=10_000):
        """Check workpiece/coil disjointness and containment in the domain.

        Boundary samples of both shapes are tested at every time in
        ``times``. Raises ``ValueError`` on the first violation.
        """
        times = np.atleast_1d(np.asarray(times, dtype=float))
        per_t = max(16, n_samples // max(1, len(times)))
        wp_pts = self.workpiece.boundary_samples(per_t)
        coil_pts = None if self.coil is None else self.coil.boundary_samples(per_t)
        for t in times:
            moved = motion.forward(wp_pts, t)
            if self.coil is not None:
                if np.any(self.coil.contains(moved)):
                    raise ValueError(f"workpiece touches the coil at t={t:g}")
                if np.any(self.workpiece.contains(motion.inverse(coil_pts, t))):
                    raise ValueError(f"coil touches the workpiece at t={t:g}")
            if self.domain is not None and not np.all(self.domain.contains(moved)):
                raise ValueError(f"workpiece leaves the domain at t={t:g}")


def region_at(layout, motion, x, t):
    """Region id(s) of point(s) ``x`` at time ``t``."""
    pts, single = _as_points(x)
    reg = np.full(len(pts), int(Region.AIR), dtype=np.int8)
    reg[layout.workpiece.contains(motion.inverse(pts, t))] = Region.WORKPIECE
    if layout.coil is not None:
        reg[layout.coil.contains(pts)] = Region.COIL
    return Region(int(reg[0])) if single else reg


def _smoothstep_down(xi):
    xi = np.clip(xi, 0.0, 1.0)
    return 1.0 - xi * xi * (3.0 - 2.0 * xi)


@dataclass(frozen=True)
class VelocityField:
    """Extension of the workpiece velocity to the whole domain.

    ``air`` selects the air extension: ``"rigid"`` keeps the rigid field,
    ``"taper"`` blends it to zero over ``taper_width`` metres away from
    the workpiece, ``"zero"`` sets it to zero. ``None`` picks ``"rigid"``
    for rotations and ``"taper"`` otherwise. The field vanishes in the coil.
    """

    motion: RigidMotion
    layout: RegionLayout
    air: str = None
    taper_width: float = 0.02

    @property
    def air_mode(self):
        if self.air is not None:
            return self.air
        return "rigid" if self.motion.kind == "rotation" else "taper"

    def __call__(self, pts, t, regions=None):
        if regions is None:
            regions = region_at(self.layout, self.motion, pts, t)
        v = self.motion.rigid_velocity(pts)
        mode = self.air_mode
        air = regions == Region.AIR
        if mode == "zero":
            v[air] = 0.0
        elif mode == "taper":
            d = self.layout.workpiece.distance(self.motion.inverse(pts[air], t))
            v[air] *= _smoothstep_down(d / self.taper_width)[:, None]
        elif mode != "rigid":
            raise ValueError(f"unknown air velocity mode {mode!r}")
        v[regions == Region.COIL] = 0.0
        return v


def velocity_at(motion, layout, x, t, air=None, taper_width=0.02):
    pts, single = _as_points(x)
    v = VelocityField(motion, layout, air, taper_width)(pts, t)
    return v[0] if single else v


# ---------------------------------------------------------------- materials

@dataclass(frozen=True)
class Material:
    sigma: float  # S/m
    kappa: float  # W/(m K)
    alpha: float  # J/(m^3 K)


COPPER = Material(59.6e6, 401.0, 3.384e6)
ALUMINIUM = Material(35e6, 237.0, 2.422e6)
AIR = Material(0.0, 0.02514, 1.192e3)


@dataclass(frozen=True)
class CoefficientSet:
    """Piecewise-constant material data per region."""

    workpiece: Material = ALUMINIUM
    coil: Material = COPPER
    air: Material = AIR
    mu0: float = MU0
    _table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.air.sigma != 0.0:
            raise ValueError("air conductivity must be exactly zero")
        for name in ("workpiece", "coil"):
            m = getattr(self, name)
            if not (m.sigma > 0 and m.kappa > 0 and m.alpha > 0):
                raise ValueError(f"{name} coefficients must be positive")
        if not (self.air.kappa > 0 and self.air.alpha > 0 and self.mu0 > 0):
            raise ValueError("air kappa/alpha and mu0 must be positive")
        table = np.zeros((3, 3))
        for reg, m in ((Region.AIR, self.air), (Region.WORKPIECE, self.workpiece),
                       (Region.COIL, self.coil)):
            table[reg] = (m.sigma, m.kappa, m.alpha)
        object.__setattr__(self, "_table", table)

    def lookup(self, regions, name):
        col = {"sigma": 0, "kappa": 1, "alpha": 2}[name]
        return self._table[np.asarray(regions, dtype=np.intp), col]


def coefficient_at(coeffs, region):
    """``(sigma, kappa, alpha)`` for a region id or an array of them."""
    if np.ndim(region) == 0:
        row = coeffs._table[int(region)]
        return float(row[0]), float(row[1]), float(row[2])
    return tuple(coeffs.lookup(region, k) for k in ("sigma", "kappa", "alpha"))


# ---------------------------------------------------------------- transport

def _moving_integral(shape, motion, f, t, degree):
    pts, w = shape.quadrature(degree)
    return float(w @ f(motion.forward(pts, t), t))


def verify_transport_identity(motion, layout, f, t, dt, degree=6, dfdt=None):
    """Relative residual of the transport identity on the moving workpiece.

    The residual is normalised by the larger of both sides and the natural
    magnitude ``rate * int |f| + int |df/dt|`` (``rate`` is the angular speed
    or speed over size) so that identically vanishing sides give ~0.
    Compares the central difference of ``t -> int_{Sigma(t)} f`` with
    ``int_{Sigma(t)} df/dt + oint_{dSigma(t)} f v.n``, all integrals by
    tensor Gauss / trapezoid rules on the analytic shape. ``f(points, t)``
    must be vectorised; ``dfdt`` defaults to a central difference in time.
    """
    shape = layout.workpiece
    lhs = (_moving_integral(shape, motion, f, t + dt, degree)
           - _moving_integral(shape, motion, f, t - dt, degree)) / (2 * dt)
    if dfdt is None:
        def dfdt(x, s):
            return (f(x, s + dt) - f(x, s - dt)) / (2 * dt)
    vol = _moving_integral(shape, motion, dfdt, t, degree)
    pts, w = shape.quadrature(degree)
    xq = motion.forward(pts, t)
    rate = motion.speed_scale
    if motion.kind == "translation":
        rate /= math.sqrt(shape.area)
    magnitude = rate * float(w @ np.abs(f(xq, t))) + float(w @ np.abs(dfdt(xq, t)))
    bp, bw, bn = shape.boundary_quadrature(degree)
    x = motion.forward(bp, t)
    normals = bn @ motion.matrix(t).T
    vn = np.einsum("ij,ij->i", motion.rigid_velocity(x), normals)
    surf = float(bw @ (f(x, t) * vn))
    rhs = vol + surf
    scale = max(abs(lhs), abs(rhs), magnitude)
    if scale < 1e-300:
        return 0.0
    return abs(lhs - rhs) / scale


def transport_fixtures():
    """The three standard ``(name, motion, layout, f)`` transport checks."""
    disk = RegionLayout(Disk((0.0, 0.0), 0.1))
    rot = RigidMotion.rotation(0.125 * math.pi)
    return [
        ("constant_rotation", rot, disk, lambda x, t: np.ones(len(x))),
        ("x1_translation", RigidMotion.translation((1.0, 0.0)), disk, lambda x, t: x[:, 0]),
        ("time_rotation", rot, disk, lambda x, t: np.full(len(x), float(t))),
    ]
