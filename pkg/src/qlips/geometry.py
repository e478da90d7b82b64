"""Domain decomposition, interface curves, and seeded collocation sampling.

Every interface kind is represented through a level-set function phi with the
convention

    phi(x) < 0  in Omega^-,    phi(x) > 0  in Omega^+,    phi(x) = 0  on Gamma,

so classification, normal computation, and on-curve construction share one
code path.  Unit normals always point from Omega^+ into Omega^-.

Supported kinds:

* ``vertical_line``  -- phi = x - x0; Omega^+ is the right subdomain.
* ``circle``         -- signed distance to a circle; Omega^- is the inner disk.
* ``plum_blossom``   -- polar curve r(theta) = r0 + amplitude*cos(petals*theta),
  interior is Omega^-.
* ``axes_cross``     -- the coordinate axes split the box into four quadrant
  subdomains; phi = x*y, so the two quadrants where x*y > 0 form Omega^+.
* ``moving_circle``  -- a circle of radius r(t) = r_slope*t + r_init in
  space-time; points carry a trailing time coordinate.
"""

from __future__ import annotations

import dataclasses
import enum
import math

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, DomainError, SamplingError

Array = NDArray[np.float64]

#: |phi| at or below this value counts as "on the interface".
GAMMA_TOL = 1e-12

#: Interface samples for ``axes_cross`` stay at least this far from the
#: cross point (0, 0), where the normal is undefined.
CROSS_EXCLUSION_RADIUS = 1e-8

#: Offset used when probing which subdomain lies on each side of Gamma.
_SIDE_PROBE = 1e-7

KINDS = ("vertical_line", "axes_cross", "circle", "plum_blossom", "moving_circle")

#: Names for the five residual groups, in stacking order.
GROUPS = ("interior_plus", "interior_minus", "gamma_n", "gamma_d", "boundary")


class Region(enum.Enum):
    OMEGA_PLUS = 1
    OMEGA_MINUS = -1
    ON_GAMMA = 0


@dataclasses.dataclass(frozen=True)
class InterfaceGeometry:
    """Immutable description of the domain, its interface, and time extent.

    ``bounding_box`` is (xmin, xmax, ymin, ymax).  ``time_interval`` is
    (t0, t1) for parabolic problems and ``None`` otherwise.  Kind-specific
    fields are ignored by the other kinds; use the factory classmethods.
    """

    kind: str
    bounding_box: tuple[float, float, float, float]
    time_interval: tuple[float, float] | None = None
    x0: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.5
    r0: float = 0.5
    amplitude: float = 0.1
    petals: int = 5
    r_slope: float = 0.5
    r_init: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown geometry kind {self.kind!r}")
        xmin, xmax, ymin, ymax = self.bounding_box
        if not (xmin < xmax and ymin < ymax):
            raise ConfigError("bounding box must have positive extent")
        if self.time_interval is not None:
            t0, t1 = self.time_interval
            if not t0 < t1:
                raise ConfigError("time interval must have positive length")
        if self.kind == "circle" and self.radius <= 0.0:
            raise ConfigError("circle radius must be positive")
        if self.kind == "plum_blossom":
            if self.r0 - abs(self.amplitude) <= 0.0:
                raise ConfigError("plum blossom radius must stay positive")
            rmax = self.r0 + abs(self.amplitude)
            if rmax >= min(xmax, -xmin, ymax, -ymin):
                raise ConfigError("plum blossom must stay strictly inside the box")
        if self.kind == "moving_circle":
            if self.time_interval is None:
                raise ConfigError("moving_circle requires a time interval")
            t0, t1 = self.time_interval
            for t in (t0, t1):  # radius is affine in t: endpoints suffice
                r = self.r_slope * t + self.r_init
                if r <= 0.0:
                    raise ConfigError("moving circle radius must stay positive")
                if r >= min(xmax, -xmin, ymax, -ymin):
                    raise ConfigError("moving circle must stay inside the box")

    # -- factories ---------------------------------------------------------

    @classmethod
    def vertical_line(cls, x0: float, bounding_box, time_interval=None):
        return cls("vertical_line", tuple(bounding_box), time_interval, x0=x0)

    @classmethod
    def circle(cls, center, radius: float, bounding_box, time_interval=None):
        return cls("circle", tuple(bounding_box), time_interval,
                   center=tuple(center), radius=radius)

    @classmethod
    def plum_blossom(cls, r0: float, amplitude: float, petals: int,
                     bounding_box, time_interval=None):
        return cls("plum_blossom", tuple(bounding_box), time_interval,
                   r0=r0, amplitude=amplitude, petals=petals)

    @classmethod
    def axes_cross(cls, bounding_box, time_interval=None):
        return cls("axes_cross", tuple(bounding_box), time_interval)

    @classmethod
    def moving_circle(cls, r_slope: float, r_init: float, bounding_box,
                      time_interval):
        return cls("moving_circle", tuple(bounding_box), time_interval,
                   r_slope=r_slope, r_init=r_init)

    # -- basic queries -----------------------------------------------------

    @property
    def has_time(self) -> bool:
        return self.time_interval is not None

    @property
    def dim(self) -> int:
        """Coordinate dimension of sample points (2, or 3 with time)."""
        return 3 if self.has_time else 2

    @property
    def n_subdomains(self) -> int:
        return 4 if self.kind == "axes_cross" else 2

    @property
    def subdomain_names(self) -> tuple[str, ...]:
        if self.kind == "axes_cross":
            return ("omega_1", "omega_2", "omega_3", "omega_4")
        return ("omega_plus", "omega_minus")


def _as_points(x) -> Array:
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    return pts


def _radius_at(geom: InterfaceGeometry, t) -> Array:
    return geom.r_slope * np.asarray(t, dtype=float) + geom.r_init


def level_set(geom: InterfaceGeometry, points) -> Array:
    """phi at ``points``; shape (N,).  Moving kinds read time from column 2."""
    pts = _as_points(points)
    x, y = pts[:, 0], pts[:, 1]
    if geom.kind == "vertical_line":
        return x - geom.x0
    if geom.kind == "circle":
        cx, cy = geom.center
        return np.hypot(x - cx, y - cy) - geom.radius
    if geom.kind == "plum_blossom":
        r = np.hypot(x, y)
        theta = np.arctan2(y, x)
        return r - (geom.r0 + geom.amplitude * np.cos(geom.petals * theta))
    if geom.kind == "axes_cross":
        return x * y
    # moving_circle
    if pts.shape[1] < 3:
        raise DomainError("moving_circle points need a time coordinate")
    return np.hypot(x, y) - _radius_at(geom, pts[:, 2])


def level_set_gradient(geom: InterfaceGeometry, points) -> Array:
    """Spatial gradient of phi at ``points``; shape (N, 2)."""
    pts = _as_points(points)
    x, y = pts[:, 0], pts[:, 1]
    n = len(pts)
    grad = np.empty((n, 2))
    if geom.kind == "vertical_line":
        grad[:, 0], grad[:, 1] = 1.0, 0.0
    elif geom.kind in ("circle", "moving_circle"):
        cx, cy = geom.center if geom.kind == "circle" else (0.0, 0.0)
        dx, dy = x - cx, y - cy
        r = np.hypot(dx, dy)
        r = np.where(r == 0.0, 1.0, r)
        grad[:, 0], grad[:, 1] = dx / r, dy / r
    elif geom.kind == "plum_blossom":
        r = np.hypot(x, y)
        rs = np.where(r == 0.0, 1.0, r)
        theta = np.arctan2(y, x)
        # phi = r - r0 - A cos(k theta);  d theta/dx = -y/r^2, d theta/dy = x/r^2
        dphi_dtheta = geom.amplitude * geom.petals * np.sin(geom.petals * theta)
        grad[:, 0] = x / rs + dphi_dtheta * (-y / rs**2)
        grad[:, 1] = y / rs + dphi_dtheta * (x / rs**2)
    else:  # axes_cross, phi = x*y
        grad[:, 0], grad[:, 1] = y, x
    return grad


def _check_in_box(geom: InterfaceGeometry, pts: Array) -> None:
    xmin, xmax, ymin, ymax = geom.bounding_box
    ok = (pts[:, 0] >= xmin) & (pts[:, 0] <= xmax) \
        & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax)
    if geom.has_time and pts.shape[1] > 2:
        t0, t1 = geom.time_interval
        ok &= (pts[:, 2] >= t0) & (pts[:, 2] <= t1)
    if not ok.all():
        raise DomainError("point outside the bounding box")


def classify(geom: InterfaceGeometry, x, tol: float = GAMMA_TOL) -> Region:
    """Classify a single point by level-set sign."""
    pts = _as_points(x)
    if pts.shape[0] != 1:
        raise DomainError("classify takes a single point; use classify_points")
    _check_in_box(geom, pts)
    phi = float(level_set(geom, pts)[0])
    if abs(phi) <= tol:
        return Region.ON_GAMMA
    return Region.OMEGA_PLUS if phi > 0.0 else Region.OMEGA_MINUS


def classify_points(geom: InterfaceGeometry, points, tol: float = GAMMA_TOL) -> Array:
    """Vectorized classification: +1 (Omega^+), -1 (Omega^-), 0 (on Gamma)."""
    pts = _as_points(points)
    _check_in_box(geom, pts)
    phi = level_set(geom, pts)
    out = np.sign(phi)
    out[np.abs(phi) <= tol] = 0.0
    return out


def subdomain_index(geom: InterfaceGeometry, points) -> NDArray[np.intp]:
    """Index of the subdomain owning each point.

    Two-subdomain kinds use 0 for Omega^+ and 1 for Omega^-.  ``axes_cross``
    numbers its quadrants 0..3 as upper-left, upper-right, lower-left,
    lower-right.  Points exactly on Gamma are assigned to the phi >= 0 side.
    """
    pts = _as_points(points)
    if geom.kind == "axes_cross":
        x, y = pts[:, 0], pts[:, 1]
        idx = np.where(y >= 0.0,
                       np.where(x < 0.0, 0, 1),
                       np.where(x < 0.0, 2, 3))
        return idx.astype(np.intp)
    phi = level_set(geom, pts)
    return np.where(phi >= 0.0, 0, 1).astype(np.intp)


def _unit_normals_from_gradient(geom: InterfaceGeometry, pts: Array) -> Array:
    grad = level_set_gradient(geom, pts)
    norms = np.linalg.norm(grad, axis=1, keepdims=True)
    # normal points from Omega^+ (phi > 0) into Omega^- (phi < 0)
    return -grad / norms


def interface_point_and_normal(geom: InterfaceGeometry, param, t=None):
    """Points on Gamma with unit normals, from curve parameters.

    ``param`` is an angle for the circular kinds and an arclength fraction in
    [0, 1] for ``vertical_line`` and ``axes_cross``.  For ``moving_circle`` a
    time array ``t`` of matching shape is required and the returned points
    carry a trailing time column.  Normals point from Omega^+ into Omega^-.
    """
    par = np.atleast_1d(np.asarray(param, dtype=float))
    n = len(par)
    if geom.kind == "moving_circle":
        if t is None:
            raise DomainError("moving_circle needs interface times")
        tt = np.broadcast_to(np.asarray(t, dtype=float), par.shape).astype(float)
        r = _radius_at(geom, tt)
        pts = np.column_stack([r * np.cos(par), r * np.sin(par), tt])
        normals = _unit_normals_from_gradient(geom, pts)
        return pts, normals
    if geom.kind == "circle":
        cx, cy = geom.center
        pts = np.column_stack([cx + geom.radius * np.cos(par),
                               cy + geom.radius * np.sin(par)])
    elif geom.kind == "plum_blossom":
        r = geom.r0 + geom.amplitude * np.cos(geom.petals * par)
        pts = np.column_stack([r * np.cos(par), r * np.sin(par)])
    elif geom.kind == "vertical_line":
        if np.any(par < 0.0) or np.any(par > 1.0):
            raise DomainError("line parameter must lie in [0, 1]")
        ymin, ymax = geom.bounding_box[2:]
        pts = np.column_stack([np.full(n, geom.x0), ymin + par * (ymax - ymin)])
    elif geom.kind == "axes_cross":
        if np.any(par < 0.0) or np.any(par >= 1.0):
            raise DomainError("axes_cross parameter must lie in [0, 1)")
        xmin, xmax, ymin, ymax = geom.bounding_box
        arm = np.minimum((par * 4.0).astype(int), 3)
        lam = par * 4.0 - arm
        arm_dir = np.array([(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)])
        arm_len = np.array([xmax, ymax, -xmin, -ymin])
        d = CROSS_EXCLUSION_RADIUS + lam * (arm_len[arm] - CROSS_EXCLUSION_RADIUS)
        pts = d[:, None] * arm_dir[arm]
    else:  # pragma: no cover - guarded by __post_init__
        raise DomainError(f"unsupported kind {geom.kind!r}")
    normals = _unit_normals_from_gradient(geom, pts)
    if t is not None:
        tt = np.broadcast_to(np.asarray(t, dtype=float), par.shape).astype(float)
        pts = np.column_stack([pts, tt])
    return pts, normals


def _side_subdomains(geom: InterfaceGeometry, pts: Array, normals: Array):
    """Subdomain indices on the plus and minus side of each interface point."""
    spatial = pts[:, :2]
    ahead = spatial + _SIDE_PROBE * normals  # normal points into Omega^-
    behind = spatial - _SIDE_PROBE * normals
    if pts.shape[1] > 2:  # keep the time coordinate for moving interfaces
        ahead = np.column_stack([ahead, pts[:, 2]])
        behind = np.column_stack([behind, pts[:, 2]])
    minus_sub = subdomain_index(geom, ahead)
    plus_sub = subdomain_index(geom, behind)
    return plus_sub, minus_sub


# ---------------------------------------------------------------------------
# collocation sampling


@dataclasses.dataclass(frozen=True)
class CollocationSpec:
    """Requested counts, residual weights, and sampling strategy.

    ``weights`` holds the five positive residual-group weights in the order
    interior_plus, interior_minus, gamma_n (value jump), gamma_d (flux jump),
    boundary.
    """

    n_interior_plus: int
    n_interior_minus: int
    n_interface: int
    n_boundary: int
    weights: tuple[float, float, float, float, float] = (1.0, 1.0, 1.0, 1.0, 1.0)
    strategy: str = "seeded_uniform_random"

    def __post_init__(self) -> None:
        counts = (self.n_interior_plus, self.n_interior_minus,
                  self.n_interface, self.n_boundary)
        if any(c < 1 for c in counts):
            raise ConfigError("all collocation counts must be >= 1")
        if len(self.weights) != 5 or any(w <= 0.0 for w in self.weights):
            raise ConfigError("five positive residual weights are required")
        if self.strategy not in ("seeded_uniform_random", "uniform_grid"):
            raise ConfigError(f"unknown sampling strategy {self.strategy!r}")


@dataclasses.dataclass
class CollocationSet:
    """Seeded point samples for the five residual groups.

    Interface points appear once but contribute two residual rows (value and
    flux), so ``n_total`` counts them twice.  The ``*_sub`` arrays map each
    point to the subdomain whose network and coefficients apply; interface
    points carry both side subdomains.
    """

    interior_plus: Array
    interior_plus_sub: NDArray[np.intp]
    interior_minus: Array
    interior_minus_sub: NDArray[np.intp]
    interface: Array
    interface_normals: Array
    interface_plus_sub: NDArray[np.intp]
    interface_minus_sub: NDArray[np.intp]
    boundary: Array
    boundary_sub: NDArray[np.intp]
    weights: tuple[float, float, float, float, float]
    seed: int

    @property
    def counts(self) -> dict[str, int]:
        return {
            "interior_plus": len(self.interior_plus),
            "interior_minus": len(self.interior_minus),
            "gamma_n": len(self.interface),
            "gamma_d": len(self.interface),
            "boundary": len(self.boundary),
        }

    @property
    def n_total(self) -> int:
        return (len(self.interior_plus) + len(self.interior_minus)
                + 2 * len(self.interface) + len(self.boundary))


def _with_time(rng, pts: Array, geom: InterfaceGeometry) -> Array:
    t0, t1 = geom.time_interval
    tt = rng.uniform(t0, t1, len(pts))
    return np.column_stack([pts, tt])


def _sample_interior_random(geom, sign: int, count: int, rng) -> Array:
    """Rejection-sample ``count`` points with the requested level-set sign."""
    xmin, xmax, ymin, ymax = geom.bounding_box
    got: list[Array] = []
    n_found = 0
    drawn = 0
    while n_found < count:
        batch = max(count, 1024)
        if drawn > 100 * count + 10_000:
            raise SamplingError(
                f"interior sampling exceeded 100x oversampling (sign {sign})")
        pts = np.column_stack([rng.uniform(xmin, xmax, batch),
                               rng.uniform(ymin, ymax, batch)])
        if geom.has_time:
            pts = _with_time(rng, pts, geom)
        drawn += batch
        phi = level_set(geom, pts)
        keep = (phi > GAMMA_TOL) if sign > 0 else (phi < -GAMMA_TOL)
        sel = pts[keep]
        got.append(sel[:count - n_found])
        n_found += len(got[-1])
    return np.vstack(got)


def _sample_interior_grid(geom, sign: int, count: int) -> Array:
    """First ``count`` grid points (row-major) with the requested sign."""
    xmin, xmax, ymin, ymax = geom.bounding_box
    res = max(8, int(math.isqrt(2 * count)) + 2)
    for _ in range(20):
        xs = np.linspace(xmin, xmax, res + 2)[1:-1]
        ys = np.linspace(ymin, ymax, res + 2)[1:-1]
        if geom.has_time:
            t0, t1 = geom.time_interval
            ts = np.linspace(t0, t1, max(3, res // 8))
            grid = np.stack(np.meshgrid(xs, ys, ts, indexing="ij"), axis=-1)
            pts = grid.reshape(-1, 3)
        else:
            grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
            pts = grid.reshape(-1, 2)
        phi = level_set(geom, pts)
        keep = (phi > GAMMA_TOL) if sign > 0 else (phi < -GAMMA_TOL)
        sel = pts[keep]
        if len(sel) >= count:
            return sel[:count]
        res *= 2
    raise SamplingError("uniform grid could not reach the requested count")


def _interface_params(geom, count: int, rng, strategy: str):
    if geom.kind == "vertical_line":
        if strategy == "uniform_grid":
            return np.linspace(0.0, 1.0, count)
        return rng.uniform(0.0, 1.0, count)
    if geom.kind == "axes_cross":
        if strategy == "uniform_grid":
            return (np.arange(count) + 0.5) / count
        return rng.uniform(0.0, 1.0, count)
    if strategy == "uniform_grid":
        return np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    return rng.uniform(0.0, 2.0 * np.pi, count)


def _sample_boundary(geom, count: int, rng, strategy: str) -> tuple[Array, Array]:
    """Points on the outer boundary (plus the initial plane when parabolic).

    For parabolic problems Dirichlet data must pin down the solution on the
    whole parabolic boundary, so the budget is split between the lateral
    boundary (perimeter x time) and the initial plane (area at t0),
    proportionally to their measures.
    """
    xmin, xmax, ymin, ymax = geom.bounding_box
    w, h = xmax - xmin, ymax - ymin
    perim = 2.0 * (w + h)

    def lateral(n: int, rng) -> Array:
        if strategy == "uniform_grid":
            s = (np.arange(n) + 0.5) / n * perim
        else:
            s = rng.uniform(0.0, perim, n)
        pts = np.empty((n, 2))
        # walk the perimeter: bottom, right, top, left
        rem = s.copy()
        for i in range(n):
            d = rem[i]
            if d < w:
                pts[i] = (xmin + d, ymin)
            elif d < w + h:
                pts[i] = (xmax, ymin + (d - w))
            elif d < 2 * w + h:
                pts[i] = (xmax - (d - w - h), ymax)
            else:
                pts[i] = (xmin, ymax - (d - 2 * w - h))
        return pts

    if not geom.has_time:
        pts = lateral(count, rng)
        return pts, subdomain_index(geom, pts)

    t0, t1 = geom.time_interval
    lat_measure = perim * (t1 - t0)
    init_measure = w * h
    n_init = max(1, round(count * init_measure / (init_measure + lat_measure)))
    n_lat = max(1, count - n_init)
    n_init = count - n_lat
    lat = lateral(n_lat, rng)
    if strategy == "uniform_grid":
        ts = (np.arange(n_lat) % 7 + 0.5) / 7 * (t1 - t0) + t0
    else:
        ts = rng.uniform(t0, t1, n_lat)
    lat = np.column_stack([lat, ts])
    # initial plane: uniform in the box at t = t0 (both sides of Gamma)
    if strategy == "uniform_grid":
        res = int(math.ceil(math.sqrt(n_init)))
        xs = np.linspace(xmin, xmax, res + 2)[1:-1]
        ys = np.linspace(ymin, ymax, res + 2)[1:-1]
        grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
        init_sp = grid[:n_init]
    else:
        init_sp = np.column_stack([rng.uniform(xmin, xmax, n_init),
                                   rng.uniform(ymin, ymax, n_init)])
    init = np.column_stack([init_sp, np.full(n_init, t0)])
    pts = np.vstack([lat, init])
    return pts, subdomain_index(geom, pts)


def sample_collocation(geom: InterfaceGeometry, spec: CollocationSpec,
                       seed: int) -> CollocationSet:
    """Draw a :class:`CollocationSet` for ``geom`` under ``spec``.

    Each region group consumes an independent child of ``seed`` (via
    ``SeedSequence.spawn``), so regenerating with the same seed and spec is
    bit-identical and groups stay independent of each other's counts.
    """
    ss = np.random.SeedSequence(seed)
    rng_plus, rng_minus, rng_iface, rng_bdry = \
        (np.random.default_rng(c) for c in ss.spawn(4))

    if spec.strategy == "uniform_grid":
        ip = _sample_interior_grid(geom, +1, spec.n_interior_plus)
        im = _sample_interior_grid(geom, -1, spec.n_interior_minus)
    else:
        ip = _sample_interior_random(geom, +1, spec.n_interior_plus, rng_plus)
        im = _sample_interior_random(geom, -1, spec.n_interior_minus, rng_minus)

    params = _interface_params(geom, spec.n_interface, rng_iface, spec.strategy)
    if geom.kind == "moving_circle":
        t0, t1 = geom.time_interval
        if spec.strategy == "uniform_grid":
            tvals = t0 + (np.arange(spec.n_interface) % 11 + 0.5) / 11 * (t1 - t0)
        else:
            tvals = rng_iface.uniform(t0, t1, spec.n_interface)
        gpts, gnorm = interface_point_and_normal(geom, params, tvals)
    elif geom.has_time:
        t0, t1 = geom.time_interval
        tvals = rng_iface.uniform(t0, t1, spec.n_interface)
        gpts, gnorm = interface_point_and_normal(geom, params, tvals)
    else:
        gpts, gnorm = interface_point_and_normal(geom, params)
    plus_sub, minus_sub = _side_subdomains(geom, gpts, gnorm)

    bpts, bsub = _sample_boundary(geom, spec.n_boundary, rng_bdry, spec.strategy)

    return CollocationSet(
        interior_plus=ip, interior_plus_sub=subdomain_index(geom, ip),
        interior_minus=im, interior_minus_sub=subdomain_index(geom, im),
        interface=gpts, interface_normals=gnorm,
        interface_plus_sub=plus_sub, interface_minus_sub=minus_sub,
        boundary=bpts, boundary_sub=bsub,
        weights=tuple(spec.weights), seed=seed,
    )
