"""Randomized single-hidden-layer feature networks.

One net per subdomain:  u(x) = sum_j alpha_j * phi(w_j . x + b_j), with the
hidden weights ``W`` and biases ``b`` drawn once from seeded uniform
distributions and then frozen; only the output coefficients ``alpha`` are
trainable.  Every evaluated quantity (values, gradients, Laplacians, time and
normal derivatives) is therefore an exactly linear map of ``alpha``, realized
as a matrix product with a cached :class:`FeatureBlock`.

Activation derivatives are closed-form:

* tanh:  phi' = 1 - phi^2,  phi'' = -2 phi (1 - phi^2)
* sin:   phi' = cos,        phi'' = -sin

and the chain rule through the affine layer gives, per neuron,
grad phi = phi'(z) w,  Hessian phi = phi''(z) w w^T,  Laplacian over the
spatial coordinates, and d/dt phi = phi'(z) w_t for space-time nets (time is
the trailing coordinate).
"""

from __future__ import annotations

import dataclasses

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, ShapeError

Array = NDArray[np.float64]

ACTIVATIONS = ("tanh", "sin")

#: Quantities a FeatureBlock can hold.  "grad" covers dx/dy, "hess" the three
#: second derivatives dxx/dxy/dyy over the spatial coordinates.
NEEDS = ("phi", "grad", "lap", "dt", "dn", "hess")


@dataclasses.dataclass
class RandomFeatureNet:
    """Frozen random hidden layer plus trainable output coefficients."""

    m: int
    dim: int
    activation: str
    W: Array
    b: Array
    alpha: Array
    weight_range: tuple[float, float]
    bias_range: tuple[float, float]
    seed: int

    @property
    def spatial_dim(self) -> int:
        """Spatial coordinate count (time, when present, is the last column)."""
        return 2 if self.dim <= 2 else self.dim - 1

    @property
    def has_time(self) -> bool:
        return self.dim == 3


@dataclasses.dataclass(frozen=True)
class CompositeNet:
    """Weighted stack of nets acting as a single net.

    Freezes a combination like u_N + eps*u_p so it can serve as the base of
    a further correction round: feature matrices concatenate across parts
    and the part weights fold into the output coefficients, so evaluation
    is exact rather than re-fit.
    """

    parts: tuple  # of (net, weight) pairs

    def __post_init__(self):
        if not self.parts:
            raise ConfigError("composite net needs at least one part")
        dims = {net.dim for net, _ in self.parts}
        if len(dims) != 1:
            raise ShapeError(f"mixed input dimensions {sorted(dims)}")

    @property
    def m(self) -> int:
        return sum(net.m for net, _ in self.parts)

    @property
    def dim(self) -> int:
        return self.parts[0][0].dim

    @property
    def spatial_dim(self) -> int:
        return self.parts[0][0].spatial_dim

    @property
    def has_time(self) -> bool:
        return self.parts[0][0].has_time

    @property
    def alpha(self) -> Array:
        return np.concatenate([w * net.alpha for net, w in self.parts])


def init_net(m: int, dim: int, activation: str,
             weight_range: tuple[float, float],
             bias_range: tuple[float, float], seed: int) -> RandomFeatureNet:
    """Draw W entrywise uniform on ``weight_range`` and b on ``bias_range``."""
    if m < 1:
        raise ConfigError("neuron count must be >= 1")
    if dim not in (2, 3):
        raise ConfigError("nets support 2 (space) or 3 (space-time) inputs")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    wlo, whi = weight_range
    blo, bhi = bias_range
    if not (wlo < whi and blo <= bhi):
        raise ConfigError("sampling ranges must be nonempty")
    rng = np.random.default_rng(seed)
    W = rng.uniform(wlo, whi, size=(m, dim))
    b = rng.uniform(blo, bhi, size=m)
    return RandomFeatureNet(m=m, dim=dim, activation=activation, W=W, b=b,
                            alpha=np.zeros(m), weight_range=(wlo, whi),
                            bias_range=(blo, bhi), seed=seed)


@dataclasses.dataclass
class FeatureBlock:
    """Per-point-set feature matrices; each present block is (N, m).

    Built once per (net, point set) and reused across solver iterations,
    since hidden parameters and collocation points never move.
    """

    m: int
    n_points: int
    phi: Array | None = None
    dx: Array | None = None
    dy: Array | None = None
    lap: Array | None = None
    dt: Array | None = None
    dn: Array | None = None
    dxx: Array | None = None
    dxy: Array | None = None
    dyy: Array | None = None


def _activation_derivatives(activation: str, z: Array, order: int):
    """(phi, phi', phi'') with entries above ``order`` set to None."""
    if activation == "tanh":
        a0 = np.tanh(z)
        a1 = 1.0 - a0 * a0 if order >= 1 else None
        a2 = -2.0 * a0 * a1 if order >= 2 else None
    else:  # sin
        a0 = np.sin(z)
        a1 = np.cos(z) if order >= 1 else None
        a2 = -a0 if order >= 2 else None
    return a0, a1, a2


def features(net: RandomFeatureNet, points, normals=None,
             need: tuple[str, ...] = ("phi", "grad", "lap")) -> FeatureBlock:
    """Evaluate the requested feature matrices at ``points``.

    ``normals`` (N, 2) is required for "dn"; "dt" requires a space-time net.
    Only the requested blocks are materialized, to bound memory on large
    collocation sets.
    """
    if isinstance(net, CompositeNet):
        sub = [features(part, points, normals=normals, need=need)
               for part, _ in net.parts]
        merged = FeatureBlock(m=net.m, n_points=sub[0].n_points)
        for field in ("phi", "dx", "dy", "lap", "dt", "dn",
                      "dxx", "dxy", "dyy"):
            mats = [getattr(blk, field) for blk in sub]
            if mats[0] is not None:
                setattr(merged, field, np.concatenate(mats, axis=1))
        return merged
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != net.dim:
        raise ShapeError(
            f"points have dimension {pts.shape[1]}, net expects {net.dim}")
    unknown = set(need) - set(NEEDS)
    if unknown:
        raise ShapeError(f"unknown feature requests {sorted(unknown)}")
    if "dt" in need and not net.has_time:
        raise ShapeError("time derivative requested from a spatial net")
    if "dn" in need and normals is None:
        raise ShapeError("normal derivative requested without normals")

    order = 0
    if {"grad", "dt", "dn"} & set(need):
        order = 1
    if {"lap", "hess"} & set(need):
        order = 2

    z = pts @ net.W.T + net.b
    a0, a1, a2 = _activation_derivatives(net.activation, z, order)

    blk = FeatureBlock(m=net.m, n_points=len(pts))
    wx = net.W[:, 0]
    wy = net.W[:, 1]
    if "phi" in need:
        blk.phi = a0
    if {"grad", "dn"} & set(need):
        dx = a1 * wx
        dy = a1 * wy
        if "grad" in need:
            blk.dx, blk.dy = dx, dy
        if "dn" in need:
            nrm = np.asarray(normals, dtype=float)
            if nrm.shape != (len(pts), 2):
                raise ShapeError("normals must be (N, 2)")
            blk.dn = nrm[:, 0:1] * dx + nrm[:, 1:2] * dy
    if "lap" in need:
        blk.lap = a2 * (wx * wx + wy * wy)
    if "hess" in need:
        blk.dxx = a2 * (wx * wx)
        blk.dxy = a2 * (wx * wy)
        blk.dyy = a2 * (wy * wy)
    if "dt" in need:
        blk.dt = a1 * net.W[:, 2]
    return blk


@dataclasses.dataclass
class NetState:
    """Field values of one net at a point set; entries mirror the block."""

    u: Array | None = None
    gx: Array | None = None
    gy: Array | None = None
    lap: Array | None = None
    dt: Array | None = None
    dn: Array | None = None
    hxx: Array | None = None
    hxy: Array | None = None
    hyy: Array | None = None


def eval_state(net_or_alpha, block: FeatureBlock) -> NetState:
    """Contract every present feature matrix with ``alpha``.

    Accepts either a net (its current ``alpha`` is used) or a bare
    coefficient vector, so correction nets and trial directions share the
    same path.
    """
    alpha = net_or_alpha.alpha \
        if isinstance(net_or_alpha, (RandomFeatureNet, CompositeNet)) \
        else np.asarray(net_or_alpha, dtype=float)
    if alpha.shape != (block.m,):
        raise ShapeError(
            f"alpha has shape {alpha.shape}, block expects ({block.m},)")
    out = NetState()
    for src, dst in (("phi", "u"), ("dx", "gx"), ("dy", "gy"), ("lap", "lap"),
                     ("dt", "dt"), ("dn", "dn"), ("dxx", "hxx"),
                     ("dxy", "hxy"), ("dyy", "hyy")):
        mat = getattr(block, src)
        if mat is not None:
            setattr(out, dst, mat @ alpha)
    return out
