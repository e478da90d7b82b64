"""Stacked residual and Jacobian assembly for both solve stages.

The discrete least-squares system stacks five row groups in fixed order:
interior plus, interior minus, interface value (u+ - u- - w), interface flux
(beta+ du+/dn - beta- du-/dn - v), and Dirichlet boundary (u - g).  Each row
carries the factor sqrt(weight/count) of its group so that ||F||^2 equals
the weighted mean-square functional exactly.

Interior rows expand div(beta grad u) + f by the chain rule,

    R = beta*lap(u) + T . grad(u) + f(x, u) [- u_t],
    T = grad_x beta + beta_u grad(u) + Hess(u) beta_p,

and the directional derivative and symmetric second variation of R used by
the Jacobian and by the correction stage are implemented from the same
pointwise fields (``directional_interior`` / ``bilinear_interior``; flux
variants for the interface).  These closed forms were derived once by hand
and are pinned against an independent symbolic series expansion in the test
suite, so edit them only together with those tests.

Column blocks (features of one subdomain's net) enter rows of that
subdomain only; interface rows couple the two adjacent subdomains with
opposite signs.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from numpy.typing import NDArray

from . import geometry as geo
from .basis import FeatureBlock, NetState, RandomFeatureNet, eval_state, features
from .errors import ConfigError, NumericalError, ShapeError
from .problem import Coefficient, InterfaceProblem, Source

Array = NDArray[np.float64]


# ---------------------------------------------------------------------------
# pointwise coefficient and residual fields


@dataclasses.dataclass
class CoefFields:
    """beta and its partials along a state; ``None`` marks identical zero."""

    b: Array
    bu: Array | None = None
    buu: Array | None = None
    buuu: Array | None = None
    bx1: Array | None = None
    bx2: Array | None = None
    bp1: Array | None = None
    bp2: Array | None = None
    bpu1: Array | None = None
    bpu2: Array | None = None
    bpp11: Array | None = None
    bpp12: Array | None = None
    bpp22: Array | None = None


def coef_fields(coef: Coefficient, x: Array, u: Array, g: Array,
                order: int = 1) -> CoefFields:
    """Evaluate beta and the partials needed up to expansion ``order``.

    order 0 covers the residual itself (beta, beta_u, beta_p, grad_x beta),
    order 1 adds the second partials entering the Jacobian, order 2 the
    third-order u-partial entering the correction's quadratic term.
    """
    out = CoefFields(b=coef.eval(x, u, g))
    if coef.d_u is not None:
        out.bu = coef.d_u(x, u, g)
    if coef.grad_x is not None:
        bx = coef.grad_x(x, u, g)
        out.bx1, out.bx2 = bx[:, 0], bx[:, 1]
    if coef.d_p is not None:
        bp = coef.d_p(x, u, g)
        out.bp1, out.bp2 = bp[:, 0], bp[:, 1]
    if order >= 1:
        if coef.d_uu is not None:
            out.buu = coef.d_uu(x, u, g)
        if coef.d_pu is not None:
            bpu = coef.d_pu(x, u, g)
            out.bpu1, out.bpu2 = bpu[:, 0], bpu[:, 1]
        if coef.d_pp is not None:
            bpp = coef.d_pp(x, u, g)
            out.bpp11 = bpp[:, 0, 0]
            out.bpp12 = bpp[:, 0, 1]
            out.bpp22 = bpp[:, 1, 1]
    if order >= 2 and coef.d_uuu is not None:
        out.buuu = coef.d_uuu(x, u, g)
    return out


@dataclasses.dataclass
class ColumnFields:
    """Fields of a direction: one net column (matrices) or a state (vectors)."""

    q: Array
    gx: Array
    gy: Array
    lap: Array | None = None
    dt: Array | None = None
    hxx: Array | None = None
    hxy: Array | None = None
    hyy: Array | None = None
    dn: Array | None = None

    @classmethod
    def from_block(cls, blk: FeatureBlock) -> "ColumnFields":
        return cls(q=blk.phi, gx=blk.dx, gy=blk.dy, lap=blk.lap, dt=blk.dt,
                   hxx=blk.dxx, hxy=blk.dxy, hyy=blk.dyy, dn=blk.dn)

    @classmethod
    def from_state(cls, state: NetState) -> "ColumnFields":
        return cls(q=state.u, gx=state.gx, gy=state.gy, lap=state.lap,
                   dt=state.dt, hxx=state.hxx, hxy=state.hxy, hyy=state.hyy,
                   dn=state.dn)


@dataclasses.dataclass
class InteriorBase:
    """Frozen interior fields along a state, ready for directional terms."""

    cf: CoefFields
    g1: Array
    g2: Array
    lap: Array
    hxx: Array | None
    hxy: Array | None
    hyy: Array | None
    t1: Array | None
    t2: Array | None
    fu: Array | None
    fuu: Array | None
    resid: Array
    parabolic: bool


def interior_base(coef: Coefficient, source: Source, x: Array,
                  state: NetState, parabolic: bool,
                  order: int = 1) -> InteriorBase:
    cf = coef_fields(coef, x, state.u, np.column_stack([state.gx, state.gy]),
                     order)
    g1, g2 = state.gx, state.gy
    t1 = cf.bx1.copy() if cf.bx1 is not None else None
    t2 = cf.bx2.copy() if cf.bx2 is not None else None

    def add(acc, term):
        return term if acc is None else acc + term

    if cf.bu is not None:
        t1 = add(t1, cf.bu * g1)
        t2 = add(t2, cf.bu * g2)
    if cf.bp1 is not None:
        if state.hxx is None:
            raise ShapeError("gradient-dependent coefficient needs Hessian "
                             "feature blocks")
        t1 = add(t1, state.hxx * cf.bp1 + state.hxy * cf.bp2)
        t2 = add(t2, state.hxy * cf.bp1 + state.hyy * cf.bp2)

    resid = cf.b * state.lap + source.eval(x, state.u)
    if t1 is not None:
        resid = resid + t1 * g1 + t2 * g2
    if parabolic:
        resid = resid - state.dt
    fu = source.d_u(x, state.u) if source.d_u is not None else None
    fuu = None
    if order >= 2 and source.d_uu is not None:
        fuu = source.d_uu(x, state.u)
    return InteriorBase(cf=cf, g1=g1, g2=g2, lap=state.lap, hxx=state.hxx,
                        hxy=state.hxy, hyy=state.hyy, t1=t1, t2=t2, fu=fu,
                        fuu=fuu, resid=resid, parabolic=parabolic)


def _lift(a: Array | None, ndim: int):
    if a is None or ndim == 1 or a.ndim == 2:
        return a
    return a[:, None]


def _pair_shape(ca: ColumnFields, cb: ColumnFields):
    # a vector direction against a matrix of directions broadcasts to the
    # matrix shape; np.broadcast_shapes alone would misalign (N,) with (N,m)
    if ca.q.ndim != cb.q.ndim:
        return ca.q.shape if ca.q.ndim == 2 else cb.q.shape
    return np.broadcast_shapes(ca.q.shape, cb.q.shape)


def directional_interior(ib: InteriorBase, col: ColumnFields) -> Array:
    """Derivative of the interior residual along one direction.

    Serves as the base Jacobian column (direction = feature column) and as
    the first-order term of the correction expansion (direction = the
    correction field).
    """
    nd = col.q.ndim
    cf = ib.cf
    b, bu, buu = _lift(cf.b, nd), _lift(cf.bu, nd), _lift(cf.buu, nd)
    bp1, bp2 = _lift(cf.bp1, nd), _lift(cf.bp2, nd)
    bpu1, bpu2 = _lift(cf.bpu1, nd), _lift(cf.bpu2, nd)
    bpp11, bpp12, bpp22 = (_lift(cf.bpp11, nd), _lift(cf.bpp12, nd),
                           _lift(cf.bpp22, nd))
    g1, g2, lap0 = _lift(ib.g1, nd), _lift(ib.g2, nd), _lift(ib.lap, nd)
    hxx, hxy, hyy = _lift(ib.hxx, nd), _lift(ib.hxy, nd), _lift(ib.hyy, nd)
    t1, t2 = _lift(ib.t1, nd), _lift(ib.t2, nd)
    fu = _lift(ib.fu, nd)
    q, qx, qy, qlap = col.q, col.gx, col.gy, col.lap

    def add(acc, term):
        return term if acc is None else acc + term

    bdot = None
    budot = None
    bpdot1 = bpdot2 = None
    if bu is not None:
        bdot = bu * q
    if buu is not None:
        budot = buu * q
    if bp1 is not None:
        bdot = add(bdot, bp1 * qx + bp2 * qy)
    if bpu1 is not None:
        budot = add(budot, bpu1 * qx + bpu2 * qy)
        bpdot1 = bpu1 * q
        bpdot2 = bpu2 * q
    if bpp11 is not None:
        bpdot1 = add(bpdot1, bpp11 * qx + bpp12 * qy)
        bpdot2 = add(bpdot2, bpp12 * qx + bpp22 * qy)

    out = b * qlap
    if bdot is not None:
        out = out + bdot * lap0
    # derivative of T dotted with grad u_N, plus T dotted with grad of column
    tdot1 = tdot2 = None
    if budot is not None:
        tdot1 = budot * g1
        tdot2 = budot * g2
    if bu is not None:
        tdot1 = add(tdot1, bu * qx)
        tdot2 = add(tdot2, bu * qy)
    if bp1 is not None:
        tdot1 = add(tdot1, col.hxx * bp1 + col.hxy * bp2)
        tdot2 = add(tdot2, col.hxy * bp1 + col.hyy * bp2)
    if bpdot1 is not None:
        tdot1 = add(tdot1, hxx * bpdot1 + hxy * bpdot2)
        tdot2 = add(tdot2, hxy * bpdot1 + hyy * bpdot2)
    if tdot1 is not None:
        out = out + tdot1 * g1 + tdot2 * g2
    if t1 is not None:
        out = out + t1 * qx + t2 * qy
    if fu is not None:
        out = out + fu * q
    if ib.parabolic:
        out = out - col.dt
    return out


def bilinear_interior(ib: InteriorBase, ca: ColumnFields,
                      cb: ColumnFields) -> Array:
    """Symmetric second variation Q(a, b) of the interior residual.

    Q(a, a) is twice the quadratic term of the correction expansion; mixed
    arguments give the gamma-dependent Jacobian part.
    """
    nd = max(ca.q.ndim, cb.q.ndim)
    cf = ib.cf
    bu, buu, buuu = _lift(cf.bu, nd), _lift(cf.buu, nd), _lift(cf.buuu, nd)
    bp1, bp2 = _lift(cf.bp1, nd), _lift(cf.bp2, nd)
    bpu1, bpu2 = _lift(cf.bpu1, nd), _lift(cf.bpu2, nd)
    bpp11, bpp12, bpp22 = (_lift(cf.bpp11, nd), _lift(cf.bpp12, nd),
                           _lift(cf.bpp22, nd))
    g1, g2, lap0 = _lift(ib.g1, nd), _lift(ib.g2, nd), _lift(ib.lap, nd)
    hxx, hxy, hyy = _lift(ib.hxx, nd), _lift(ib.hxy, nd), _lift(ib.hyy, nd)
    fuu = _lift(ib.fuu, nd)
    qa, ax, ay, alap = (_lift(ca.q, nd), _lift(ca.gx, nd), _lift(ca.gy, nd),
                        _lift(ca.lap, nd))
    ahxx, ahxy, ahyy = (_lift(ca.hxx, nd), _lift(ca.hxy, nd),
                        _lift(ca.hyy, nd))
    qb, bx_, by_, blap = (_lift(cb.q, nd), _lift(cb.gx, nd), _lift(cb.gy, nd),
                          _lift(cb.lap, nd))
    bhxx, bhxy, bhyy = (_lift(cb.hxx, nd), _lift(cb.hxy, nd),
                        _lift(cb.hyy, nd))

    def add(acc, term):
        return term if acc is None else acc + term

    def first(q, gx, gy):
        d = None
        if bu is not None:
            d = bu * q
        if bp1 is not None:
            d = add(d, bp1 * gx + bp2 * gy)
        return d

    def first_u(q, gx, gy):
        d = None
        if buu is not None:
            d = buu * q
        if bpu1 is not None:
            d = add(d, bpu1 * gx + bpu2 * gy)
        return d

    def first_p(q, gx, gy):
        d1 = d2 = None
        if bpu1 is not None:
            d1, d2 = bpu1 * q, bpu2 * q
        if bpp11 is not None:
            d1 = add(d1, bpp11 * gx + bpp12 * gy)
            d2 = add(d2, bpp12 * gx + bpp22 * gy)
        return d1, d2

    bdd = None
    if buu is not None:
        bdd = buu * qa * qb
    if bpu1 is not None:
        bdd = add(bdd, bpu1 * (qa * bx_ + qb * ax) + bpu2 * (qa * by_ + qb * ay))
    if bpp11 is not None:
        bdd = add(bdd, bpp11 * ax * bx_ + bpp12 * (ax * by_ + ay * bx_)
                  + bpp22 * ay * by_)

    out = None
    if bdd is not None:
        out = bdd * lap0
    da, db = first(qa, ax, ay), first(qb, bx_, by_)
    if da is not None:
        out = add(out, da * blap + db * alap)

    # S terms: second variation of T, dotted with grad u_N
    dua, dub = first_u(qa, ax, ay), first_u(qb, bx_, by_)
    dpa1, dpa2 = first_p(qa, ax, ay)
    dpb1, dpb2 = first_p(qb, bx_, by_)
    s1 = s2 = None
    if buuu is not None:
        s1 = buuu * qa * qb * g1
        s2 = buuu * qa * qb * g2
    if dua is not None:
        s1 = add(s1, dua * bx_ + dub * ax)
        s2 = add(s2, dua * by_ + dub * ay)
    if dpa1 is not None:
        s1 = add(s1, ahxx * dpb1 + ahxy * dpb2 + bhxx * dpa1 + bhxy * dpa2)
        s2 = add(s2, ahxy * dpb1 + ahyy * dpb2 + bhxy * dpa1 + bhyy * dpa2)
    if s1 is not None:
        out = add(out, s1 * g1 + s2 * g2)

    # first variation of T along one direction, dotted with the other's grad
    def tdot(q, gx, gy, chxx, chxy, chyy, du, dp1, dp2):
        d1 = d2 = None
        if du is not None:
            d1, d2 = du * g1, du * g2
        if bu is not None:
            d1 = add(d1, bu * gx)
            d2 = add(d2, bu * gy)
        if bp1 is not None:
            d1 = add(d1, chxx * bp1 + chxy * bp2)
            d2 = add(d2, chxy * bp1 + chyy * bp2)
        if dp1 is not None:
            d1 = add(d1, hxx * dp1 + hxy * dp2)
            d2 = add(d2, hxy * dp1 + hyy * dp2)
        return d1, d2

    ta1, ta2 = tdot(qa, ax, ay, ahxx, ahxy, ahyy, dua, dpa1, dpa2)
    tb1, tb2 = tdot(qb, bx_, by_, bhxx, bhxy, bhyy, dub, dpb1, dpb2)
    if ta1 is not None:
        out = add(out, ta1 * bx_ + ta2 * by_ + tb1 * ax + tb2 * ay)
    if fuu is not None:
        out = add(out, fuu * qa * qb)
    if out is None:
        out = np.zeros(_pair_shape(ca, cb))
    return out


@dataclasses.dataclass
class FluxBase:
    """One-sided interface flux fields along a state."""

    cf: CoefFields
    dn0: Array
    base: Array  # beta * du/dn


def flux_base(coef: Coefficient, x: Array, state: NetState,
              order: int = 1) -> FluxBase:
    cf = coef_fields(coef, x, state.u, np.column_stack([state.gx, state.gy]),
                     order)
    return FluxBase(cf=cf, dn0=state.dn, base=cf.b * state.dn)


def directional_flux(fb: FluxBase, col: ColumnFields) -> Array:
    nd = col.q.ndim
    cf = fb.cf
    b, bu = _lift(cf.b, nd), _lift(cf.bu, nd)
    bp1, bp2 = _lift(cf.bp1, nd), _lift(cf.bp2, nd)
    dn0 = _lift(fb.dn0, nd)
    out = b * col.dn
    if bu is not None:
        out = out + bu * col.q * dn0
    if bp1 is not None:
        out = out + (bp1 * col.gx + bp2 * col.gy) * dn0
    return out


def bilinear_flux(fb: FluxBase, ca: ColumnFields, cb: ColumnFields) -> Array:
    nd = max(ca.q.ndim, cb.q.ndim)
    cf = fb.cf
    bu, buu = _lift(cf.bu, nd), _lift(cf.buu, nd)
    bp1, bp2 = _lift(cf.bp1, nd), _lift(cf.bp2, nd)
    bpu1, bpu2 = _lift(cf.bpu1, nd), _lift(cf.bpu2, nd)
    bpp11, bpp12, bpp22 = (_lift(cf.bpp11, nd), _lift(cf.bpp12, nd),
                           _lift(cf.bpp22, nd))
    dn0 = _lift(fb.dn0, nd)
    qa, ax, ay, adn = _lift(ca.q, nd), _lift(ca.gx, nd), _lift(ca.gy, nd), _lift(ca.dn, nd)
    qb, bx_, by_, bdn = _lift(cb.q, nd), _lift(cb.gx, nd), _lift(cb.gy, nd), _lift(cb.dn, nd)

    def add(acc, term):
        return term if acc is None else acc + term

    bdd = None
    if buu is not None:
        bdd = buu * qa * qb
    if bpu1 is not None:
        bdd = add(bdd, bpu1 * (qa * bx_ + qb * ax) + bpu2 * (qa * by_ + qb * ay))
    if bpp11 is not None:
        bdd = add(bdd, bpp11 * ax * bx_ + bpp12 * (ax * by_ + ay * bx_)
                  + bpp22 * ay * by_)
    out = None
    if bdd is not None:
        out = bdd * dn0

    def first(q, gx, gy):
        d = None
        if bu is not None:
            d = bu * q
        if bp1 is not None:
            d = add(d, bp1 * gx + bp2 * gy)
        return d

    da, db = first(qa, ax, ay), first(qb, bx_, by_)
    if da is not None:
        out = add(out, da * bdn + db * adn)
    if out is None:
        out = np.zeros(_pair_shape(ca, cb))
    return out


# ---------------------------------------------------------------------------
# block workspace and layout


@dataclasses.dataclass
class _InteriorPiece:
    sub: int
    rows: Array  # global row indices
    x: Array
    blk: FeatureBlock
    scale: float


@dataclasses.dataclass
class _InterfacePiece:
    sign: float
    sub: int
    local: Array  # positions within the interface point set
    x: Array
    blk: FeatureBlock  # phi, grad, dn of the side's net
    scale_n: float
    scale_d: float


@dataclasses.dataclass
class _BoundaryPiece:
    sub: int
    local: Array
    blk: FeatureBlock
    scale: float


@dataclasses.dataclass
class AssemblyBlocks:
    """Prebuilt feature blocks and data vectors for one (nets, colloc) pair."""

    problem: InterfaceProblem
    colloc: geo.CollocationSet
    nets: tuple[RandomFeatureNet, ...]
    row_groups: dict[str, slice]
    scaling: Array
    col_slices: tuple[slice, ...]
    n_rows: int
    n_cols: int
    interior: list[_InteriorPiece]
    interface: list[_InterfacePiece]
    boundary: list[_BoundaryPiece]
    w: Array
    v: Array
    g: Array


def _row_layout(colloc: geo.CollocationSet):
    counts = colloc.counts
    weights = dict(zip(geo.GROUPS, colloc.weights))
    offsets = {}
    scales = {}
    start = 0
    for name in geo.GROUPS:
        n = counts[name]
        offsets[name] = slice(start, start + n)
        scales[name] = float(np.sqrt(weights[name] / n))
        start += n
    scaling = np.empty(start)
    for name in geo.GROUPS:
        scaling[offsets[name]] = scales[name]
    return offsets, scales, scaling, start


def _interior_needs(problem, sub):
    need = ["phi", "grad", "lap"]
    if problem.coefficients[sub].depends_on_grad:
        need.append("hess")
    if problem.parabolic:
        need.append("dt")
    return tuple(need)


def build_blocks(problem: InterfaceProblem, nets: tuple[RandomFeatureNet, ...],
                 colloc: geo.CollocationSet) -> AssemblyBlocks:
    """Evaluate all feature blocks and interface/boundary data once."""
    n_subs = problem.n_subdomains
    if len(nets) != n_subs:
        raise ConfigError(f"expected {n_subs} nets, got {len(nets)}")
    want_dim = 3 if problem.geometry.has_time else 2
    for net in nets:
        if net.dim != want_dim:
            raise ShapeError(f"nets must have dim={want_dim} for this problem")
    if not callable(problem.jump_w) or not callable(problem.jump_v):
        raise ConfigError("problem is missing interface jump data")

    row_groups, scales, scaling, n_rows = _row_layout(colloc)
    col_slices = []
    start = 0
    for net in nets:
        col_slices.append(slice(start, start + net.m))
        start += net.m
    n_cols = start

    interior: list[_InteriorPiece] = []
    for group, pts, subs in (("interior_plus", colloc.interior_plus,
                              colloc.interior_plus_sub),
                             ("interior_minus", colloc.interior_minus,
                              colloc.interior_minus_sub)):
        base = row_groups[group].start
        for s in np.unique(subs):
            sel = np.flatnonzero(subs == s)
            x = pts[sel]
            blk = features(nets[s], x, need=_interior_needs(problem, s))
            interior.append(_InteriorPiece(sub=int(s), rows=base + sel, x=x,
                                           blk=blk, scale=scales[group]))

    interface: list[_InterfacePiece] = []
    gpts, gnorm = colloc.interface, colloc.interface_normals
    for sign, subs in ((1.0, colloc.interface_plus_sub),
                       (-1.0, colloc.interface_minus_sub)):
        for s in np.unique(subs):
            sel = np.flatnonzero(subs == s)
            x = gpts[sel]
            blk = features(nets[s], x, normals=gnorm[sel],
                           need=("phi", "grad", "dn"))
            interface.append(_InterfacePiece(sign=sign, sub=int(s), local=sel,
                                             x=x, blk=blk,
                                             scale_n=scales["gamma_n"],
                                             scale_d=scales["gamma_d"]))

    boundary: list[_BoundaryPiece] = []
    for s in np.unique(colloc.boundary_sub):
        sel = np.flatnonzero(colloc.boundary_sub == s)
        blk = features(nets[s], colloc.boundary[sel], need=("phi",))
        boundary.append(_BoundaryPiece(sub=int(s), local=sel, blk=blk,
                                       scale=scales["boundary"]))

    w = np.asarray(problem.jump_w(gpts, gnorm, colloc.interface_plus_sub,
                                  colloc.interface_minus_sub), dtype=float)
    v = np.asarray(problem.jump_v(gpts, gnorm, colloc.interface_plus_sub,
                                  colloc.interface_minus_sub), dtype=float)
    g = np.asarray(problem.boundary_g(colloc.boundary, colloc.boundary_sub),
                   dtype=float)
    for name, arr, count in (("w", w, len(gpts)), ("v", v, len(gpts)),
                             ("g", g, len(colloc.boundary))):
        if arr.shape != (count,):
            raise ShapeError(f"jump/boundary data {name} has shape "
                             f"{arr.shape}, expected ({count},)")

    return AssemblyBlocks(problem=problem, colloc=colloc, nets=tuple(nets),
                          row_groups=row_groups, scaling=scaling,
                          col_slices=tuple(col_slices), n_rows=n_rows,
                          n_cols=n_cols, interior=interior,
                          interface=interface, boundary=boundary,
                          w=w, v=v, g=g)


def stack_alpha(nets) -> Array:
    return np.concatenate([net.alpha for net in nets])


def with_alpha(nets, alpha: Array) -> tuple[RandomFeatureNet, ...]:
    """Copies of ``nets`` carrying slices of the stacked coefficient vector."""
    out = []
    start = 0
    for net in nets:
        if not isinstance(net, RandomFeatureNet):
            raise ConfigError("only plain feature nets carry replaceable "
                              "coefficients; composites are frozen")
        out.append(dataclasses.replace(net,
                                       alpha=alpha[start:start + net.m].copy()))
        start += net.m
    if start != len(alpha):
        raise ShapeError("coefficient vector length does not match nets")
    return tuple(out)


# ---------------------------------------------------------------------------
# base system


@dataclasses.dataclass
class ResidualSystem:
    """Assembled residual and Jacobian with row bookkeeping."""

    F: Array
    J: Array | None
    row_groups: dict[str, slice]
    scaling: Array


def _alpha_or_nets(blocks: AssemblyBlocks, nets, alpha):
    # the nets argument is authoritative; blocks only cache feature values,
    # which depend on weights and biases but never on alpha
    if alpha is None:
        alpha = stack_alpha(nets)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (blocks.n_cols,):
        raise ShapeError(f"alpha has shape {alpha.shape}, expected "
                         f"({blocks.n_cols},)")
    return alpha


def assemble_residual(problem: InterfaceProblem, nets, colloc,
                      blocks: AssemblyBlocks | None = None, alpha=None,
                      check_finite: bool = False) -> Array:
    """Stacked scaled residual at the nets' coefficients (or ``alpha``)."""
    if blocks is None:
        blocks = build_blocks(problem, nets, colloc)
    alpha = _alpha_or_nets(blocks, nets, alpha)
    F = np.zeros(blocks.n_rows)

    for piece in blocks.interior:
        state = eval_state(alpha[blocks.col_slices[piece.sub]], piece.blk)
        ib = interior_base(problem.coefficients[piece.sub],
                           problem.sources[piece.sub], piece.x, state,
                           problem.parabolic, order=0)
        F[piece.rows] = piece.scale * ib.resid

    gn, gd = blocks.row_groups["gamma_n"], blocks.row_groups["gamma_d"]
    for piece in blocks.interface:
        state = eval_state(alpha[blocks.col_slices[piece.sub]], piece.blk)
        F[gn.start + piece.local] += piece.sign * piece.scale_n * state.u
        fb = flux_base(problem.coefficients[piece.sub], piece.x, state,
                       order=0)
        F[gd.start + piece.local] += piece.sign * piece.scale_d * fb.base
    F[gn] -= blocks.scaling[gn] * blocks.w
    F[gd] -= blocks.scaling[gd] * blocks.v

    bd = blocks.row_groups["boundary"]
    for piece in blocks.boundary:
        u = piece.blk.phi @ alpha[blocks.col_slices[piece.sub]]
        F[bd.start + piece.local] = piece.scale * u
    F[bd] -= blocks.scaling[bd] * blocks.g

    if check_finite and not np.all(np.isfinite(F)):
        raise NumericalError("residual contains non-finite entries "
                             "(state left the admissible range)")
    return F


def assemble_jacobian(problem: InterfaceProblem, nets, colloc,
                      blocks: AssemblyBlocks | None = None,
                      alpha=None) -> Array:
    """Dense Jacobian of the stacked residual in the coefficient vector."""
    if blocks is None:
        blocks = build_blocks(problem, nets, colloc)
    alpha = _alpha_or_nets(blocks, nets, alpha)
    J = np.zeros((blocks.n_rows, blocks.n_cols))

    for piece in blocks.interior:
        cols = blocks.col_slices[piece.sub]
        state = eval_state(alpha[cols], piece.blk)
        ib = interior_base(problem.coefficients[piece.sub],
                           problem.sources[piece.sub], piece.x, state,
                           problem.parabolic, order=1)
        col = ColumnFields.from_block(piece.blk)
        J[piece.rows, cols] = piece.scale * directional_interior(ib, col)

    gn, gd = blocks.row_groups["gamma_n"], blocks.row_groups["gamma_d"]
    for piece in blocks.interface:
        cols = blocks.col_slices[piece.sub]
        state = eval_state(alpha[cols], piece.blk)
        J[gn.start + piece.local, cols] += (piece.sign * piece.scale_n
                                            * piece.blk.phi)
        fb = flux_base(problem.coefficients[piece.sub], piece.x, state,
                       order=1)
        col = ColumnFields.from_block(piece.blk)
        J[gd.start + piece.local, cols] += (piece.sign * piece.scale_d
                                            * directional_flux(fb, col))

    bd = blocks.row_groups["boundary"]
    for piece in blocks.boundary:
        cols = blocks.col_slices[piece.sub]
        J[bd.start + piece.local, cols] = piece.scale * piece.blk.phi
    return J


def assemble_system(problem: InterfaceProblem, nets, colloc,
                    blocks: AssemblyBlocks | None = None, alpha=None,
                    with_jacobian: bool = True) -> ResidualSystem:
    if blocks is None:
        blocks = build_blocks(problem, nets, colloc)
    F = assemble_residual(problem, nets, colloc, blocks, alpha)
    J = (assemble_jacobian(problem, nets, colloc, blocks, alpha)
         if with_jacobian else None)
    return ResidualSystem(F=F, J=J, row_groups=dict(blocks.row_groups),
                          scaling=blocks.scaling.copy())


# ---------------------------------------------------------------------------
# perturbation (correction) system


@dataclasses.dataclass
class _PInteriorPiece:
    sub: int
    rows: Array
    ib: InteriorBase
    pblk: FeatureBlock
    scale: float


@dataclasses.dataclass
class _PFluxPiece:
    sign: float
    sub: int
    rows: Array
    fb: FluxBase
    pblk: FeatureBlock
    scale: float


@dataclasses.dataclass
class PerturbationState:
    """Frozen base state plus correction-net machinery on one point set.

    The base nets' fields are evaluated once at construction; the correction
    solve only re-evaluates terms that depend on the correction coefficients.
    ``j1`` is the gamma-independent part of the Jacobian; with
    ``second_order`` off the whole system is affine and one Gauss-Newton
    step is exact.
    """

    problem: InterfaceProblem
    colloc: geo.CollocationSet
    base_nets: tuple[RandomFeatureNet, ...]
    correction_nets: tuple[RandomFeatureNet, ...]
    epsilon: float
    second_order: bool
    row_groups: dict[str, slice]
    scaling: Array
    col_slices: tuple[slice, ...]
    n_rows: int
    n_cols: int
    r0: Array
    j1: Array
    interior: list[_PInteriorPiece]
    flux: list[_PFluxPiece]


def build_perturbation_state(problem: InterfaceProblem, base_nets,
                             correction_nets, colloc,
                             epsilon: float | None = None,
                             second_order: bool = True) -> PerturbationState:
    """Freeze the base state on ``colloc`` and prebuild correction blocks.

    ``epsilon`` defaults to the scaled norm of the base residual on this
    very point set, making eps*F_p(0) = F(u_N) exact rowwise.
    """
    base_blocks = build_blocks(problem, base_nets, colloc)
    n_subs = problem.n_subdomains
    if len(correction_nets) != n_subs:
        raise ConfigError(f"expected {n_subs} correction nets")
    want_dim = 3 if problem.geometry.has_time else 2
    for net in correction_nets:
        if net.dim != want_dim:
            raise ShapeError("correction nets have the wrong input dimension")

    row_groups, scaling = base_blocks.row_groups, base_blocks.scaling
    col_slices = []
    start = 0
    for net in correction_nets:
        col_slices.append(slice(start, start + net.m))
        start += net.m
    n_cols = start
    alpha = stack_alpha(base_nets)

    r0 = np.zeros(base_blocks.n_rows)
    j1 = np.zeros((base_blocks.n_rows, n_cols))
    interior: list[_PInteriorPiece] = []
    flux: list[_PFluxPiece] = []

    for piece in base_blocks.interior:
        cols = col_slices[piece.sub]
        state = eval_state(alpha[base_blocks.col_slices[piece.sub]], piece.blk)
        ib = interior_base(problem.coefficients[piece.sub],
                           problem.sources[piece.sub], piece.x, state,
                           problem.parabolic, order=2)
        pblk = features(correction_nets[piece.sub], piece.x,
                        need=_interior_needs(problem, piece.sub))
        r0[piece.rows] = piece.scale * ib.resid
        col = ColumnFields.from_block(pblk)
        j1[piece.rows, cols] = piece.scale * directional_interior(ib, col)
        interior.append(_PInteriorPiece(sub=piece.sub, rows=piece.rows,
                                        ib=ib, pblk=pblk, scale=piece.scale))

    gn, gd = row_groups["gamma_n"], row_groups["gamma_d"]
    for piece in base_blocks.interface:
        cols = col_slices[piece.sub]
        state = eval_state(alpha[base_blocks.col_slices[piece.sub]], piece.blk)
        fb = flux_base(problem.coefficients[piece.sub], piece.x, state,
                       order=1)
        gn_rows = gn.start + piece.local
        gd_rows = gd.start + piece.local
        r0[gn_rows] += piece.sign * piece.scale_n * state.u
        r0[gd_rows] += piece.sign * piece.scale_d * fb.base
        pblk = features(correction_nets[piece.sub], piece.x,
                        normals=colloc.interface_normals[piece.local],
                        need=("phi", "grad", "dn"))
        j1[gn_rows, cols] += piece.sign * piece.scale_n * pblk.phi
        col = ColumnFields.from_block(pblk)
        j1[gd_rows, cols] += (piece.sign * piece.scale_d
                              * directional_flux(fb, col))
        flux.append(_PFluxPiece(sign=piece.sign, sub=piece.sub, rows=gd_rows,
                                fb=fb, pblk=pblk, scale=piece.scale_d))
    r0[gn] -= scaling[gn] * base_blocks.w
    r0[gd] -= scaling[gd] * base_blocks.v

    bd = row_groups["boundary"]
    for piece in base_blocks.boundary:
        cols = col_slices[piece.sub]
        u = piece.blk.phi @ alpha[base_blocks.col_slices[piece.sub]]
        rows = bd.start + piece.local
        r0[rows] = piece.scale * u
        pblk = features(correction_nets[piece.sub],
                        colloc.boundary[piece.local], need=("phi",))
        j1[rows, cols] = piece.scale * pblk.phi
    r0[bd] -= scaling[bd] * base_blocks.g

    if epsilon is None:
        epsilon = float(np.linalg.norm(r0))
    if not np.isfinite(epsilon) or epsilon < 0:
        raise NumericalError("perturbation scale must be finite and >= 0")

    return PerturbationState(problem=problem, colloc=colloc,
                             base_nets=tuple(base_nets),
                             correction_nets=tuple(correction_nets),
                             epsilon=epsilon, second_order=second_order,
                             row_groups=dict(row_groups), scaling=scaling,
                             col_slices=tuple(col_slices),
                             n_rows=base_blocks.n_rows, n_cols=n_cols,
                             r0=r0, j1=j1, interior=interior, flux=flux)


def _check_gamma(pstate: PerturbationState, gamma) -> Array:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (pstate.n_cols,):
        raise ShapeError(f"gamma has shape {gamma.shape}, expected "
                         f"({pstate.n_cols},)")
    if pstate.epsilon <= 0.0:
        raise NumericalError("perturbation state has epsilon = 0; the base "
                             "residual already vanishes")
    return gamma


def assemble_perturbation_residual(pstate: PerturbationState, gamma) -> Array:
    """Correction residual (1/eps)[R0 + eps*L1 + eps^2 * Q/2] at ``gamma``."""
    gamma = _check_gamma(pstate, gamma)
    Fp = pstate.r0 / pstate.epsilon + pstate.j1 @ gamma
    if pstate.second_order and np.any(gamma):
        half_eps = 0.5 * pstate.epsilon
        for piece in pstate.interior:
            w = ColumnFields.from_state(
                eval_state(gamma[pstate.col_slices[piece.sub]], piece.pblk))
            Fp[piece.rows] += (piece.scale * half_eps
                               * bilinear_interior(piece.ib, w, w))
        for piece in pstate.flux:
            w = ColumnFields.from_state(
                eval_state(gamma[pstate.col_slices[piece.sub]], piece.pblk))
            Fp[piece.rows] += (piece.sign * piece.scale * half_eps
                               * bilinear_flux(piece.fb, w, w))
    return Fp


def assemble_perturbation_jacobian(pstate: PerturbationState, gamma,
                                   blocks=None) -> Array:
    """Jacobian of the correction residual: j1 plus the gamma-linear part."""
    gamma = _check_gamma(pstate, gamma)
    Jp = pstate.j1.copy()
    if pstate.second_order and np.any(gamma):
        eps = pstate.epsilon
        for piece in pstate.interior:
            cols = pstate.col_slices[piece.sub]
            w = ColumnFields.from_state(eval_state(gamma[cols], piece.pblk))
            col = ColumnFields.from_block(piece.pblk)
            Jp[piece.rows, cols] += (piece.scale * eps
                                     * bilinear_interior(piece.ib, w, col))
        for piece in pstate.flux:
            cols = pstate.col_slices[piece.sub]
            w = ColumnFields.from_state(eval_state(gamma[cols], piece.pblk))
            col = ColumnFields.from_block(piece.pblk)
            Jp[piece.rows, cols] += (piece.sign * piece.scale * eps
                                     * bilinear_flux(piece.fb, w, col))
    return Jp
