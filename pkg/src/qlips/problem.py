"""Interface-problem declarations with analytic partials.

A problem couples a geometry with per-subdomain diffusion coefficients and
sources, jump data on Gamma, Dirichlet boundary data, and (optionally) an
exact solution per subdomain from which sources and jump data are
manufactured.

Coefficients expose their partial derivatives as plain callables (a closure
record), vectorized over point sets.  A coefficient may depend on x, on u,
and on grad u; spatial dependence must be additively separable from the
state dependence (i.e. beta(x, u, p) = s(x) + h(u, p)), so that mixed
partials such as d(beta_u)/dx vanish.  Every builtin coefficient satisfies
this, and the finite-difference consistency suite exercises all of them.

Point arrays are (N, 2), or (N, 3) with time as the trailing column for
parabolic problems.
"""

from __future__ import annotations

import dataclasses
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from . import geometry as geo
from .errors import ConfigError, DomainError

Array = NDArray[np.float64]

EXAMPLE_IDS = ("ex1", "ex2", "ex3", "ex4", "ex5", "ex6")


# ---------------------------------------------------------------------------
# data records


@dataclasses.dataclass(frozen=True)
class Coefficient:
    """Diffusion coefficient beta(x, u, grad u) with analytic partials.

    Callables take (x, u, grad_u) and return (N,) arrays, except the
    gradient-slot partials: ``grad_x`` and ``d_p`` return (N, 2), ``d_pu``
    (N, 2), and ``d_pp`` (N, 2, 2).  ``None`` means identically zero.
    ``d_uuu`` backs the second-order expansion of the correction stage for
    coefficients whose d_uu still varies with u; it defaults to zero.
    """

    eval: Callable[[Array, Array, Array | None], Array]
    d_u: Callable | None = None
    d_uu: Callable | None = None
    d_uuu: Callable | None = None
    grad_x: Callable | None = None
    d_p: Callable | None = None
    d_pu: Callable | None = None
    d_pp: Callable | None = None
    name: str = "beta"

    @property
    def depends_on_u(self) -> bool:
        return self.d_u is not None

    @property
    def depends_on_grad(self) -> bool:
        return self.d_p is not None

    @property
    def depends_on_x(self) -> bool:
        return self.grad_x is not None

    @classmethod
    def constant(cls, value: float, name: str = "beta") -> "Coefficient":
        return cls(eval=lambda x, u, g: np.full(len(u), float(value)),
                   name=name)

    @classmethod
    def of_u(cls, f, d1, d2=None, d3=None, name: str = "beta") -> "Coefficient":
        """Coefficient depending on u only; each argument maps u -> array."""
        return cls(
            eval=lambda x, u, g: f(u),
            d_u=lambda x, u, g: d1(u),
            d_uu=None if d2 is None else (lambda x, u, g: d2(u)),
            d_uuu=None if d3 is None else (lambda x, u, g: d3(u)),
            name=name,
        )


@dataclasses.dataclass(frozen=True)
class Source:
    """Right-hand side f(x, u) with partials; manufactured sources ignore u."""

    eval: Callable[[Array, Array], Array]
    d_u: Callable | None = None
    d_uu: Callable | None = None

    @property
    def depends_on_u(self) -> bool:
        return self.d_u is not None


@dataclasses.dataclass(frozen=True)
class ExactSolution:
    """Analytic solution piece on one subdomain.

    ``hess`` returns (N, 3) columns (u_xx, u_xy, u_yy); it is required when
    any coefficient depends on grad u (the manufactured divergence then needs
    the full second-derivative tensor).  ``dt`` is required for parabolic
    problems.
    """

    u: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    lap: Callable[[Array], Array]
    hess: Callable[[Array], Array] | None = None
    dt: Callable[[Array], Array] | None = None


@dataclasses.dataclass(frozen=True)
class InterfaceProblem:
    """Geometry plus per-subdomain data; immutable after construction.

    ``coefficients``/``sources``/``exacts`` are indexed by subdomain (0 is
    Omega^+ and 1 is Omega^- for two-subdomain kinds; quadrants 0..3 for the
    axes cross).  ``jump_w``/``jump_v`` take (points, normals, plus_sub,
    minus_sub); ``boundary_g`` takes (points, sub).
    """

    geometry: geo.InterfaceGeometry
    coefficients: tuple[Coefficient, ...]
    sources: tuple[Source, ...]
    jump_w: Callable
    jump_v: Callable
    boundary_g: Callable
    parabolic: bool = False
    exacts: tuple[ExactSolution, ...] | None = None
    name: str = "problem"
    params: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self) -> None:
        n = self.geometry.n_subdomains
        if len(self.coefficients) != n or len(self.sources) != n:
            raise ConfigError(
                f"{self.name}: expected {n} coefficients/sources")
        if self.exacts is not None and len(self.exacts) != n:
            raise ConfigError(f"{self.name}: expected {n} exact pieces")
        if self.parabolic and not self.geometry.has_time:
            raise ConfigError("parabolic problem needs a time interval")

    @property
    def n_subdomains(self) -> int:
        return self.geometry.n_subdomains

    # two-sided accessors for the common case
    def _two_sided(self, items, label):
        if self.geometry.n_subdomains != 2:
            raise ConfigError(f"{label} is only defined for two subdomains")
        return items

    @property
    def beta_plus(self) -> Coefficient:
        return self._two_sided(self.coefficients, "beta_plus")[0]

    @property
    def beta_minus(self) -> Coefficient:
        return self._two_sided(self.coefficients, "beta_minus")[1]

    @property
    def f_plus(self) -> Source:
        return self._two_sided(self.sources, "f_plus")[0]

    @property
    def f_minus(self) -> Source:
        return self._two_sided(self.sources, "f_minus")[1]

    @property
    def depends_on_grad(self) -> bool:
        return any(c.depends_on_grad for c in self.coefficients)


# ---------------------------------------------------------------------------
# manufactured data


def _total_coefficient_gradient(coef: Coefficient, x: Array, u: Array,
                                g: Array, hess: Array | None) -> Array:
    """Spatial gradient of beta(x, u(x), grad u(x)) along an exact field."""
    n = len(u)
    out = np.zeros((n, 2))
    if coef.grad_x is not None:
        out += coef.grad_x(x, u, g)
    if coef.d_u is not None:
        out += coef.d_u(x, u, g)[:, None] * g
    if coef.d_p is not None:
        if hess is None:
            raise ConfigError(
                f"{coef.name}: gradient-dependent coefficient needs the "
                "exact Hessian")
        bp = coef.d_p(x, u, g)
        # (H bp)_l = sum_k H_lk bp_k with H columns (xx, xy, yy)
        out[:, 0] += hess[:, 0] * bp[:, 0] + hess[:, 1] * bp[:, 1]
        out[:, 1] += hess[:, 1] * bp[:, 0] + hess[:, 2] * bp[:, 1]
    return out


def _source_values(coef: Coefficient, exact: ExactSolution, parabolic: bool,
                   x: Array) -> Array:
    u = exact.u(x)
    g = exact.grad(x)
    lap = exact.lap(x)
    hess = exact.hess(x) if exact.hess is not None else None
    beta = coef.eval(x, u, g)
    grad_beta = _total_coefficient_gradient(coef, x, u, g, hess)
    div = beta * lap + np.einsum("nk,nk->n", grad_beta, g)
    if parabolic:
        if exact.dt is None:
            raise ConfigError("parabolic exact solution needs dt")
        return exact.dt(x) - div
    return -div


def make_manufactured_source(coef: Coefficient, exact: ExactSolution,
                             parabolic: bool) -> Source:
    """Source closure chosen so ``exact`` solves the PDE; a function of x only."""
    def f(x: Array, u: Array) -> Array:
        return _source_values(coef, exact, parabolic, x)
    return Source(eval=f)


def manufactured_source(problem: InterfaceProblem, side: int, x, t=None) -> Array:
    """Evaluate the manufactured source of subdomain ``side`` at ``x``.

    ``t``, when given, is appended as the trailing coordinate.
    """
    if problem.exacts is None:
        raise ConfigError(f"{problem.name}: no exact solution recorded")
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if t is not None:
        tt = np.broadcast_to(np.asarray(t, dtype=float), (len(pts),))
        pts = np.column_stack([pts, tt])
    return _source_values(problem.coefficients[side], problem.exacts[side],
                          problem.parabolic, pts)


def _jumps_from_exacts(coefficients, exacts):
    """(jump_w, jump_v) closures derived from exact per-side solutions."""
    def one_sided_value(pts, sub):
        out = np.empty(len(pts))
        for s in np.unique(sub):
            sel = sub == s
            out[sel] = exacts[s].u(pts[sel])
        return out

    def jump_w(points, normals, plus_sub, minus_sub):
        pts = np.atleast_2d(points)
        return one_sided_value(pts, plus_sub) - one_sided_value(pts, minus_sub)

    def one_sided_flux(pts, normals, sub):
        flux = np.empty(len(pts))
        for s in np.unique(sub):
            sel = sub == s
            x = pts[sel]
            u = exacts[s].u(x)
            g = exacts[s].grad(x)
            beta = coefficients[s].eval(x, u, g)
            flux[sel] = beta * np.einsum("nk,nk->n", g, normals[sel])
        return flux

    def jump_v(points, normals, plus_sub, minus_sub):
        pts = np.atleast_2d(points)
        nrm = np.atleast_2d(normals)
        return (one_sided_flux(pts, nrm, plus_sub)
                - one_sided_flux(pts, nrm, minus_sub))

    return jump_w, jump_v


def _zero_jump(points, normals, plus_sub, minus_sub):
    return np.zeros(len(np.atleast_2d(points)))


def jump_data_from_exact(problem: InterfaceProblem, x, t=None,
                         tol: float = 1e-10):
    """(w, v) on Gamma from the exact solution, using the stored normal
    convention (normals point from Omega^+ into Omega^-).

    Raises :class:`DomainError` when a point is off the interface.
    """
    if problem.exacts is None:
        raise ConfigError(f"{problem.name}: no exact solution recorded")
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if t is not None:
        tt = np.broadcast_to(np.asarray(t, dtype=float), (len(pts),))
        pts = np.column_stack([pts, tt])
    phi = geo.level_set(problem.geometry, pts)
    if np.any(np.abs(phi) > tol):
        raise DomainError("jump data requested off the interface")
    grad = geo.level_set_gradient(problem.geometry, pts)
    normals = -grad / np.linalg.norm(grad, axis=1, keepdims=True)
    plus_sub, minus_sub = geo._side_subdomains(problem.geometry, pts, normals)
    jw, jv = _jumps_from_exacts(problem.coefficients, problem.exacts)
    return (jw(pts, normals, plus_sub, minus_sub),
            jv(pts, normals, plus_sub, minus_sub))


def _boundary_from_exacts(exacts):
    def g(points, sub):
        pts = np.atleast_2d(points)
        out = np.empty(len(pts))
        for s in np.unique(sub):
            sel = sub == s
            out[sel] = exacts[s].u(pts[sel])
        return out
    return g


def check_ellipticity(problem: InterfaceProblem, n_probes: int = 1000,
                      seed: int = 0) -> dict[str, float]:
    """Sampled lower bound of each beta along the exact solution."""
    if problem.exacts is None:
        raise ConfigError("ellipticity check needs exact solutions")
    spec = geo.CollocationSpec(n_interior_plus=n_probes,
                               n_interior_minus=n_probes,
                               n_interface=1, n_boundary=1)
    colloc = geo.sample_collocation(problem.geometry, spec, seed)
    floors: dict[str, float] = {}
    names = problem.geometry.subdomain_names
    for pts, subs in ((colloc.interior_plus, colloc.interior_plus_sub),
                      (colloc.interior_minus, colloc.interior_minus_sub)):
        for s in np.unique(subs):
            sel = subs == s
            x = pts[sel]
            u = problem.exacts[s].u(x)
            g = problem.exacts[s].grad(x)
            beta = problem.coefficients[s].eval(x, u, g)
            key = names[s]
            floors[key] = min(floors.get(key, np.inf), float(beta.min()))
    return floors


# ---------------------------------------------------------------------------
# exact solution pieces shared by the builtin examples


def _exact_poly_xy() -> ExactSolution:
    """u = x^2 y^2."""
    return ExactSolution(
        u=lambda p: p[:, 0]**2 * p[:, 1]**2,
        grad=lambda p: np.column_stack([2.0 * p[:, 0] * p[:, 1]**2,
                                        2.0 * p[:, 0]**2 * p[:, 1]]),
        lap=lambda p: 2.0 * p[:, 1]**2 + 2.0 * p[:, 0]**2,
        hess=lambda p: np.column_stack([2.0 * p[:, 1]**2,
                                        4.0 * p[:, 0] * p[:, 1],
                                        2.0 * p[:, 0]**2]),
    )


def _exact_expx_poly() -> ExactSolution:
    """u = e^{-x} x^2 y^2."""
    def parts(p):
        x, y = p[:, 0], p[:, 1]
        return x, y, np.exp(-x)

    def u(p):
        x, y, e = parts(p)
        return e * x**2 * y**2

    def grad(p):
        x, y, e = parts(p)
        return np.column_stack([e * (2.0 * x - x**2) * y**2,
                                2.0 * e * x**2 * y])

    def hess(p):
        x, y, e = parts(p)
        return np.column_stack([e * (x**2 - 4.0 * x + 2.0) * y**2,
                                2.0 * e * (2.0 * x - x**2) * y,
                                2.0 * e * x**2])

    return ExactSolution(u=u, grad=grad,
                         lap=lambda p: hess(p)[:, 0] + hess(p)[:, 2],
                         hess=hess)


def _exact_expy_poly() -> ExactSolution:
    """u = e^{-y} x^2 y^2."""
    def u(p):
        x, y = p[:, 0], p[:, 1]
        return np.exp(-y) * x**2 * y**2

    def grad(p):
        x, y = p[:, 0], p[:, 1]
        e = np.exp(-y)
        return np.column_stack([2.0 * e * x * y**2,
                                e * (2.0 * y - y**2) * x**2])

    def hess(p):
        x, y = p[:, 0], p[:, 1]
        e = np.exp(-y)
        return np.column_stack([2.0 * e * y**2,
                                2.0 * e * x * (2.0 * y - y**2),
                                e * (y**2 - 4.0 * y + 2.0) * x**2])

    return ExactSolution(u=u, grad=grad,
                         lap=lambda p: hess(p)[:, 0] + hess(p)[:, 2],
                         hess=hess)


def _exact_expxy_poly() -> ExactSolution:
    """u = e^{-(x+y)} x^2 y^2."""
    def u(p):
        x, y = p[:, 0], p[:, 1]
        return np.exp(-x - y) * x**2 * y**2

    def grad(p):
        x, y = p[:, 0], p[:, 1]
        e = np.exp(-x - y)
        return np.column_stack([e * (2.0 * x - x**2) * y**2,
                                e * x**2 * (2.0 * y - y**2)])

    def hess(p):
        x, y = p[:, 0], p[:, 1]
        e = np.exp(-x - y)
        return np.column_stack([e * (x**2 - 4.0 * x + 2.0) * y**2,
                                e * (2.0 * x - x**2) * (2.0 * y - y**2),
                                e * x**2 * (y**2 - 4.0 * y + 2.0)])

    return ExactSolution(u=u, grad=grad,
                         lap=lambda p: hess(p)[:, 0] + hess(p)[:, 2],
                         hess=hess)


def _exact_sin_sin(scale: float = 1.0, offset: float = 0.0) -> ExactSolution:
    """u = scale*sin(pi x)sin(pi y) + offset."""
    pi = np.pi

    def u(p):
        return scale * np.sin(pi * p[:, 0]) * np.sin(pi * p[:, 1]) + offset

    def grad(p):
        sx, cx = np.sin(pi * p[:, 0]), np.cos(pi * p[:, 0])
        sy, cy = np.sin(pi * p[:, 1]), np.cos(pi * p[:, 1])
        return scale * pi * np.column_stack([cx * sy, sx * cy])

    def lap(p):
        return -2.0 * pi**2 * scale * np.sin(pi * p[:, 0]) * np.sin(pi * p[:, 1])

    def hess(p):
        sx, cx = np.sin(pi * p[:, 0]), np.cos(pi * p[:, 0])
        sy, cy = np.sin(pi * p[:, 1]), np.cos(pi * p[:, 1])
        ss = sx * sy
        return scale * pi**2 * np.column_stack([-ss, cx * cy, -ss])

    return ExactSolution(u=u, grad=grad, lap=lap, hess=hess)


def _exact_cubic(scale: float = 1.0) -> ExactSolution:
    """u = scale*(x^3 + y^3)."""
    return ExactSolution(
        u=lambda p: scale * (p[:, 0]**3 + p[:, 1]**3),
        grad=lambda p: scale * np.column_stack([3.0 * p[:, 0]**2,
                                                3.0 * p[:, 1]**2]),
        lap=lambda p: scale * 6.0 * (p[:, 0] + p[:, 1]),
        hess=lambda p: scale * np.column_stack([6.0 * p[:, 0],
                                                np.zeros(len(p)),
                                                6.0 * p[:, 1]]),
    )


def _exact_heat_plus() -> ExactSolution:
    """u = e^{-t} sin(pi x) sin(pi y) on space-time points."""
    pi = np.pi

    def u(p):
        return np.exp(-p[:, 2]) * np.sin(pi * p[:, 0]) * np.sin(pi * p[:, 1])

    def grad(p):
        e = np.exp(-p[:, 2])
        sx, cx = np.sin(pi * p[:, 0]), np.cos(pi * p[:, 0])
        sy, cy = np.sin(pi * p[:, 1]), np.cos(pi * p[:, 1])
        return e[:, None] * pi * np.column_stack([cx * sy, sx * cy])

    def hess(p):
        e = np.exp(-p[:, 2])
        sx, cx = np.sin(pi * p[:, 0]), np.cos(pi * p[:, 0])
        sy, cy = np.sin(pi * p[:, 1]), np.cos(pi * p[:, 1])
        return e[:, None] * pi**2 * np.column_stack([-sx * sy, cx * cy,
                                                     -sx * sy])

    return ExactSolution(u=u, grad=grad,
                         lap=lambda p: -2.0 * pi**2 * u(p),
                         hess=hess,
                         dt=lambda p: -u(p))


def _exact_heat_minus() -> ExactSolution:
    """u = t (x^2 + y^2) on space-time points."""
    return ExactSolution(
        u=lambda p: p[:, 2] * (p[:, 0]**2 + p[:, 1]**2),
        grad=lambda p: np.column_stack([2.0 * p[:, 2] * p[:, 0],
                                        2.0 * p[:, 2] * p[:, 1]]),
        lap=lambda p: 4.0 * p[:, 2],
        hess=lambda p: np.column_stack([2.0 * p[:, 2],
                                        np.zeros(len(p)),
                                        2.0 * p[:, 2]]),
        dt=lambda p: p[:, 0]**2 + p[:, 1]**2,
    )


def _exact_dome() -> ExactSolution:
    """u = 0.25 - (x^2 + y^2)."""
    return ExactSolution(
        u=lambda p: 0.25 - p[:, 0]**2 - p[:, 1]**2,
        grad=lambda p: np.column_stack([-2.0 * p[:, 0], -2.0 * p[:, 1]]),
        lap=lambda p: np.full(len(p), -4.0),
        hess=lambda p: np.column_stack([np.full(len(p), -2.0),
                                        np.zeros(len(p)),
                                        np.full(len(p), -2.0)]),
    )


# ---------------------------------------------------------------------------
# builtin coefficient recipes


def _beta_one_plus_u() -> Coefficient:
    return Coefficient.of_u(lambda u: 1.0 + u,
                            lambda u: np.ones_like(u),
                            name="1+u")


def _beta_quadratic(c: float, name: str) -> Coefficient:
    """beta = 1 + c u^2."""
    return Coefficient.of_u(lambda u: 1.0 + c * u**2,
                            lambda u: 2.0 * c * u,
                            lambda u: np.full_like(u, 2.0 * c),
                            name=name)


def _beta_cubic(c: float, name: str) -> Coefficient:
    """beta = 1 + c u^3."""
    return Coefficient.of_u(lambda u: 1.0 + c * u**3,
                            lambda u: 3.0 * c * u**2,
                            lambda u: 6.0 * c * u,
                            lambda u: np.full_like(u, 6.0 * c),
                            name=name)


def _beta_radial_exp() -> Coefficient:
    """beta = x^2 + y^2 + e^{u/2}; separable spatial part."""
    return Coefficient(
        eval=lambda x, u, g: x[:, 0]**2 + x[:, 1]**2 + np.exp(0.5 * u),
        d_u=lambda x, u, g: 0.5 * np.exp(0.5 * u),
        d_uu=lambda x, u, g: 0.25 * np.exp(0.5 * u),
        d_uuu=lambda x, u, g: 0.125 * np.exp(0.5 * u),
        grad_x=lambda x, u, g: 2.0 * x[:, :2],
        name="x^2+y^2+e^{u/2}",
    )


def _beta_one_plus_sin() -> Coefficient:
    return Coefficient.of_u(lambda u: 1.0 + np.sin(u), np.cos,
                            lambda u: -np.sin(u),
                            lambda u: -np.cos(u),
                            name="1+sin(u)")


def _beta_exp_plus_one() -> Coefficient:
    return Coefficient.of_u(lambda u: np.exp(u) + 1.0, np.exp, np.exp, np.exp,
                            name="e^u+1")


def _beta_grad_square() -> Coefficient:
    """beta = 1 + |grad u|^2."""
    def d_pp(x, u, g):
        out = np.zeros((len(u), 2, 2))
        out[:, 0, 0] = 2.0
        out[:, 1, 1] = 2.0
        return out

    return Coefficient(
        eval=lambda x, u, g: 1.0 + g[:, 0]**2 + g[:, 1]**2,
        d_p=lambda x, u, g: 2.0 * g,
        d_pp=d_pp,
        name="1+|grad u|^2",
    )


# ---------------------------------------------------------------------------
# builtin examples


def manufactured_problem(name, geometry, coefficients, exacts,
                         parabolic=False, homogeneous_jumps=False,
                         params=None) -> InterfaceProblem:
    """Problem with sources, jumps and boundary data derived from exacts.

    The interface data of a homogeneous-jump problem is hardwired to
    zero instead of being computed as a difference of equal one-sided
    traces.
    """
    sources = tuple(make_manufactured_source(c, e, parabolic)
                    for c, e in zip(coefficients, exacts))
    if homogeneous_jumps:
        jump_w = jump_v = _zero_jump
    else:
        jump_w, jump_v = _jumps_from_exacts(coefficients, exacts)
    return InterfaceProblem(
        geometry=geometry,
        coefficients=tuple(coefficients),
        sources=sources,
        jump_w=jump_w,
        jump_v=jump_v,
        boundary_g=_boundary_from_exacts(exacts),
        parabolic=parabolic,
        exacts=tuple(exacts),
        name=name,
        params=params or {},
    )


def _ex1() -> InterfaceProblem:
    """Two materials split by a vertical line; homogeneous jumps."""
    geometry = geo.InterfaceGeometry.vertical_line(0.0, (-1.0, 1.0, 0.0, 1.0))
    return manufactured_problem(
        "ex1", geometry,
        coefficients=(_beta_quadratic(0.5, "1+u^2/2"), _beta_one_plus_u()),
        exacts=(_exact_expx_poly(), _exact_poly_xy()),
        homogeneous_jumps=True,
    )


def _ex2() -> InterfaceProblem:
    """Four quadrant materials meeting at the coordinate axes."""
    geometry = geo.InterfaceGeometry.axes_cross((-1.0, 1.0, -1.0, 1.0))
    return manufactured_problem(
        "ex2", geometry,
        coefficients=(_beta_one_plus_u(),
                      _beta_quadratic(0.5, "1+u^2/2"),
                      _beta_quadratic(0.25, "1+u^2/4"),
                      _beta_cubic(0.1, "1+u^3/10")),
        exacts=(_exact_poly_xy(), _exact_expx_poly(),
                _exact_expy_poly(), _exact_expxy_poly()),
        homogeneous_jumps=True,
    )


def _ex3(petals: int = 5) -> InterfaceProblem:
    """Plum-blossom interface with highly nonlinear coefficients."""
    geometry = geo.InterfaceGeometry.plum_blossom(0.5, 0.1, petals,
                                                  (-1.0, 1.0, -1.0, 1.0))
    return manufactured_problem(
        "ex3", geometry,
        coefficients=(_beta_radial_exp(), _beta_one_plus_sin()),
        exacts=(_exact_cubic(), _exact_sin_sin()),
        params={"petals": petals},
    )


def _ex4(contrast: float = 1e8) -> InterfaceProblem:
    """High-contrast circle: huge constant beta outside, cubic law inside."""
    if contrast <= 0.0:
        raise ConfigError("contrast must be positive")
    geometry = geo.InterfaceGeometry.circle((0.0, 0.0), 0.5,
                                            (-1.0, 1.0, -1.0, 1.0))
    return manufactured_problem(
        "ex4", geometry,
        coefficients=(Coefficient.constant(contrast, name="contrast"),
                      _beta_cubic(1.0, "1+u^3")),
        exacts=(_exact_cubic(1.0 / contrast), _exact_sin_sin()),
        params={"contrast": contrast},
    )


def _ex5(time_horizon: float = 0.2) -> InterfaceProblem:
    """Parabolic problem with an expanding circular interface."""
    if time_horizon <= 0.0:
        raise ConfigError("time horizon must be positive")
    geometry = geo.InterfaceGeometry.moving_circle(
        0.5, 0.5, (-1.0, 1.0, -1.0, 1.0), (0.0, time_horizon))
    return manufactured_problem(
        "ex5", geometry,
        coefficients=(_beta_quadratic(1.0, "1+u^2"), _beta_exp_plus_one()),
        exacts=(_exact_heat_plus(), _exact_heat_minus()),
        parabolic=True,
        params={"time_horizon": time_horizon},
    )


def _ex6() -> InterfaceProblem:
    """Gradient-dependent diffusion outside, solution-dependent inside."""
    geometry = geo.InterfaceGeometry.circle((0.0, 0.0), 0.5,
                                            (-1.0, 1.0, -1.0, 1.0))
    return manufactured_problem(
        "ex6", geometry,
        coefficients=(_beta_grad_square(), _beta_quadratic(1.0, "1+u^2")),
        exacts=(_exact_sin_sin(0.5, 0.25), _exact_dome()),
    )


def builtin_example(example_id: str, *, contrast: float | None = None,
                    petals: int | None = None,
                    time_horizon: float | None = None) -> InterfaceProblem:
    """Construct one of the six builtin problems by id.

    ``contrast`` applies to ex4, ``petals`` to ex3, ``time_horizon`` to ex5;
    passing a parameter to an example that does not take it is a
    configuration error.
    """
    if example_id not in EXAMPLE_IDS:
        raise ConfigError(f"unknown example id {example_id!r}")
    if contrast is not None and example_id != "ex4":
        raise ConfigError("contrast only applies to ex4")
    if petals is not None and example_id != "ex3":
        raise ConfigError("petals only applies to ex3")
    if time_horizon is not None and example_id != "ex5":
        raise ConfigError("time_horizon only applies to ex5")
    if example_id == "ex1":
        return _ex1()
    if example_id == "ex2":
        return _ex2()
    if example_id == "ex3":
        return _ex3(petals=5 if petals is None else int(petals))
    if example_id == "ex4":
        return _ex4(contrast=1e8 if contrast is None else float(contrast))
    if example_id == "ex5":
        return _ex5(0.2 if time_horizon is None else float(time_horizon))
    return _ex6()
