"""Error measures on uniform test grids, interface traces, and per-group
residual diagnostics."""

from __future__ import annotations

import dataclasses

import numpy as np

from . import geometry as _geo
from .errors import ConfigError, NumericalError
from .geometry import GROUPS, InterfaceGeometry, level_set, subdomain_index

Array = np.ndarray

# default uniform test-set resolutions; the reference results never state
# theirs, so these are documented package defaults
GRID_2D = (201, 201)
GRID_SPACETIME = (101, 101, 11)

# points closer to Gamma than this are dropped: side classification at
# rounding distance is arbitrary and the one-sided fields jump there
GAMMA_EXCLUSION_BAND = 1e-10


@dataclasses.dataclass(frozen=True)
class TestGrid:
    """Uniform evaluation set with per-point subdomain ownership."""

    points: Array
    sub: Array
    resolution: tuple
    exclusion_band: float

    @property
    def n_points(self) -> int:
        return len(self.points)


def uniform_grid(geom: InterfaceGeometry, resolution: tuple | None = None,
                 exclusion_band: float = GAMMA_EXCLUSION_BAND) -> TestGrid:
    """Tensor grid over the bounding box, minus a band around Gamma.

    ``resolution`` is (nx, ny) or (nx, ny, nt); defaults are GRID_2D and
    GRID_SPACETIME.  Space-time grids span the full time interval including
    both ends.
    """
    if resolution is None:
        resolution = GRID_SPACETIME if geom.has_time else GRID_2D
    want = 3 if geom.has_time else 2
    if len(resolution) != want:
        raise ConfigError(f"resolution {resolution} does not match a "
                          f"{want}-coordinate geometry")
    if any(int(r) < 2 for r in resolution):
        raise ConfigError("grid needs at least 2 points per axis")
    if exclusion_band < 0:
        raise ConfigError("exclusion band must be >= 0")

    xmin, xmax, ymin, ymax = geom.bounding_box
    xs = np.linspace(xmin, xmax, int(resolution[0]))
    ys = np.linspace(ymin, ymax, int(resolution[1]))
    if geom.has_time:
        t0, t1 = geom.time_interval
        ts = np.linspace(t0, t1, int(resolution[2]))
        X, Y, T = np.meshgrid(xs, ys, ts, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel(), T.ravel()])
    else:
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])

    keep = np.abs(level_set(geom, pts)) > exclusion_band
    pts = pts[keep]
    return TestGrid(points=pts, sub=subdomain_index(geom, pts),
                    resolution=tuple(int(r) for r in resolution),
                    exclusion_band=exclusion_band)


@dataclasses.dataclass
class ErrorReport:
    """Relative errors on a test grid, globally and per subdomain.

    ``residual_norms`` and ``trace`` stay None unless the caller attaches
    diagnostics from :func:`residual_diagnostics` / :func:`interface_trace`.
    """

    relative_l2: float
    relative_linf: float
    l2_by_sub: tuple
    linf_by_sub: tuple
    resolution: tuple
    exclusion_band: float
    n_points: int
    residual_norms: dict | None = None
    trace: dict | None = None


def abs_error_field(evaluate, exacts, grid: TestGrid) -> Array:
    """|u_h - u_g| at every grid point, sides evaluated one-sidedly.

    ``evaluate(points, sub)`` is the numerical field; ``exacts[sub].u`` the
    reference.
    """
    out = np.empty(grid.n_points)
    for s in np.unique(grid.sub):
        sel = grid.sub == s
        out[sel] = np.abs(np.asarray(evaluate(grid.points[sel], int(s)))
                          - exacts[s].u(grid.points[sel]))
    return out


def relative_errors(evaluate, exacts, grid: TestGrid) -> ErrorReport:
    """Relative L2 and Linf errors of ``evaluate`` against ``exacts``.

    L2 divides the error norm by the norm of the exact values over the same
    points; Linf divides the max error by the max exact magnitude.  A
    subdomain whose exact solution vanishes on the whole grid cannot be
    normalized and raises.
    """
    subs = sorted(int(s) for s in np.unique(grid.sub))
    diff_sq, exact_sq = [], []
    diff_max, exact_max = [], []
    l2_by_sub, linf_by_sub = [], []
    for s in subs:
        sel = grid.sub == s
        ug = np.asarray(exacts[s].u(grid.points[sel]), dtype=float)
        d = np.asarray(evaluate(grid.points[sel], s), dtype=float) - ug
        nug = float(np.dot(ug, ug))
        mug = float(np.max(np.abs(ug))) if len(ug) else 0.0
        if nug == 0.0:
            raise NumericalError(
                f"exact solution vanishes on subdomain {s}: relative "
                "errors are not defined there")
        diff_sq.append(float(np.dot(d, d)))
        exact_sq.append(nug)
        diff_max.append(float(np.max(np.abs(d))))
        exact_max.append(mug)
        l2_by_sub.append(np.sqrt(diff_sq[-1] / nug))
        linf_by_sub.append(diff_max[-1] / mug)
    return ErrorReport(
        relative_l2=float(np.sqrt(sum(diff_sq) / sum(exact_sq))),
        relative_linf=max(diff_max) / max(exact_max),
        l2_by_sub=tuple(l2_by_sub), linf_by_sub=tuple(linf_by_sub),
        resolution=grid.resolution, exclusion_band=grid.exclusion_band,
        n_points=grid.n_points)


def interface_trace(solution, exacts, geom: InterfaceGeometry,
                    n_samples: int = 400, time: float | None = None) -> dict:
    """Error of the base field and the correction along Gamma, plus side.

    Samples the interface uniformly in its curve parameter (angle for the
    circular kinds, arclength fraction otherwise).  For a moving interface
    the trace is taken on one fixed time slice, the final time unless
    ``time`` is given.  Returns arrays keyed ``param, x, y, base_error,
    correction``; ``base_error`` is u_N - u_g on the plus side and
    ``correction`` is the scaled correction field eps * u_p there.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    closed = geom.kind in ("circle", "plum_blossom", "moving_circle")
    if closed:
        params = np.linspace(0.0, 2.0 * np.pi, n_samples, endpoint=False)
    elif geom.kind == "vertical_line":
        params = np.linspace(0.0, 1.0, n_samples)
    else:  # axes_cross: param 1 aliases param 0 on the next arm
        params = np.linspace(0.0, 1.0, n_samples, endpoint=False)

    tt = None
    if geom.has_time:
        tt = float(geom.time_interval[1] if time is None else time)
        pts, normals = _geo.interface_point_and_normal(
            geom, params, t=np.full(n_samples, tt))
    else:
        pts, normals = _geo.interface_point_and_normal(geom, params)
    plus_sub, _ = _geo._side_subdomains(geom, pts, normals)

    base_error = np.empty(n_samples)
    correction = np.empty(n_samples)
    for s in np.unique(plus_sub):
        sel = plus_sub == s
        base_error[sel] = (solution.evaluate_base(pts[sel], int(s))
                           - exacts[s].u(pts[sel]))
        correction[sel] = solution.evaluate_correction(pts[sel], int(s))
    out = {"param": params, "x": pts[:, 0], "y": pts[:, 1],
           "base_error": base_error, "correction": correction}
    if tt is not None:
        out["t"] = np.full(n_samples, tt)
    return out


def residual_diagnostics(system) -> dict:
    """Discrete residual norms per row group, scaled and unscaled.

    ``system`` needs ``F``, ``row_groups`` and ``scaling`` attributes (a
    ResidualSystem fits).  The scaled norms recombine exactly: the sum of
    their squares is ||F||^2.
    """
    F, scaling = system.F, system.scaling
    out = {}
    for name in GROUPS:
        rows = system.row_groups[name]
        chunk = F[rows]
        out[name] = {
            "n_rows": int(rows.stop - rows.start),
            "scaled": float(np.linalg.norm(chunk)),
            "unscaled": float(np.linalg.norm(chunk / scaling[rows])),
        }
    out["total"] = {"n_rows": len(F), "scaled": float(np.linalg.norm(F)),
                    "unscaled": float("nan")}
    return out
