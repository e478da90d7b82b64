"""Regularized Gauss-Newton driver.

The update direction is the minimum-norm least-squares step computed from a
truncated SVD of the residual Jacobian: singular values below a relative
threshold of the largest one are dropped before inverting.  The iteration
stops when the relative change of the residual norm falls under a tolerance,
declares divergence when the norm climbs an order of magnitude above its
running minimum, and halves the step when a candidate produces non-finite
residuals.  An optional backtracking mode extends the halving to any
candidate that grows the residual, which keeps the history monotone on
problems whose full update overshoots.
"""

from __future__ import annotations

import dataclasses
import math
import time
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericalError, ShapeError

Array = np.ndarray

# guards the relative-change denominator when the residual hits zero
_NORM_FLOOR = 1e-30

# a candidate step producing non-finite residuals is halved at most this
# many times before the solve is abandoned
_MAX_HALVINGS = 20

# residual norm above this multiple of its running minimum means the
# iteration is running away
_DIVERGENCE_FACTOR = 10.0


@dataclasses.dataclass(frozen=True)
class SolverOptions:
    """Knobs for the Gauss-Newton iteration."""

    max_iters: int = 100
    svd_threshold: float = 1e-12  # relative to the largest singular value
    stop_tol: float = 1e-8        # relative residual-norm change
    damping: float = 1.0          # step fraction in (0, 1]
    backtrack: bool = False       # halve steps that grow the residual

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.svd_threshold < 0:
            raise ConfigError("svd_threshold must be >= 0, got "
                              f"{self.svd_threshold}")
        if self.stop_tol <= 0:
            raise ConfigError(f"stop_tol must be > 0, got {self.stop_tol}")
        if not 0 < self.damping <= 1:
            raise ConfigError("damping must lie in (0, 1], got "
                              f"{self.damping}")


@dataclasses.dataclass
class SolveReport:
    """Everything observed during one Gauss-Newton run.

    ``residual_norms`` has ``iterations + 1`` entries (the pre-iteration
    norm first); ``rel_changes`` and ``ranks`` have one entry per accepted
    iteration.  ``status`` is ``"converged"``, ``"max_iters"`` or
    ``"diverged"`` (orchestration layers may also hand out ``"skipped"``
    reports for solves they never started).  ``info`` is free-form space
    for callers to echo seeds and configuration into serialized output.
    """

    status: str
    alpha: Array
    iterations: int
    residual_norms: Array
    rel_changes: Array
    ranks: list
    wall_time: float
    options: SolverOptions
    error_history: list | None = None
    info: dict = dataclasses.field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final_residual_norm(self) -> float:
        return float(self.residual_norms[-1])


def truncated_pinv_solve(J: Array, F: Array, threshold: float = 1e-12,
                         overwrite_j: bool = False):
    """Minimum-norm solution of ``J d = -F`` with small singular values cut.

    ``threshold`` is relative: directions with singular value below
    ``threshold * sigma_max`` are excluded from the inverse.  Returns the
    step and the retained rank.
    """
    J = np.asarray(J, dtype=float)
    F = np.asarray(F, dtype=float)
    if J.ndim != 2 or F.ndim != 1 or J.shape[0] != F.shape[0]:
        raise ShapeError(f"incompatible shapes J {J.shape}, F {F.shape}")
    if not (np.all(np.isfinite(J)) and np.all(np.isfinite(F))):
        raise NumericalError("non-finite entries in the linearized system")
    try:
        U, s, Vt = scipy.linalg.svd(J, full_matrices=False,
                                    overwrite_a=overwrite_j,
                                    check_finite=False)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise NumericalError(f"SVD failed to converge: {exc}") from exc
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(J.shape[1]), 0
    keep = s >= threshold * s[0]
    rank = int(np.count_nonzero(keep))
    coeff = (U[:, keep].T @ F) / s[keep]
    delta = -(Vt[keep].T @ coeff)
    return delta, rank


def gauss_newton(builder: Callable[[Array], tuple[Array, Array]],
                 alpha0: Array, options: SolverOptions | None = None,
                 error_metric: Callable[[Array], float] | None = None
                 ) -> SolveReport:
    """Drive ``alpha <- alpha + damping * delta`` to a stationary residual.

    ``builder(alpha)`` must return the stacked residual and its Jacobian at
    ``alpha``; the Jacobian must be freshly allocated because the SVD step
    consumes it in place.  ``error_metric``, when given, is evaluated at
    every accepted iterate (including the start) and recorded in the report.

    Two stopping rules report "converged": the per-step relative norm
    change dropping to ``stop_tol``, and a stall, meaning two consecutive
    iterations that fail to improve the best norm by a ``stop_tol``
    relative margin while staying within a narrow band of it.  The stall
    rule cuts off the oscillation of minimum-norm steps inside the
    truncated null space once the residual has bottomed out; genuine
    growth escapes the band and is handled by the divergence rule.
    ``report.info["stopped_on"]`` names the rule that fired.

    With ``options.backtrack`` the step halving applies not only to
    non-finite candidates but to any candidate whose norm exceeds the
    current one, so accepted norms never increase.  A step that cannot
    shrink the norm at its smallest size is still accepted; the stall
    rule then ends the run at the plateau.  Off by default: the plain
    update is the reference scheme and its transient overshoots are
    sometimes informative.
    """
    opts = options or SolverOptions()
    t0 = time.perf_counter()
    alpha = np.array(alpha0, dtype=float).copy()

    F, J = builder(alpha)
    if not np.all(np.isfinite(F)):
        raise NumericalError("residual is non-finite at the initial guess")
    norms = [float(np.linalg.norm(F))]
    rel_changes: list[float] = []
    ranks: list[int] = []
    errors = None if error_metric is None else [error_metric(alpha)]

    status = "max_iters"
    stopped_on = None
    iterations = 0
    best = norms[0]
    stall_band = max(math.sqrt(opts.stop_tol), 10.0 * opts.stop_tol)
    stalled = 0
    for _ in range(opts.max_iters):
        delta, rank = truncated_pinv_solve(J, F, opts.svd_threshold,
                                           overwrite_j=True)
        step = opts.damping
        for _ in range(_MAX_HALVINGS + 1):
            candidate = alpha + step * delta
            with np.errstate(all="ignore"):
                F_new, J_new = builder(candidate)
            if np.all(np.isfinite(F_new)):
                new_norm = float(np.linalg.norm(F_new))
                if not opts.backtrack or new_norm <= norms[-1]:
                    break
            step *= 0.5
        if not np.all(np.isfinite(F_new)):
            raise NumericalError(
                "residual stayed non-finite after "
                f"{_MAX_HALVINGS} step halvings at iteration "
                f"{iterations + 1}")
        # a backtracked step that never shrank the norm is accepted at its
        # smallest size; the stall and divergence rules judge the outcome
        rel = abs(new_norm - norms[-1]) / max(new_norm, _NORM_FLOOR)
        alpha, F, J = candidate, F_new, J_new
        norms.append(new_norm)
        rel_changes.append(rel)
        ranks.append(rank)
        if errors is not None:
            errors.append(error_metric(alpha))
        iterations += 1

        if new_norm > _DIVERGENCE_FACTOR * min(norms):
            status = "diverged"
            break
        if rel <= opts.stop_tol:
            status = "converged"
            stopped_on = "rel_change"
            break
        if new_norm < best * (1.0 - opts.stop_tol):
            stalled = 0
        elif new_norm <= best * (1.0 + stall_band):
            stalled += 1
        best = min(best, new_norm)
        if stalled >= 2:
            status = "converged"
            stopped_on = "stall"
            break

    return SolveReport(status=status, alpha=alpha, iterations=iterations,
                       residual_norms=np.array(norms),
                       rel_changes=np.array(rel_changes), ranks=ranks,
                       wall_time=time.perf_counter() - t0, options=opts,
                       error_history=errors, info={"stopped_on": stopped_on})
