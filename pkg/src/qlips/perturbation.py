"""Correction step around a frozen initialization.

The base residual norm becomes the perturbation scale eps; fresh
sin-activation nets carry the correction; the correction system is solved
by the same Gauss-Newton driver (one step when the second-order terms are
dropped); the final solution composes as u = u_N + eps * u_p per side with
no re-fit.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import assembly, solver
from .basis import CompositeNet, RandomFeatureNet, eval_state, features, init_net
from .errors import ConfigError, NumericalError
from .problem import InterfaceProblem

Array = np.ndarray

# corrections below this base-residual norm would only amplify roundoff
EPSILON_FLOOR = 1e-14


def epsilon_from_residual(F: Array) -> float | None:
    """Perturbation scale from the stacked base residual.

    Returns None (the skip signal) when the norm sits under the floor:
    the base solve already hit numerical exactness.
    """
    F = np.asarray(F, dtype=float)
    if not np.all(np.isfinite(F)):
        raise NumericalError("base residual contains non-finite entries")
    eps = float(np.linalg.norm(F))
    return None if eps < EPSILON_FLOOR else eps


@dataclasses.dataclass(frozen=True)
class CorrectionSpec:
    """Shape of the correction nets and of the correction solve."""

    m_p: int
    activation: str = "sin"
    weight_range: tuple[float, float] = (-2 * math.pi, 2 * math.pi)
    bias_range: tuple[float, float] = (-math.pi, math.pi)
    seed: int = 0
    keep_second_order: bool = True
    rounds: int = 1  # > 1 repeats the correction around the composite (experimental)

    def __post_init__(self):
        if self.m_p < 1:
            raise ConfigError(f"m_p must be >= 1, got {self.m_p}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")


@dataclasses.dataclass
class CorrectedSolution:
    """Composed solution u = u_N + eps * u_p, side by side.

    ``epsilon == 0.0`` marks a skipped correction: the correction nets carry
    zero coefficients and evaluation reduces to the base solution.
    """

    base_nets: tuple
    correction_nets: tuple[RandomFeatureNet, ...]
    epsilon: float

    @property
    def skipped(self) -> bool:
        return self.epsilon == 0.0

    def side_net(self, sub: int) -> CompositeNet:
        """The composed field of one subdomain as a single frozen net."""
        return CompositeNet(parts=((self.base_nets[sub], 1.0),
                                   (self.correction_nets[sub], self.epsilon)))

    def evaluate(self, points, sub: int) -> Array:
        """u_N(x) + eps * u_p(x) on the given subdomain."""
        base = eval_state(self.base_nets[sub],
                          features(self.base_nets[sub], points,
                                   need=("phi",))).u
        corr = eval_state(self.correction_nets[sub],
                          features(self.correction_nets[sub], points,
                                   need=("phi",))).u
        return base + self.epsilon * corr

    def evaluate_base(self, points, sub: int) -> Array:
        return eval_state(self.base_nets[sub],
                          features(self.base_nets[sub], points,
                                   need=("phi",))).u

    def evaluate_correction(self, points, sub: int) -> Array:
        """The scaled correction field eps * u_p alone."""
        corr = eval_state(self.correction_nets[sub],
                          features(self.correction_nets[sub], points,
                                   need=("phi",))).u
        return self.epsilon * corr


def correction_nets_for(problem: InterfaceProblem,
                        spec: CorrectionSpec) -> tuple:
    """One fresh net per subdomain, seeds split from ``spec.seed``."""
    dim = 3 if problem.geometry.has_time else 2
    children = np.random.SeedSequence(spec.seed).spawn(problem.n_subdomains)
    return tuple(init_net(m=spec.m_p, dim=dim, activation=spec.activation,
                          weight_range=spec.weight_range,
                          bias_range=spec.bias_range,
                          seed=int(c.generate_state(1)[0]))
                 for c in children)


def _zero_correction(problem, base_nets, spec, options,
                     base_norm) -> tuple[CorrectedSolution,
                                         solver.SolveReport]:
    nets = correction_nets_for(problem, spec)
    report = solver.SolveReport(
        status="skipped", alpha=np.zeros(sum(n.m for n in nets)),
        iterations=0, residual_norms=np.array([base_norm]),
        rel_changes=np.array([]), ranks=[], wall_time=0.0,
        options=options or solver.SolverOptions(),
        info={"epsilon": 0.0})
    return CorrectedSolution(base_nets=tuple(base_nets),
                             correction_nets=nets, epsilon=0.0), report


def correct(problem: InterfaceProblem, base_nets, colloc,
            spec: CorrectionSpec,
            options: solver.SolverOptions | None = None,
            error_metric=None) -> tuple[CorrectedSolution,
                                        solver.SolveReport]:
    """Solve the correction subproblem around the frozen base solution.

    Returns the composed solution and the report of the (last) correction
    solve.  When the base residual is already below EPSILON_FLOOR the
    correction is skipped: the returned solution has ``epsilon = 0`` and a
    report with status "skipped".

    With ``spec.rounds > 1`` each round freezes the previous composition as
    the new base (experimental; the reports of earlier rounds appear under
    ``info["previous_rounds"]``).
    """
    opts = options or solver.SolverOptions()
    current_base = tuple(base_nets)
    previous: list[dict] = []
    result = None

    for round_index in range(spec.rounds):
        F = assembly.assemble_residual(problem, current_base, colloc)
        eps = epsilon_from_residual(F)
        if eps is None:
            if result is not None:
                break  # earlier rounds already produced a composition
            return _zero_correction(problem, current_base, spec, opts,
                                    float(np.linalg.norm(F)))

        pnets = correction_nets_for(
            problem,
            spec if round_index == 0
            else dataclasses.replace(spec, seed=spec.seed + round_index))
        pstate = assembly.build_perturbation_state(
            problem, current_base, pnets, colloc, epsilon=eps,
            second_order=spec.keep_second_order)

        def build(gamma, pstate=pstate):
            return (assembly.assemble_perturbation_residual(pstate, gamma),
                    assembly.assemble_perturbation_jacobian(pstate, gamma))

        report = solver.gauss_newton(build, np.zeros(pstate.n_cols), opts,
                                     error_metric=error_metric)
        pnets = assembly.with_alpha(pnets, report.alpha)
        report.info["epsilon"] = eps
        report.info["round"] = round_index + 1
        result = (CorrectedSolution(base_nets=current_base,
                                    correction_nets=pnets, epsilon=eps),
                  report)
        if round_index + 1 < spec.rounds:
            previous.append({"epsilon": eps,
                             "final_residual_norm":
                                 report.final_residual_norm,
                             "status": report.status})
            current_base = tuple(
                CompositeNet(parts=((b, 1.0), (c, eps)))
                for b, c in zip(current_base, pnets))

    solution, report = result
    if previous:
        report.info["previous_rounds"] = previous
    return solution, report


def composite_residual_norm(problem: InterfaceProblem,
                            solution: CorrectedSolution, colloc) -> float:
    """Scaled residual norm of the composed solution on ``colloc``.

    Evaluates the full nonlinear residual at u_N + eps * u_p (via an exact
    composite net), not the correction system's own objective.
    """
    nets = tuple(solution.side_net(s)
                 for s in range(problem.n_subdomains))
    F = assembly.assemble_residual(problem, nets, colloc)
    return float(np.linalg.norm(F))
