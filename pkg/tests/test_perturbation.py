"""Correction step: epsilon rule, skip path, composition exactness,
improvement on assembled problems, experimental multi-round mode."""

import dataclasses

import numpy as np
import pytest

import qlips
from qlips import assembly, basis, perturbation, solver
from qlips import geometry as geo
from qlips import problem as pm


class TestEpsilonRule:
    def test_zero_residual_skips(self):
        assert perturbation.epsilon_from_residual(np.zeros(50)) is None

    def test_norm_passthrough(self):
        F = np.zeros(25)
        F[0] = 1e-5
        assert perturbation.epsilon_from_residual(F) == pytest.approx(1e-5)

    def test_floor(self):
        F = np.full(4, 0.5e-14)
        assert perturbation.epsilon_from_residual(F) == pytest.approx(1e-14)
        assert perturbation.epsilon_from_residual(0.099 * F) is None

    def test_nonfinite_rejected(self):
        with pytest.raises(qlips.NumericalError):
            perturbation.epsilon_from_residual(np.array([1.0, np.nan]))

    def test_spec_validation(self):
        with pytest.raises(qlips.ConfigError):
            perturbation.CorrectionSpec(m_p=0)
        with pytest.raises(qlips.ConfigError):
            perturbation.CorrectionSpec(m_p=5, rounds=0)


def solve_base(ex="ex1", m=40, seed=5, counts=(200, 200, 60, 80)):
    p = qlips.builtin_example(ex)
    dim = 3 if p.geometry.has_time else 2
    nets = tuple(basis.init_net(m=m, dim=dim, activation="tanh",
                                weight_range=(-1, 1), bias_range=(-1, 1),
                                seed=seed + s)
                 for s in range(p.n_subdomains))
    spec = geo.CollocationSpec(n_interior_plus=counts[0],
                               n_interior_minus=counts[1],
                               n_interface=counts[2], n_boundary=counts[3])
    colloc = geo.sample_collocation(p.geometry, spec, seed=seed)
    blocks = assembly.build_blocks(p, nets, colloc)

    def build(alpha):
        return (assembly.assemble_residual(p, nets, colloc, blocks, alpha),
                assembly.assemble_jacobian(p, nets, colloc, blocks, alpha))

    rep = solver.gauss_newton(build, np.zeros(blocks.n_cols))
    return p, assembly.with_alpha(nets, rep.alpha), colloc, rep


class TestCorrect:
    def test_composite_residual_drops(self):
        p, base_nets, colloc, rep = solve_base()
        sol, crep = perturbation.correct(
            p, base_nets, colloc, perturbation.CorrectionSpec(m_p=80, seed=99))
        assert crep.converged
        assert sol.epsilon == pytest.approx(rep.final_residual_norm, rel=1e-12)
        after = perturbation.composite_residual_norm(p, sol, colloc)
        assert after < 0.1 * rep.final_residual_norm

    def test_quadratic_mode_one_step(self):
        # dropping the second-order terms leaves an affine system: the first
        # step lands on the optimum, the second only confirms it
        p, base_nets, colloc, _ = solve_base(seed=8)
        sol, crep = perturbation.correct(
            p, base_nets, colloc,
            perturbation.CorrectionSpec(m_p=60, seed=41,
                                        keep_second_order=False))
        assert crep.converged
        assert crep.iterations == 2
        assert crep.rel_changes[-1] <= 1e-10

    def test_composition_is_exact(self):
        p, base_nets, colloc, _ = solve_base(seed=9, counts=(80, 80, 30, 40))
        sol, _ = perturbation.correct(
            p, base_nets, colloc, perturbation.CorrectionSpec(m_p=30, seed=7))
        rng = np.random.default_rng(0)
        pts = rng.uniform((-1, 0), (1, 1), size=(10_000, 2))
        for sub in (0, 1):
            raw = basis.eval_state(
                sol.correction_nets[sub],
                basis.features(sol.correction_nets[sub], pts,
                               need=("phi",))).u
            manual = sol.evaluate_base(pts, sub) + sol.epsilon * raw
            np.testing.assert_array_equal(sol.evaluate(pts, sub), manual)
            np.testing.assert_array_equal(sol.evaluate_correction(pts, sub),
                                          sol.epsilon * raw)
            # the frozen single-net view re-sums a cancelling series in one
            # reduction; agreement is to rounding of the O(1) terms
            via_net = basis.eval_state(
                sol.side_net(sub),
                basis.features(sol.side_net(sub), pts, need=("phi",))).u
            np.testing.assert_allclose(via_net, manual, atol=1e-11)

    def test_skip_when_base_is_exact(self):
        # manufacture the data from the base net itself: every residual row
        # is zero to rounding, so the correction must stand down
        net_plus = basis.init_net(m=15, dim=2, activation="tanh",
                                  weight_range=(-1, 1), bias_range=(-1, 1),
                                  seed=3)
        net_minus = basis.init_net(m=15, dim=2, activation="tanh",
                                   weight_range=(-1, 1), bias_range=(-1, 1),
                                   seed=4)
        rng = np.random.default_rng(5)
        nets = assembly.with_alpha((net_plus, net_minus),
                                   rng.normal(scale=0.5, size=30))

        def exact_of(net):
            def u(x):
                blk = basis.features(net, x, need=("phi",))
                return blk.phi @ net.alpha

            def grad(x):
                blk = basis.features(net, x, need=("grad",))
                return np.column_stack([blk.dx @ net.alpha,
                                        blk.dy @ net.alpha])

            def lap(x):
                blk = basis.features(net, x, need=("lap",))
                return blk.lap @ net.alpha

            return pm.ExactSolution(u=u, grad=grad, lap=lap)

        base = qlips.builtin_example("ex1")
        prob = pm.manufactured_problem(
            "span", base.geometry,
            (pm.Coefficient.constant(1.0),) * 2,
            (exact_of(nets[0]), exact_of(nets[1])))

        spec = geo.CollocationSpec(n_interior_plus=60, n_interior_minus=60,
                                   n_interface=25, n_boundary=30)
        colloc = geo.sample_collocation(prob.geometry, spec, seed=11)
        F = assembly.assemble_residual(prob, nets, colloc)
        assert np.linalg.norm(F) < perturbation.EPSILON_FLOOR

        sol, rep = perturbation.correct(
            prob, nets, colloc, perturbation.CorrectionSpec(m_p=20, seed=2))
        assert rep.status == "skipped"
        assert sol.skipped and sol.epsilon == 0.0
        pts = np.random.default_rng(1).uniform((-1, 0), (1, 1), (200, 2))
        np.testing.assert_array_equal(sol.evaluate(pts, 0),
                                      sol.evaluate_base(pts, 0))

    def test_two_rounds_do_not_regress(self):
        p, base_nets, colloc, _ = solve_base(seed=5)
        one, _ = perturbation.correct(
            p, base_nets, colloc, perturbation.CorrectionSpec(m_p=80, seed=99))
        two, rep2 = perturbation.correct(
            p, base_nets, colloc,
            perturbation.CorrectionSpec(m_p=80, seed=99, rounds=2))
        n1 = perturbation.composite_residual_norm(p, one, colloc)
        n2 = perturbation.composite_residual_norm(p, two, colloc)
        assert n2 <= n1 * 1.05
        assert rep2.info["round"] == 2
        assert len(rep2.info["previous_rounds"]) == 1
        # round-two base is the frozen round-one composition
        assert isinstance(two.base_nets[0], basis.CompositeNet)

    def test_error_metric_recorded(self):
        p, base_nets, colloc, _ = solve_base(seed=6, counts=(80, 80, 30, 40))
        sol, rep = perturbation.correct(
            p, base_nets, colloc, perturbation.CorrectionSpec(m_p=30, seed=1),
            error_metric=lambda g: float(np.linalg.norm(g)))
        assert len(rep.error_history) == rep.iterations + 1
        assert rep.error_history[0] == 0.0  # starts from gamma = 0

    def test_correction_nets_are_sin_with_independent_seeds(self):
        p = qlips.builtin_example("ex2")
        nets = perturbation.correction_nets_for(
            p, perturbation.CorrectionSpec(m_p=12, seed=5))
        assert len(nets) == 4
        assert all(n.activation == "sin" for n in nets)
        seeds = {n.seed for n in nets}
        assert len(seeds) == 4
