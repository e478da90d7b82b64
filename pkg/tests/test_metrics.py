"""Error measures, test grids, interface traces, residual diagnostics."""

import math

import numpy as np
import pytest

import qlips
from qlips import assembly, basis, metrics, perturbation, solver
from qlips import geometry as geo


def fake_grid(points, sub):
    return metrics.TestGrid(points=np.asarray(points, dtype=float),
                            sub=np.asarray(sub), resolution=(0,),
                            exclusion_band=0.0)


class FixedExact:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def u(self, x):
        return self.values[: len(x)]


class TestRelativeErrors:
    def test_three_point_hand_case(self):
        # u_g = (1,2,2), u_h = (1,2,1): L2 = 1/3, Linf = 1/2
        grid = fake_grid([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0]], [0, 0, 0])
        exact = (FixedExact([1.0, 2.0, 2.0]),)
        rep = metrics.relative_errors(
            lambda x, s: np.array([1.0, 2.0, 1.0]), exact, grid)
        assert rep.relative_l2 == pytest.approx(1.0 / 3.0, rel=1e-15)
        assert rep.relative_linf == pytest.approx(0.5, rel=1e-15)

    def test_identity_and_zero(self):
        p = qlips.builtin_example("ex1")
        grid = metrics.uniform_grid(p.geometry, resolution=(41, 41))
        rep = metrics.relative_errors(lambda x, s: p.exacts[s].u(x),
                                      p.exacts, grid)
        assert rep.relative_l2 == 0.0 and rep.relative_linf == 0.0
        rep = metrics.relative_errors(lambda x, s: np.zeros(len(x)),
                                      p.exacts, grid)
        assert rep.relative_l2 == pytest.approx(1.0)
        assert rep.relative_linf == pytest.approx(1.0)
        assert rep.l2_by_sub == pytest.approx((1.0, 1.0))

    def test_matches_direct_summation(self):
        # independent oracle: python-float fsum accumulation
        rng = np.random.default_rng(8)
        pts = rng.uniform(-1, 1, size=(400, 2))
        sub = (rng.random(400) < 0.5).astype(int)
        exact_vals = rng.normal(size=400) + 2.0
        approx_vals = exact_vals + rng.normal(scale=0.01, size=400)

        class Lookup:
            def __init__(self, sel):
                self.sel = sel

            def u(self, x):
                return exact_vals[self.sel][: len(x)]

        exacts = (Lookup(sub == 0), Lookup(sub == 1))

        def evaluate(x, s):
            return approx_vals[sub == s][: len(x)]

        rep = metrics.relative_errors(evaluate, exacts,
                                      fake_grid(pts, sub))
        num = math.fsum((a - e) ** 2
                        for a, e in zip(approx_vals, exact_vals))
        den = math.fsum(e * e for e in exact_vals)
        assert rep.relative_l2 == pytest.approx(math.sqrt(num / den),
                                                rel=1e-14)
        linf = max(abs(a - e) for a, e in zip(approx_vals, exact_vals)) \
            / max(abs(e) for e in exact_vals)
        assert rep.relative_linf == pytest.approx(linf, rel=1e-14)

    def test_vanishing_exact_rejected(self):
        grid = fake_grid([[0.0, 0.0], [0.1, 0.0]], [0, 0])
        with pytest.raises(qlips.NumericalError):
            metrics.relative_errors(lambda x, s: np.ones(len(x)),
                                    (FixedExact([0.0, 0.0]),), grid)

    def test_abs_error_field(self):
        p = qlips.builtin_example("ex1")
        grid = metrics.uniform_grid(p.geometry, resolution=(21, 21))
        field = metrics.abs_error_field(
            lambda x, s: p.exacts[s].u(x) + 0.25, p.exacts, grid)
        np.testing.assert_allclose(field, 0.25, rtol=1e-12)


class TestUniformGrid:
    def test_band_excludes_interface_line(self):
        p = qlips.builtin_example("ex1")
        grid = metrics.uniform_grid(p.geometry)  # 201 includes x = 0 exactly
        assert grid.n_points == 201 * 201 - 201
        assert np.all(np.abs(grid.points[:, 0]) > 0)
        assert set(np.unique(grid.sub)) == {0, 1}
        # plus side of the vertical split is x > x0 = 0
        assert np.all(grid.points[grid.sub == 0, 0] > 0)

    def test_spacetime_grid(self):
        p = qlips.builtin_example("ex5")
        grid = metrics.uniform_grid(p.geometry, resolution=(31, 31, 4))
        assert grid.points.shape[1] == 3
        t0, t1 = p.geometry.time_interval
        assert grid.points[:, 2].min() == t0
        assert grid.points[:, 2].max() == t1
        # the interface moves: membership depends on the slice
        r = np.hypot(grid.points[:, 0], grid.points[:, 1])
        inside = grid.sub == 1
        assert np.all(r[inside] < 0.5 * grid.points[inside, 2] + 0.5)

    def test_default_resolutions(self):
        p = qlips.builtin_example("ex1")
        assert metrics.uniform_grid(p.geometry).resolution == (201, 201)
        p5 = qlips.builtin_example("ex5")
        g5 = metrics.uniform_grid(p5.geometry, resolution=(5, 5, 3))
        assert g5.resolution == (5, 5, 3)

    def test_validation(self):
        p = qlips.builtin_example("ex1")
        with pytest.raises(qlips.ConfigError):
            metrics.uniform_grid(p.geometry, resolution=(10, 10, 5))
        with pytest.raises(qlips.ConfigError):
            metrics.uniform_grid(p.geometry, resolution=(1, 10))
        with pytest.raises(qlips.ConfigError):
            metrics.uniform_grid(p.geometry, exclusion_band=-1.0)


def quick_solution(ex="ex1", m=40, m_p=80, seed=5,
                   counts=(200, 200, 60, 80)):
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
    base_nets = assembly.with_alpha(nets, rep.alpha)
    sol, _ = perturbation.correct(
        p, base_nets, colloc, perturbation.CorrectionSpec(m_p=m_p, seed=99))
    return p, base_nets, colloc, sol


class TestInterfaceTrace:
    def test_circle_param_rows(self):
        p, _, _, sol = quick_solution("ex4", counts=(120, 120, 50, 60))
        trace = metrics.interface_trace(sol, p.exacts, p.geometry,
                                        n_samples=4)
        np.testing.assert_allclose(trace["param"],
                                   [0, np.pi / 2, np.pi, 3 * np.pi / 2])
        np.testing.assert_allclose(trace["x"], [0.5, 0.0, -0.5, 0.0],
                                   atol=1e-15)
        np.testing.assert_allclose(trace["y"], [0.0, 0.5, 0.0, -0.5],
                                   atol=1e-15)

    def test_exact_base_gives_zero_error(self):
        p = qlips.builtin_example("ex1")

        class ExactSolutionView:
            def evaluate_base(self, pts, sub):
                return p.exacts[sub].u(pts)

            def evaluate_correction(self, pts, sub):
                return np.zeros(len(pts))

        trace = metrics.interface_trace(ExactSolutionView(), p.exacts,
                                        p.geometry, n_samples=30)
        np.testing.assert_allclose(trace["base_error"], 0.0, atol=1e-14)
        assert len(trace["param"]) == 30

    def test_correction_column_is_scaled_plus_field(self):
        p, _, _, sol = quick_solution(counts=(120, 120, 50, 60))
        trace = metrics.interface_trace(sol, p.exacts, p.geometry,
                                        n_samples=12)
        pts = np.column_stack([trace["x"], trace["y"]])
        # plus side of the vertical split is subdomain 0
        expect = sol.evaluate_correction(pts, 0)
        np.testing.assert_allclose(trace["correction"], expect, rtol=1e-12)

    def test_correction_cancels_base_error(self):
        p, _, _, sol = quick_solution()
        trace = metrics.interface_trace(sol, p.exacts, p.geometry,
                                        n_samples=200)
        resid = np.abs(trace["base_error"] + trace["correction"])
        assert resid.max() <= 0.1 * np.abs(trace["base_error"]).max()

    def test_moving_interface_fixed_slice(self):
        p, _, _, sol = quick_solution("ex5", counts=(150, 150, 60, 60))
        trace = metrics.interface_trace(sol, p.exacts, p.geometry,
                                        n_samples=8, time=0.1)
        np.testing.assert_allclose(trace["t"], 0.1)
        r = np.hypot(trace["x"], trace["y"])
        np.testing.assert_allclose(r, 0.55, rtol=1e-12)  # r(t) = 0.5t + 0.5


class TestResidualDiagnostics:
    def test_zero_residual(self):
        p, nets, colloc, _ = quick_solution(counts=(60, 60, 25, 30), m=10,
                                            m_p=10)
        blocks = assembly.build_blocks(p, nets, colloc)
        system = assembly.ResidualSystem(
            F=np.zeros(blocks.n_rows), J=None,
            row_groups=blocks.row_groups, scaling=blocks.scaling)
        diag = metrics.residual_diagnostics(system)
        assert all(v["scaled"] == 0.0 for v in diag.values()
                   if not np.isnan(v["unscaled"]) or v["scaled"] == 0.0)

    def test_partition_identity_and_counts(self):
        p, nets, colloc, _ = quick_solution(counts=(60, 60, 25, 30), m=10,
                                            m_p=10)
        system = assembly.assemble_system(p, nets, colloc,
                                          with_jacobian=False)
        diag = metrics.residual_diagnostics(system)
        total_sq = sum(diag[g]["scaled"] ** 2 for g in geo.GROUPS)
        assert total_sq == pytest.approx(diag["total"]["scaled"] ** 2,
                                         rel=1e-13)
        assert diag["interior_plus"]["n_rows"] == 60
        assert diag["gamma_n"]["n_rows"] == 25
        assert diag["gamma_d"]["n_rows"] == 25
        assert diag["boundary"]["n_rows"] == 30

    def test_correction_shrinks_every_group(self):
        p, base_nets, colloc, sol = quick_solution()
        before = metrics.residual_diagnostics(
            assembly.assemble_system(p, base_nets, colloc,
                                     with_jacobian=False))
        composed = tuple(sol.side_net(s) for s in range(2))
        after = metrics.residual_diagnostics(
            assembly.assemble_system(p, composed, colloc,
                                     with_jacobian=False))
        for g in geo.GROUPS:
            assert after[g]["scaled"] < before[g]["scaled"], g

    def test_true_error_improves(self):
        p, base_nets, colloc, sol = quick_solution()
        grid = metrics.uniform_grid(p.geometry, resolution=(61, 61))
        init = metrics.relative_errors(sol.evaluate_base, p.exacts, grid)
        corr = metrics.relative_errors(sol.evaluate, p.exacts, grid)
        assert corr.relative_l2 < init.relative_l2
        assert corr.relative_linf < init.relative_linf
