"""Assembly: chain-rule fields against a symbolic series oracle, FD Jacobians,
stacking/scaling bookkeeping, and the correction-stage identities."""

import dataclasses

import numpy as np
import pytest

import qlips
from qlips import assembly, basis
from qlips import geometry as geo
from qlips import problem as pm

# ---------------------------------------------------------------------------
# Frozen by tools/oracles/taylor_expansion_check.py: a brute-force sympy
# series expansion of R(u_N + eps*a [+ delta*b]) for a coefficient exercising
# every partial slot.  The hand chain rules in assembly.py matched the series
# symbolically (exact zero); these numbers pin the vectorized implementation
# at one probe point, x=2/5 y=-3/10 (t=1/5), flux normal n=(3/5, 4/5).

ELLIPTIC = {
    "uN_u": 0.38846599311642904,
    "uN_gx": 0.91395648346314474,
    "uN_gy": -0.11365100538519029,
    "uN_lap": 0.35437069150087195,
    "uN_hxx": -0.42446599311642904,
    "uN_hxy": -0.25263659640173105,
    "uN_hyy": 0.77883668461730098,
    "a_u": 0.82958256189037272,
    "a_gx": -1.1988510772084060,
    "a_gy": -0.31942553860420300,
    "a_lap": -4.9879128094518636,
    "a_hxx": -4.1103302475614909,
    "a_hxy": -0.95516512378074543,
    "a_hyy": -0.87758256189037272,
    "b_u": -0.45796126276273206,
    "b_gx": -0.39931730739830369,
    "b_gy": 1.5246203059209222,
    "b_lap": -0.00051436317041330314,
    "b_hxx": -0.019668316336640401,
    "b_hxy": 1.3166922264530086,
    "b_hyy": 0.019153953166227098,
    "R0": 2.4677478777347920,
    "L1_a": -13.962173104975335,
    "L1_b": -0.80019532577259203,
    "Q_aa": 10.300237028319246,
    "Q_ab": 1.3049122359866067,
    "flux0": 1.0647483513865101,
    "Fd1_a": -2.3107266999791936,
    "Fd2_aa": 0.42108280680270132,
    "Fd2_ab": 0.22866997065954200,
}

PARABOLIC = {
    "uN_u": 0.60346029600058854,
    "uN_gx": 0.86961582025154934,
    "uN_gy": -0.29878548403702121,
    "uN_lap": 0.51382465078948217,
    "uN_hxx": -0.61546029600058854,
    "uN_hxy": -0.39520136894580698,
    "uN_hyy": 1.1292849467900707,
    "uN_dt": 0.83961582025154934,
    "a_u": 0.88808806601639756,
    "a_gx": -1.2627744823556331,
    "a_gy": -0.35138724117781653,
    "a_lap": -5.2804403300819878,
    "a_hxx": -4.3443522640655903,
    "a_hxy": -1.0721761320327951,
    "a_hyy": -0.93608806601639756,
    "a_dt": 0.29252752063012424,
    "b_u": -0.18736201838368190,
    "b_gx": -0.31813753408458864,
    "b_gy": 0.62262282465742164,
    "b_lap": 0.023839568823701211,
    "b_hxx": 0.0046856156574741138,
    "b_hxy": 1.0460929820739585,
    "b_hyy": 0.019153953166227098,
    "b_dt": -0.33824905547381270,
    "R0": 2.1064803491548221,
    "L1_a": -14.826282782712063,
    "L1_b": -0.57779291945655585,
    "Q_aa": 10.259073639093064,
    "Q_ab": 1.6863944556457046,
    "flux0": 0.68336717173471813,
    "Fd1_a": -2.5222873823925400,
    "Fd2_aa": 0.25574377237238295,
    "Fd2_ab": 0.25307532765927685,
}

PROBE_X, PROBE_Y, PROBE_T = 0.4, -0.3, 0.2
PROBE_N = (0.6, 0.8)


def oracle_coefficient():
    """beta = 1 + x^2/2 + 3y/10 + e^{u/3} + p1^2/5 + 3p2^2/20 + u p1/10
    + p1 p2/20, matching the symbolic oracle."""
    def d_pp(x, u, g):
        out = np.empty((len(u), 2, 2))
        out[:, 0, 0] = 0.4
        out[:, 0, 1] = out[:, 1, 0] = 0.05
        out[:, 1, 1] = 0.3
        return out

    return pm.Coefficient(
        eval=lambda x, u, g: (1 + 0.5 * x[:, 0]**2 + 0.3 * x[:, 1]
                              + np.exp(u / 3) + 0.2 * g[:, 0]**2
                              + 0.15 * g[:, 1]**2 + 0.1 * u * g[:, 0]
                              + 0.05 * g[:, 0] * g[:, 1]),
        d_u=lambda x, u, g: np.exp(u / 3) / 3 + 0.1 * g[:, 0],
        d_uu=lambda x, u, g: np.exp(u / 3) / 9,
        d_uuu=lambda x, u, g: np.exp(u / 3) / 27,
        grad_x=lambda x, u, g: np.column_stack([x[:, 0],
                                                np.full(len(u), 0.3)]),
        d_p=lambda x, u, g: np.column_stack([
            0.4 * g[:, 0] + 0.1 * u + 0.05 * g[:, 1],
            0.3 * g[:, 1] + 0.05 * g[:, 0]]),
        d_pu=lambda x, u, g: np.column_stack([np.full(len(u), 0.1),
                                              np.zeros(len(u))]),
        d_pp=d_pp,
        name="oracle",
    )


def oracle_source():
    # f = 2u^2/5 + cos(xy) + u^3/10
    return pm.Source(
        eval=lambda x, u: 0.4 * u**2 + np.cos(x[:, 0] * x[:, 1]) + 0.1 * u**3,
        d_u=lambda x, u: 0.8 * u + 0.3 * u**2,
        d_uu=lambda x, u: 0.8 + 0.6 * u,
    )


def frozen_state(tbl, tag, parabolic):
    a = lambda k: np.array([tbl[f"{tag}_{k}"]])
    return basis.NetState(
        u=a("u"), gx=a("gx"), gy=a("gy"), lap=a("lap"),
        dt=a("dt") if parabolic else None,
        hxx=a("hxx"), hxy=a("hxy"), hyy=a("hyy"),
        dn=a("gx") * PROBE_N[0] + a("gy") * PROBE_N[1])


@pytest.mark.parametrize("tbl,parabolic", [(ELLIPTIC, False),
                                           (PARABOLIC, True)],
                         ids=["elliptic", "parabolic"])
class TestFieldFormulasAgainstSeriesOracle:
    def setup_case(self, tbl, parabolic):
        x = np.array([[PROBE_X, PROBE_Y, PROBE_T]]) if parabolic \
            else np.array([[PROBE_X, PROBE_Y]])
        state = frozen_state(tbl, "uN", parabolic)
        ib = assembly.interior_base(oracle_coefficient(), oracle_source(),
                                    x, state, parabolic, order=2)
        fb = assembly.flux_base(oracle_coefficient(), x, state, order=1)
        ca = assembly.ColumnFields.from_state(frozen_state(tbl, "a", parabolic))
        cb = assembly.ColumnFields.from_state(frozen_state(tbl, "b", parabolic))
        return ib, fb, ca, cb

    def test_base_residual(self, tbl, parabolic):
        ib, _, _, _ = self.setup_case(tbl, parabolic)
        assert ib.resid[0] == pytest.approx(tbl["R0"], rel=5e-13)

    def test_directional(self, tbl, parabolic):
        ib, _, ca, cb = self.setup_case(tbl, parabolic)
        assert assembly.directional_interior(ib, ca)[0] == pytest.approx(
            tbl["L1_a"], rel=5e-13)
        assert assembly.directional_interior(ib, cb)[0] == pytest.approx(
            tbl["L1_b"], rel=5e-13)

    def test_bilinear(self, tbl, parabolic):
        ib, _, ca, cb = self.setup_case(tbl, parabolic)
        assert assembly.bilinear_interior(ib, ca, ca)[0] == pytest.approx(
            tbl["Q_aa"], rel=5e-13)
        assert assembly.bilinear_interior(ib, ca, cb)[0] == pytest.approx(
            tbl["Q_ab"], rel=5e-13)
        # symmetry
        assert assembly.bilinear_interior(ib, cb, ca)[0] == pytest.approx(
            tbl["Q_ab"], rel=5e-13)

    def test_flux(self, tbl, parabolic):
        _, fb, ca, cb = self.setup_case(tbl, parabolic)
        assert fb.base[0] == pytest.approx(tbl["flux0"], rel=5e-13)
        assert assembly.directional_flux(fb, ca)[0] == pytest.approx(
            tbl["Fd1_a"], rel=5e-13)
        assert assembly.bilinear_flux(fb, ca, ca)[0] == pytest.approx(
            tbl["Fd2_aa"], rel=5e-13)
        assert assembly.bilinear_flux(fb, ca, cb)[0] == pytest.approx(
            tbl["Fd2_ab"], rel=5e-13)

    def test_matrix_columns_match_vector_path(self, tbl, parabolic):
        # the (N, m) broadcast path must agree with per-direction vectors
        ib, fb, ca, cb = self.setup_case(tbl, parabolic)
        stack = lambda p, q: np.column_stack([p, q])
        cols = assembly.ColumnFields(
            q=stack(ca.q, cb.q), gx=stack(ca.gx, cb.gx),
            gy=stack(ca.gy, cb.gy), lap=stack(ca.lap, cb.lap),
            dt=stack(ca.dt, cb.dt) if parabolic else None,
            hxx=stack(ca.hxx, cb.hxx), hxy=stack(ca.hxy, cb.hxy),
            hyy=stack(ca.hyy, cb.hyy), dn=stack(ca.dn, cb.dn))
        d = assembly.directional_interior(ib, cols)
        np.testing.assert_allclose(d, [[tbl["L1_a"], tbl["L1_b"]]], rtol=5e-13)
        q = assembly.bilinear_interior(ib, ca, cols)
        np.testing.assert_allclose(q, [[tbl["Q_aa"], tbl["Q_ab"]]], rtol=5e-13)
        fd2 = assembly.bilinear_flux(fb, ca, cols)
        np.testing.assert_allclose(fd2, [[tbl["Fd2_aa"], tbl["Fd2_ab"]]],
                                   rtol=5e-13)


# ---------------------------------------------------------------------------
# system-level assembly


def small_setup(ex, seed=0, m=12, counts=(50, 50, 20, 30), **kw):
    p = qlips.builtin_example(ex, **kw)
    dim = 3 if p.geometry.has_time else 2
    ss = np.random.SeedSequence(seed).spawn(p.n_subdomains)
    nets = tuple(basis.init_net(m=m, dim=dim, activation="tanh",
                                weight_range=(-1.0, 1.0),
                                bias_range=(-0.1, 0.1),
                                seed=int(s.generate_state(1)[0]))
                 for s in ss)
    spec = geo.CollocationSpec(n_interior_plus=counts[0],
                               n_interior_minus=counts[1],
                               n_interface=counts[2], n_boundary=counts[3])
    colloc = geo.sample_collocation(p.geometry, spec, seed=seed + 1)
    return p, nets, colloc


def correction_nets(p, m=10, seed=40):
    dim = 3 if p.geometry.has_time else 2
    ss = np.random.SeedSequence(seed).spawn(p.n_subdomains)
    return tuple(basis.init_net(m=m, dim=dim, activation="sin",
                                weight_range=(-2 * np.pi, 2 * np.pi),
                                bias_range=(-np.pi, np.pi),
                                seed=int(s.generate_state(1)[0]))
                 for s in ss)


def fd_jacobian(fun, x0, h=1e-6):
    cols = []
    for j in range(len(x0)):
        e = np.zeros_like(x0)
        e[j] = h
        cols.append((fun(x0 + e) - fun(x0 - e)) / (2 * h))
    return np.column_stack(cols)


class TestBaseSystem:
    def test_zero_net_rows(self):
        # alpha = 0 with homogeneous jumps: interior rows are scaled f(x, 0),
        # interface rows vanish, boundary rows are -scaled g
        p, nets, colloc = small_setup("ex1")
        blocks = assembly.build_blocks(p, nets, colloc)
        F = assembly.assemble_residual(p, nets, colloc, blocks,
                                       np.zeros(blocks.n_cols))
        rg = blocks.row_groups
        for group, pts_subs in (("interior_plus", (colloc.interior_plus,
                                                   colloc.interior_plus_sub)),
                                ("interior_minus", (colloc.interior_minus,
                                                    colloc.interior_minus_sub))):
            pts, subs = pts_subs
            scale = blocks.scaling[rg[group]][0]
            expect = np.empty(len(pts))
            for s in np.unique(subs):
                sel = subs == s
                expect[sel] = p.sources[s].eval(pts[sel], np.zeros(sel.sum()))
            np.testing.assert_allclose(F[rg[group]], scale * expect,
                                       rtol=1e-13)
        np.testing.assert_allclose(F[rg["gamma_n"]], 0.0, atol=1e-15)
        np.testing.assert_allclose(F[rg["gamma_d"]], 0.0, atol=1e-15)
        scale_b = blocks.scaling[rg["boundary"]][0]
        g = p.boundary_g(colloc.boundary, colloc.boundary_sub)
        np.testing.assert_allclose(F[rg["boundary"]], -scale_b * g,
                                   rtol=1e-13)

    def test_linear_poisson_interior_block_is_laplacian(self):
        # beta = 1, f = 0 collapses interior Jacobian entries to lap(phi_j)
        p0 = qlips.builtin_example("ex1")
        lin = dataclasses.replace(
            p0,
            coefficients=(pm.Coefficient.constant(1.0),
                          pm.Coefficient.constant(1.0)),
            sources=(pm.Source(eval=lambda x, u: np.zeros(len(u))),) * 2,
        )
        nets = tuple(basis.init_net(m=9, dim=2, activation="tanh",
                                    weight_range=(-1, 1),
                                    bias_range=(-0.1, 0.1), seed=s)
                     for s in (3, 4))
        spec = geo.CollocationSpec(n_interior_plus=25, n_interior_minus=25,
                                   n_interface=10, n_boundary=12)
        colloc = geo.sample_collocation(lin.geometry, spec, seed=5)
        blocks = assembly.build_blocks(lin, nets, colloc)
        J = assembly.assemble_jacobian(lin, nets, colloc, blocks,
                                       np.zeros(blocks.n_cols))
        rg = blocks.row_groups
        scale = blocks.scaling[rg["interior_plus"]][0]
        blk = basis.features(nets[0], colloc.interior_plus,
                             need=("phi", "grad", "lap"))
        np.testing.assert_allclose(J[rg["interior_plus"], 0:9],
                                   scale * blk.lap, rtol=1e-13)

    def test_cross_subdomain_blocks_are_zero(self):
        p, nets, colloc = small_setup("ex1")
        blocks = assembly.build_blocks(p, nets, colloc)
        rng = np.random.default_rng(1)
        J = assembly.assemble_jacobian(p, nets, colloc, blocks,
                                       rng.normal(scale=0.3,
                                                  size=blocks.n_cols))
        rg = blocks.row_groups
        plus_cols, minus_cols = blocks.col_slices
        assert np.all(J[rg["interior_plus"], minus_cols] == 0.0)
        assert np.all(J[rg["interior_minus"], plus_cols] == 0.0)
        # boundary rows touch only the owning subdomain's columns
        for piece in blocks.boundary:
            other = minus_cols if piece.sub == 0 else plus_cols
            rows = rg["boundary"].start + piece.local
            assert np.all(J[rows][:, other] == 0.0)

    @pytest.mark.parametrize("ex", list(pm.EXAMPLE_IDS))
    def test_jacobian_matches_fd(self, ex):
        p, nets, colloc = small_setup(ex, seed=7, m=8, counts=(30, 30, 12, 16))
        blocks = assembly.build_blocks(p, nets, colloc)
        rng = np.random.default_rng(17)
        for _ in range(3):
            alpha = rng.normal(scale=0.4, size=blocks.n_cols)
            J = assembly.assemble_jacobian(p, nets, colloc, blocks, alpha)
            fd = fd_jacobian(lambda a: assembly.assemble_residual(
                p, nets, colloc, blocks, a), alpha)
            err = np.linalg.norm(J - fd) / np.linalg.norm(fd)
            assert err < 1e-6, (ex, err)

    def test_weight_scaling(self):
        # rows scale by sqrt(w/N); the squared norm reproduces the weighted
        # mean-square functional
        p = qlips.builtin_example("ex1")
        spec_w = geo.CollocationSpec(n_interior_plus=40, n_interior_minus=50,
                                     n_interface=20, n_boundary=25,
                                     weights=(2.0, 3.0, 4.0, 5.0, 6.0))
        colloc_w = geo.sample_collocation(p.geometry, spec_w, seed=9)
        nets = tuple(basis.init_net(m=7, dim=2, activation="tanh",
                                    weight_range=(-1, 1),
                                    bias_range=(-0.1, 0.1), seed=s)
                     for s in (1, 2))
        blocks = assembly.build_blocks(p, nets, colloc_w)
        rng = np.random.default_rng(2)
        alpha = rng.normal(scale=0.3, size=blocks.n_cols)
        F = assembly.assemble_residual(p, nets, colloc_w, blocks, alpha)
        raw = F / blocks.scaling  # unscaled pointwise residuals
        weights = dict(zip(geo.GROUPS, spec_w.weights))
        total = sum(weights[name]
                    * np.mean(raw[blocks.row_groups[name]]**2)
                    for name in geo.GROUPS)
        assert np.dot(F, F) == pytest.approx(total, rel=1e-12)

    def test_exact_projection_residual_shrinks_with_m(self):
        # best-approximation residual is non-increasing in m (median of seeds)
        p = qlips.builtin_example("ex1")
        spec = geo.CollocationSpec(n_interior_plus=80, n_interior_minus=80,
                                   n_interface=30, n_boundary=40)
        colloc = geo.sample_collocation(p.geometry, spec, seed=21)
        sides = ((colloc.interior_plus, 0), (colloc.interior_minus, 1))
        medians = []
        for m in (10, 20, 40):
            norms = []
            for seed in (1, 2, 3):
                nets = tuple(basis.init_net(m=m, dim=2, activation="tanh",
                                            weight_range=(-1, 1),
                                            bias_range=(-0.1, 0.1),
                                            seed=seed + 10 * s)
                             for s in (1, 2))
                alpha = []
                for pts, sub in sides:
                    blk = basis.features(nets[sub], pts, need=("phi",))
                    target = p.exacts[sub].u(pts)
                    coef, *_ = np.linalg.lstsq(blk.phi, target, rcond=None)
                    alpha.append(coef)
                F = assembly.assemble_residual(p, nets, colloc,
                                               alpha=np.concatenate(alpha))
                norms.append(np.linalg.norm(F))
            medians.append(np.median(norms))
        assert medians[0] >= medians[1] >= medians[2]

    def test_check_finite(self):
        p, nets, colloc = small_setup("ex3")
        blocks = assembly.build_blocks(p, nets, colloc)
        bad = np.full(blocks.n_cols, 1e300)  # overflows exp(u/2) in beta
        with np.errstate(over="ignore", invalid="ignore"), \
                pytest.raises(qlips.NumericalError):
            assembly.assemble_residual(p, nets, colloc, blocks, bad,
                                       check_finite=True)

    def test_shape_validation(self):
        p, nets, colloc = small_setup("ex1")
        blocks = assembly.build_blocks(p, nets, colloc)
        with pytest.raises(qlips.ShapeError):
            assembly.assemble_residual(p, nets, colloc, blocks,
                                       np.zeros(blocks.n_cols + 1))
        with pytest.raises(qlips.ConfigError):
            assembly.build_blocks(p, nets[:1], colloc)


class TestPerturbationSystem:
    def build(self, ex, seed=23, second_order=True, **kw):
        p, nets, colloc = small_setup(ex, seed=seed, m=8,
                                      counts=(30, 30, 12, 16), **kw)
        blocks = assembly.build_blocks(p, nets, colloc)
        rng = np.random.default_rng(seed)
        alpha = rng.normal(scale=0.3, size=blocks.n_cols)
        base_nets = assembly.with_alpha(nets, alpha)
        pnets = correction_nets(p, m=9, seed=seed + 1)
        ps = assembly.build_perturbation_state(p, base_nets, pnets, colloc,
                                               second_order=second_order)
        F = assembly.assemble_residual(p, base_nets, colloc, blocks)
        return p, ps, F, rng

    @pytest.mark.parametrize("ex", list(pm.EXAMPLE_IDS))
    def test_gamma_zero_identity(self, ex):
        _, ps, F, _ = self.build(ex)
        Fp0 = assembly.assemble_perturbation_residual(ps, np.zeros(ps.n_cols))
        # rtol covers rows whose magnitude (ex4 contrast) puts 1e-13 under
        # one ulp; everywhere else the absolute floor is binding
        np.testing.assert_allclose(ps.epsilon * Fp0, F, rtol=1e-15,
                                   atol=1e-13)
        assert ps.epsilon == pytest.approx(np.linalg.norm(F), rel=1e-13)

    @pytest.mark.parametrize("ex", list(pm.EXAMPLE_IDS))
    def test_jacobian_matches_fd(self, ex):
        _, ps, _, rng = self.build(ex)
        for _ in range(2):
            gamma = rng.normal(scale=0.2, size=ps.n_cols)
            Jp = assembly.assemble_perturbation_jacobian(ps, gamma)
            fd = fd_jacobian(lambda gm: assembly.assemble_perturbation_residual(
                ps, gm), gamma)
            err = np.linalg.norm(Jp - fd) / np.linalg.norm(fd)
            assert err < 1e-6, (ex, err)

    def test_first_order_system_is_affine(self):
        _, ps, _, rng = self.build("ex1", second_order=False)
        g1 = rng.normal(size=ps.n_cols)
        g2 = rng.normal(size=ps.n_cols)
        F0 = assembly.assemble_perturbation_residual(ps, np.zeros(ps.n_cols))
        F1 = assembly.assemble_perturbation_residual(ps, g1)
        F2 = assembly.assemble_perturbation_residual(ps, g2)
        # affine: F(g1 + g2) - F(g1) - F(g2) + F(0) = 0
        F12 = assembly.assemble_perturbation_residual(ps, g1 + g2)
        np.testing.assert_allclose(F12, F1 + F2 - F0, rtol=1e-10, atol=1e-12)
        J = assembly.assemble_perturbation_jacobian(ps, g1)
        np.testing.assert_array_equal(J, ps.j1)

    def test_second_order_residual_is_quadratic(self):
        _, ps, _, rng = self.build("ex6")
        g = rng.normal(scale=0.3, size=ps.n_cols)
        vals = [assembly.assemble_perturbation_residual(ps, t * g)
                for t in (0.0, 1.0, 2.0, 3.0)]
        # quadratic in t: third finite difference vanishes
        third = vals[3] - 3 * vals[2] + 3 * vals[1] - vals[0]
        scale = max(np.abs(vals[3]).max(), 1.0)
        np.testing.assert_allclose(third / scale, 0.0, atol=1e-11)

    def test_interface_jacobian_entries_are_plain_features(self):
        # value-jump rows: +psi on the plus side, -psi on the minus side
        p, ps, _, _ = self.build("ex1")
        gn = ps.row_groups["gamma_n"]
        scale = ps.scaling[gn][0]
        pts = ps.colloc.interface
        plus_blk = basis.features(ps.correction_nets[0], pts, need=("phi",))
        minus_blk = basis.features(ps.correction_nets[1], pts, need=("phi",))
        np.testing.assert_allclose(ps.j1[gn, ps.col_slices[0]],
                                   scale * plus_blk.phi, rtol=1e-13)
        np.testing.assert_allclose(ps.j1[gn, ps.col_slices[1]],
                                   -scale * minus_blk.phi, rtol=1e-13)

    def test_epsilon_override(self):
        p, nets, colloc = small_setup("ex1", seed=31, m=8,
                                      counts=(30, 30, 12, 16))
        rng = np.random.default_rng(31)
        base_nets = assembly.with_alpha(
            nets, rng.normal(scale=0.3, size=2 * 8))
        pnets = correction_nets(p, m=9, seed=32)
        ps = assembly.build_perturbation_state(p, base_nets, pnets, colloc,
                                               epsilon=1e-3)
        assert ps.epsilon == 1e-3

    def test_epsilon_zero_rejected_at_assembly(self):
        p, nets, colloc = small_setup("ex1", seed=33, m=8,
                                      counts=(30, 30, 12, 16))
        pnets = correction_nets(p, m=9, seed=34)
        ps = assembly.build_perturbation_state(p, nets, pnets, colloc,
                                               epsilon=0.0)
        with pytest.raises(qlips.NumericalError):
            assembly.assemble_perturbation_residual(ps, np.zeros(ps.n_cols))
