"""Random feature nets: initialization, derivative blocks, state evaluation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlips import basis
from qlips.errors import ConfigError, ShapeError


def small_net(activation="tanh", dim=2, m=7, seed=3):
    return basis.init_net(m=m, dim=dim, activation=activation,
                          weight_range=(-1.0, 1.0), bias_range=(-0.1, 0.1),
                          seed=seed)


class TestInitNet:
    def test_deterministic(self):
        a = small_net(seed=11)
        b = small_net(seed=11)
        np.testing.assert_array_equal(a.W, b.W)
        np.testing.assert_array_equal(a.b, b.b)
        c = small_net(seed=12)
        assert not np.array_equal(a.W, c.W)

    def test_ranges(self):
        net = basis.init_net(m=500, dim=2, activation="sin",
                             weight_range=(-7 * np.pi, 7 * np.pi),
                             bias_range=(-np.pi, np.pi), seed=0)
        assert net.W.min() >= -7 * np.pi and net.W.max() <= 7 * np.pi
        assert net.b.min() >= -np.pi and net.b.max() <= np.pi
        assert net.alpha.shape == (500,)
        np.testing.assert_array_equal(net.alpha, 0.0)

    def test_validation(self):
        with pytest.raises(ConfigError):
            basis.init_net(m=0, dim=2, activation="tanh",
                           weight_range=(-1, 1), bias_range=(0, 0), seed=0)
        with pytest.raises(ConfigError):
            basis.init_net(m=3, dim=4, activation="tanh",
                           weight_range=(-1, 1), bias_range=(0, 0), seed=0)
        with pytest.raises(ConfigError):
            basis.init_net(m=3, dim=2, activation="relu",
                           weight_range=(-1, 1), bias_range=(0, 0), seed=0)
        with pytest.raises(ConfigError):
            basis.init_net(m=3, dim=2, activation="tanh",
                           weight_range=(1, -1), bias_range=(0, 0), seed=0)


class TestFeatures:
    def test_single_neuron_tanh_by_hand(self):
        net = basis.RandomFeatureNet(m=1, dim=2, activation="tanh",
                                     W=np.array([[1.0, 2.0]]),
                                     b=np.array([0.5]),
                                     alpha=np.array([1.0]),
                                     weight_range=(-1, 1),
                                     bias_range=(-1, 1), seed=0)
        pts = np.array([[0.3, -0.2]])
        blk = basis.features(net, pts, need=("phi", "grad", "lap", "hess"))
        z = 0.3 * 1.0 + (-0.2) * 2.0 + 0.5  # 0.4
        th = math.tanh(z)
        d1 = 1.0 - th * th
        d2 = -2.0 * th * d1
        assert blk.phi[0, 0] == pytest.approx(th, rel=1e-15)
        assert blk.dx[0, 0] == pytest.approx(d1 * 1.0, rel=1e-15)
        assert blk.dy[0, 0] == pytest.approx(d1 * 2.0, rel=1e-15)
        assert blk.lap[0, 0] == pytest.approx(d2 * (1.0 + 4.0), rel=1e-14)
        assert blk.dxx[0, 0] == pytest.approx(d2 * 1.0, rel=1e-14)
        assert blk.dxy[0, 0] == pytest.approx(d2 * 2.0, rel=1e-14)
        assert blk.dyy[0, 0] == pytest.approx(d2 * 4.0, rel=1e-14)

    @pytest.mark.parametrize("activation", ["tanh", "sin"])
    @pytest.mark.parametrize("dim", [2, 3])
    def test_first_derivatives_match_fd(self, activation, dim):
        net = small_net(activation, dim=dim)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, size=(40, dim))
        need = ("phi", "grad", "lap", "hess") + (("dt",) if dim == 3 else ())
        blk = basis.features(net, pts, need=need)
        h = 1e-6
        for k, mat in [(0, blk.dx), (1, blk.dy)] + ([(2, blk.dt)] if dim == 3 else []):
            e = np.zeros(dim)
            e[k] = h
            fd = (basis.features(net, pts + e, need=("phi",)).phi
                  - basis.features(net, pts - e, need=("phi",)).phi) / (2 * h)
            np.testing.assert_allclose(mat, fd, rtol=1e-7, atol=1e-9)

    @pytest.mark.parametrize("activation", ["tanh", "sin"])
    def test_second_derivatives_match_fd(self, activation):
        net = small_net(activation)
        rng = np.random.default_rng(1)
        pts = rng.uniform(-1, 1, size=(25, 2))
        blk = basis.features(net, pts, need=("phi", "grad", "lap", "hess"))
        h = 1e-4
        ex, ey = np.array([h, 0.0]), np.array([0.0, h])

        def phi(p):
            return basis.features(net, p, need=("phi",)).phi

        dxx = (phi(pts + ex) - 2 * blk.phi + phi(pts - ex)) / h**2
        dyy = (phi(pts + ey) - 2 * blk.phi + phi(pts - ey)) / h**2
        dxy = (phi(pts + ex + ey) - phi(pts + ex - ey)
               - phi(pts - ex + ey) + phi(pts - ex - ey)) / (4 * h**2)
        np.testing.assert_allclose(blk.dxx, dxx, rtol=1e-5, atol=1e-7)
        np.testing.assert_allclose(blk.dyy, dyy, rtol=1e-5, atol=1e-7)
        np.testing.assert_allclose(blk.dxy, dxy, rtol=1e-5, atol=1e-7)
        np.testing.assert_allclose(blk.lap, blk.dxx + blk.dyy, rtol=1e-13)

    def test_spacetime_laplacian_is_spatial_only(self):
        net = small_net(dim=3)
        rng = np.random.default_rng(2)
        pts = rng.uniform(-1, 1, size=(10, 3))
        blk = basis.features(net, pts, need=("phi", "lap", "hess"))
        np.testing.assert_allclose(blk.lap, blk.dxx + blk.dyy, rtol=1e-13)

    def test_normal_derivative_projection(self):
        net = small_net()
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, size=(15, 2))
        normals = rng.normal(size=(15, 2))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        blk = basis.features(net, pts, normals=normals,
                             need=("phi", "grad", "dn"))
        expect = normals[:, :1] * blk.dx + normals[:, 1:2] * blk.dy
        np.testing.assert_allclose(blk.dn, expect, rtol=1e-14)

    def test_need_errors(self):
        net2, net3 = small_net(dim=2), small_net(dim=3)
        pts2 = np.zeros((4, 2))
        with pytest.raises(ShapeError):
            basis.features(net2, pts2, need=("phi", "dt"))
        with pytest.raises(ShapeError):
            basis.features(net2, pts2, need=("phi", "dn"))  # no normals
        with pytest.raises(ShapeError):
            basis.features(net2, np.zeros((4, 3)), need=("phi",))
        with pytest.raises(ShapeError):
            basis.features(net3, pts2, need=("phi",))
        with pytest.raises(ShapeError):
            basis.features(net2, pts2, need=("phi", "curl"))

    def test_unrequested_blocks_are_none(self):
        net = small_net()
        blk = basis.features(net, np.zeros((3, 2)), need=("phi",))
        assert blk.dx is None and blk.lap is None and blk.dxx is None


class TestEvalState:
    def test_against_direct_summation(self):
        net = small_net(m=5)
        rng = np.random.default_rng(4)
        alpha = rng.normal(size=5)
        pts = rng.uniform(-1, 1, size=(9, 2))
        blk = basis.features(net, pts, need=("phi", "grad", "lap"))
        state = basis.eval_state(alpha, blk)
        # loop the sum by hand
        u = np.zeros(9)
        for j in range(5):
            z = pts @ net.W[j] + net.b[j]
            u += alpha[j] * np.tanh(z)
        np.testing.assert_allclose(state.u, u, rtol=1e-13)

    def test_accepts_net_with_weights(self):
        net = small_net(m=6)
        rng = np.random.default_rng(5)
        object.__setattr__(net, "alpha", rng.normal(size=6))
        pts = rng.uniform(-1, 1, size=(4, 2))
        blk = basis.features(net, pts, need=("phi", "grad"))
        a = basis.eval_state(net, blk)
        b = basis.eval_state(net.alpha, blk)
        np.testing.assert_array_equal(a.u, b.u)
        np.testing.assert_array_equal(a.gx, b.gx)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_linearity_in_alpha(self, seed):
        net = small_net(m=8)
        rng = np.random.default_rng(seed)
        a1, a2 = rng.normal(size=8), rng.normal(size=8)
        pts = rng.uniform(-1, 1, size=(6, 2))
        blk = basis.features(net, pts, need=("phi", "grad", "lap"))
        s1 = basis.eval_state(a1, blk)
        s2 = basis.eval_state(a2, blk)
        s12 = basis.eval_state(a1 + 2.5 * a2, blk)
        np.testing.assert_allclose(s12.u, s1.u + 2.5 * s2.u,
                                   rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(s12.lap, s1.lap + 2.5 * s2.lap,
                                   rtol=1e-12, atol=1e-12)

    def test_absent_blocks_stay_none(self):
        net = small_net()
        blk = basis.features(net, np.zeros((3, 2)), need=("phi",))
        state = basis.eval_state(np.zeros(7), blk)
        assert state.gx is None and state.lap is None and state.dt is None
