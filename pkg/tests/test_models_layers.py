import numpy as np
import pytest

from gradcheck import finite_difference_check, scalarize
from tempograph import DegenerateInputError, ValidationError
from tempograph.models.autodiff import Tensor
from tempograph.models.graph import (
    power_iteration_lambda_max,
    random_walk_matrices,
    scaled_laplacian,
)
from tempograph.models.layers import (
    DcgruParams,
    TemporalConvParams,
    cheb_graph_conv,
    dcgru_step,
    diffusion_conv,
    temporal_gated_conv,
)


def leaf(shape, seed, scale=0.5):
    rng = np.random.default_rng(seed)
    return Tensor(rng.normal(scale=scale, size=shape), requires_grad=True)


def ring_supports(n=3, seed=0):
    rng = np.random.default_rng(seed)
    W = np.zeros((n, n))
    for i in range(n):
        W[i, (i + 1) % n] = rng.uniform(0.5, 1.0)
        W[i, i] = 1.0
    return random_walk_matrices(W)


class TestRandomWalkMatrices:
    def test_two_cycle(self):
        W = np.array([[0.0, 1.0], [1.0, 0.0]])
        forward, backward = random_walk_matrices(W)
        np.testing.assert_array_equal(forward, [[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(backward, [[0.0, 1.0], [1.0, 0.0]])

    def test_identity(self):
        forward, backward = random_walk_matrices(np.eye(3))
        np.testing.assert_array_equal(forward, np.eye(3))
        np.testing.assert_array_equal(backward, np.eye(3))

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        W = rng.uniform(0.0, 2.0, size=(5, 5))
        forward, backward = random_walk_matrices(W)
        np.testing.assert_allclose(forward.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(backward.sum(axis=1), 1.0, atol=1e-12)

    def test_isolated_node_rejected(self):
        W = np.zeros((2, 2))
        W[0, 0] = 1.0
        with pytest.raises(DegenerateInputError, match="1"):
            random_walk_matrices(W)


class TestScaledLaplacian:
    def test_self_loop_only_graph_gives_minus_identity(self):
        np.testing.assert_allclose(scaled_laplacian(np.eye(4)), -np.eye(4), atol=1e-12)

    def test_two_cycle_spectrum(self):
        W = np.array([[0.0, 1.0], [1.0, 0.0]])
        L_tilde = scaled_laplacian(W)
        eigenvalues = np.sort(np.linalg.eigvalsh(L_tilde))
        np.testing.assert_allclose(eigenvalues, [-1.0, 1.0], atol=1e-9)

    def test_spectrum_in_unit_interval(self):
        rng = np.random.default_rng(3)
        W = rng.uniform(0.0, 1.0, size=(6, 6))
        np.fill_diagonal(W, 1.0)
        eigenvalues = np.linalg.eigvalsh(scaled_laplacian(W))
        assert eigenvalues.min() >= -1.0 - 1e-9
        assert eigenvalues.max() <= 1.0 + 1e-9

    def test_power_iteration_matches_dense_eigensolver(self):
        rng = np.random.default_rng(11)
        W = rng.uniform(0.0, 1.0, size=(6, 6))
        W = np.maximum(W, W.T)
        np.fill_diagonal(W, 1.0)
        degrees = W.sum(axis=1)
        inv_sqrt = 1.0 / np.sqrt(degrees)
        L = np.eye(6) - (inv_sqrt[:, None] * W) * inv_sqrt[None, :]
        expected = float(np.linalg.eigvalsh(L).max())
        assert power_iteration_lambda_max(L, tol=1e-12) == pytest.approx(expected, abs=1e-6)

    def test_zero_degree_rejected(self):
        W = np.zeros((3, 3))
        with pytest.raises(DegenerateInputError):
            scaled_laplacian(W)

    def test_asymmetric_input_symmetrized(self):
        W = np.array([[1.0, 0.8], [0.0, 1.0]])
        L_tilde = scaled_laplacian(W)
        np.testing.assert_allclose(L_tilde, L_tilde.T, atol=1e-12)


class TestDiffusionConv:
    def test_k0_ignores_graph(self):
        supports_a = list(ring_supports(3, seed=0))
        supports_b = list(ring_supports(3, seed=9))
        X = leaf((2, 3, 2), 1)
        theta = leaf((1, 2, 4), 2)
        out_a = diffusion_conv(X, supports_a, theta, K=0)
        out_b = diffusion_conv(X, supports_b, theta, K=0)
        np.testing.assert_array_equal(out_a.data, out_b.data)
        np.testing.assert_allclose(out_a.data, np.matmul(X.data, theta.data[0]))

    def test_zero_input_gives_zero(self):
        supports = list(ring_supports())
        X = Tensor(np.zeros((1, 3, 2)))
        theta = leaf((1 + 2 * 2, 2, 4), 3)
        out = diffusion_conv(X, supports, theta, K=2)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_three_node_path_hand_matrix_arithmetic(self):
        # path graph 0-1-2 with self-loops, K=1, one support
        W = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
        forward = W / W.sum(axis=1, keepdims=True)
        X = np.array([[1.0], [2.0], [3.0]])
        theta0 = np.array([[2.0]])
        theta1 = np.array([[-1.0]])
        theta = Tensor(np.stack([theta0, theta1]), requires_grad=True)
        out = diffusion_conv(Tensor(X), [forward], theta, K=1)
        expected = X @ theta0 + forward @ X @ theta1
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_theta_shape_validated(self):
        supports = list(ring_supports())
        with pytest.raises(ValidationError, match="coefficient matrices"):
            diffusion_conv(leaf((1, 3, 2), 0), supports, leaf((3, 2, 4), 1), K=2)

    def test_gradients(self):
        supports = list(ring_supports())
        X = leaf((2, 3, 2), 4)
        theta = leaf((1 + 2 * 2, 2, 3), 5)
        finite_difference_check(
            lambda: scalarize(diffusion_conv(X, supports, theta, K=2)),
            {"X": X, "theta": theta},
        )


def make_dcgru_params(n_mat, in_features, hidden, seed, bias_update=None):
    rng = np.random.default_rng(seed)

    def tensor(shape, scale=0.4):
        return Tensor(rng.normal(scale=scale, size=shape), requires_grad=True)

    update_bias = tensor((hidden,))
    if bias_update is not None:
        update_bias = Tensor(np.full(hidden, bias_update), requires_grad=True)
    return DcgruParams(
        theta_reset=tensor((n_mat, in_features + hidden, hidden)),
        bias_reset=tensor((hidden,)),
        theta_update=tensor((n_mat, in_features + hidden, hidden)),
        bias_update=update_bias,
        theta_candidate=tensor((n_mat, in_features + hidden, hidden)),
        bias_candidate=tensor((hidden,)),
    )


class TestDcgruStep:
    def test_saturated_update_gate_keeps_state(self):
        supports = list(ring_supports())
        params = make_dcgru_params(5, 1, 3, seed=0, bias_update=40.0)
        x = leaf((2, 3, 1), 1)
        h_prev = leaf((2, 3, 3), 2)
        h = dcgru_step(x, h_prev, params, supports, K=2)
        np.testing.assert_allclose(h.data, h_prev.data, atol=1e-12)

    def test_zero_parameters_zero_state(self):
        supports = list(ring_supports())
        zero = lambda shape: Tensor(np.zeros(shape), requires_grad=True)
        params = DcgruParams(
            theta_reset=zero((5, 4, 3)),
            bias_reset=zero((3,)),
            theta_update=zero((5, 4, 3)),
            bias_update=zero((3,)),
            theta_candidate=zero((5, 4, 3)),
            bias_candidate=zero((3,)),
        )
        x = leaf((1, 3, 1), 3)
        h = dcgru_step(x, Tensor(np.zeros((1, 3, 3))), params, supports, K=2)
        # u = 0.5 and c = tanh(0) = 0, so the new state stays exactly zero
        np.testing.assert_array_equal(h.data, 0.0)

    def test_gradients_through_all_parameters(self):
        supports = list(ring_supports())
        params = make_dcgru_params(5, 1, 3, seed=4)
        x = leaf((2, 3, 1), 5)
        h_prev = leaf((2, 3, 3), 6)
        tensors = {"x": x, "h_prev": h_prev}
        tensors.update(params.tensors())
        finite_difference_check(
            lambda: scalarize(dcgru_step(x, h_prev, params, supports, K=2)), tensors
        )


class TestChebGraphConv:
    def test_ks1_is_graph_independent(self):
        X = leaf((2, 4, 3), 0)
        theta = leaf((1, 3, 5), 1)
        L = scaled_laplacian(np.eye(4))
        out = cheb_graph_conv(X, L, theta, Ks=1)
        np.testing.assert_allclose(out.data, np.matmul(X.data, theta.data[0]))

    def test_zero_laplacian_recursion(self):
        # T_0 = I, T_1 = 0, T_2 = -I at L~ = 0: output is X (theta0 - theta2)
        X = leaf((1, 3, 2), 2)
        theta = leaf((3, 2, 2), 3)
        out = cheb_graph_conv(X, np.zeros((3, 3)), theta, Ks=3)
        expected = np.matmul(X.data, theta.data[0] - theta.data[2])
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_gradients(self):
        W = np.array([[1.0, 0.6, 0.0], [0.6, 1.0, 0.4], [0.0, 0.4, 1.0]])
        L = scaled_laplacian(W)
        X = leaf((2, 3, 2), 4)
        theta = leaf((3, 2, 3), 5)
        finite_difference_check(
            lambda: scalarize(cheb_graph_conv(X, L, theta, Ks=3)), {"X": X, "theta": theta}
        )


class TestTemporalGatedConv:
    def test_kt1_identity_passthrough(self):
        # weight maps the single input channel onto the linear half untouched;
        # a huge gate bias opens the sigmoid fully
        c, h = 2, 2
        weight = np.zeros((c, 2 * h))
        weight[:, :h] = np.eye(c)
        params = TemporalConvParams(
            weight=Tensor(weight, requires_grad=True),
            bias_linear=Tensor(np.zeros(h), requires_grad=True),
            bias_gate=Tensor(np.full(h, 50.0), requires_grad=True),
        )
        X = leaf((2, 5, 3, c), 0)
        out = temporal_gated_conv(X, params, Kt=1)
        np.testing.assert_allclose(out.data, X.data, atol=1e-12)

    def test_constant_input_constant_output(self):
        rng = np.random.default_rng(1)
        params = TemporalConvParams(
            weight=Tensor(rng.normal(size=(3 * 2, 8)), requires_grad=True),
            bias_linear=Tensor(rng.normal(size=4), requires_grad=True),
            bias_gate=Tensor(rng.normal(size=4), requires_grad=True),
        )
        frame = rng.normal(size=(1, 1, 3, 2))
        X = Tensor(np.tile(frame, (1, 7, 1, 1)))
        out = temporal_gated_conv(X, params, Kt=3)
        assert out.shape == (1, 5, 3, 4)
        np.testing.assert_allclose(out.data, np.tile(out.data[:, :1], (1, 5, 1, 1)), atol=1e-12)

    def test_output_length(self):
        params = TemporalConvParams(
            weight=leaf((3 * 1, 4), 2),
            bias_linear=leaf((2,), 3),
            bias_gate=leaf((2,), 4),
        )
        out = temporal_gated_conv(leaf((2, 12, 3, 1), 5), params, Kt=3)
        assert out.shape == (2, 10, 3, 2)

    def test_too_short_time_axis(self):
        params = TemporalConvParams(
            weight=leaf((3, 4), 6), bias_linear=leaf((2,), 7), bias_gate=leaf((2,), 8)
        )
        with pytest.raises(ValidationError, match="shorter"):
            temporal_gated_conv(leaf((1, 2, 3, 1), 9), params, Kt=3)

    def test_gradients(self):
        params = TemporalConvParams(
            weight=leaf((2 * 2, 6), 10),
            bias_linear=leaf((3,), 11),
            bias_gate=leaf((3,), 12),
        )
        X = leaf((2, 4, 3, 2), 13)
        tensors = {"X": X}
        tensors.update(params.tensors())
        finite_difference_check(
            lambda: scalarize(temporal_gated_conv(X, params, Kt=2)), tensors
        )
