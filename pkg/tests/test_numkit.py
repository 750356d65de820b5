import numpy as np
import pytest

from src.errors import InputShapeError, TrainingDivergedError
from src.numkit import (
    Adam,
    DenseNet,
    DiagGaussian,
    SeededRng,
    backward,
    entropy_categorical,
    forward,
    gaussian_entropy,
    kl_categorical,
    log_softmax,
    polyak,
    sgd_step,
    softmax,
    softmax_backward,
)
from src.numkit.checkpoint import load_network, save_network
from src.numkit.distributions import HALF_LOG_2PI_E, gaussian_log_prob, is_simplex
from src.numkit.gradcheck import gradient_check, numerical_gradient, relative_error
from src.numkit.nets import flatten_params, unflatten_params


def _random_net(rng: np.random.Generator, activation: str) -> DenseNet:
    sizes = [int(rng.integers(1, 5))] + [int(rng.integers(2, 7)) for _ in range(rng.integers(0, 3))]
    sizes.append(int(rng.integers(1, 4)))
    return DenseNet.init(sizes, SeededRng(int(rng.integers(0, 2**31))), activation=activation)


class TestDenseNet:
    def test_forward_matches_hand_computation(self):
        w1 = np.array([[1.0, -1.0], [0.5, 2.0]])
        b1 = np.array([0.1, -0.2])
        w2 = np.array([[2.0, 1.0]])
        b2 = np.array([0.3])
        net = DenseNet((2, 2, 1), (w1, w2), (b1, b2), "tanh")
        x = np.array([0.2, -0.4])
        expected = w2 @ np.tanh(w1 @ x + b1) + b2
        np.testing.assert_allclose(forward(net, x), expected, rtol=0, atol=1e-15)

    def test_batched_forward_equals_rowwise(self):
        net = DenseNet.init([3, 5, 2], SeededRng(1))
        x = SeededRng(2).normal(size=(4, 3))
        batched = forward(net, x)
        for i in range(4):
            np.testing.assert_allclose(batched[i], forward(net, x[i]), atol=1e-15)

    def test_zero_last_predicts_zero(self):
        net = DenseNet.init([3, 4, 2], SeededRng(0), zero_last=True)
        np.testing.assert_array_equal(net(np.ones(3)), np.zeros(2))

    def test_wrong_input_width_raises(self):
        net = DenseNet.init([3, 2], SeededRng(0))
        with pytest.raises(InputShapeError):
            forward(net, np.ones(4))

    def test_non_finite_parameters_are_rejected(self):
        w = np.array([[np.nan]])
        with pytest.raises(TrainingDivergedError):
            DenseNet((1, 1), (w,), (np.zeros(1),))

    def test_flatten_unflatten_restores_parameters(self):
        net = DenseNet.init([2, 3, 1], SeededRng(5))
        rebuilt = unflatten_params(net, flatten_params(net))
        x = np.array([0.3, -0.7])
        np.testing.assert_array_equal(rebuilt(x), net(x))


class TestBackwardFidelity:
    @pytest.mark.parametrize("activation", ["tanh", "identity"])
    def test_parameter_gradients_match_central_differences(self, activation):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(60):
            net = _random_net(rng, activation)
            x = rng.normal(size=(3, net.in_dim))
            c = rng.normal(size=(3, net.out_dim))
            grads = backward(net, x, c)
            err = gradient_check(lambda n: float(np.sum(c * forward(n, x))), grads, net)
            worst = max(worst, err)
        assert worst < 1e-4

    def test_input_gradient_matches_central_differences(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            net = _random_net(rng, "tanh")
            x = rng.normal(size=net.in_dim)
            c = rng.normal(size=net.out_dim)
            analytic = backward(net, x, c).inputs
            numeric = numerical_gradient(lambda v: float(c @ forward(net, v)), x)
            assert relative_error(analytic, numeric) < 1e-4

    def test_mismatched_cotangent_raises(self):
        net = DenseNet.init([2, 2], SeededRng(0))
        with pytest.raises(InputShapeError):
            backward(net, np.ones(2), np.ones(3))


class TestSimplexAndKL:
    def test_softmax_is_simplex_even_for_huge_logits(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            logits = rng.normal(scale=300.0, size=int(rng.integers(1, 8)))
            assert is_simplex(softmax(logits))

    def test_log_softmax_matches_log_of_softmax(self):
        z = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(log_softmax(z), np.log(softmax(z)), atol=1e-14)

    def test_kl_is_nonnegative_and_zero_on_identical_arguments(self):
        rng = np.random.default_rng(4)
        for _ in range(500):
            k = int(rng.integers(2, 6))
            p, q = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
            assert kl_categorical(p, q) >= 0.0
            assert kl_categorical(p, p) <= 1e-12

    def test_kl_of_distinct_arguments_is_positive(self):
        assert kl_categorical([0.5, 0.5], [0.9, 0.1]) > 1e-3

    def test_kl_treats_zero_mass_as_zero(self):
        np.testing.assert_allclose(kl_categorical([1.0, 0.0], [0.5, 0.5]), np.log(2.0), atol=1e-15)

    def test_kl_floors_zero_denominator(self):
        assert np.isfinite(kl_categorical([0.5, 0.5], [1.0, 0.0]))

    def test_entropy_of_uniform(self):
        np.testing.assert_allclose(entropy_categorical(np.full(4, 0.25)), np.log(4.0), atol=1e-15)

    def test_softmax_backward_matches_central_differences(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            z = rng.normal(size=4)
            g = rng.normal(size=4)
            analytic = softmax_backward(softmax(z), g)
            numeric = numerical_gradient(lambda v: float(g @ softmax(v)), z)
            assert relative_error(analytic, numeric) < 1e-6


class TestGaussian:
    def test_entropy_formula(self):
        d = DiagGaussian(mean=np.zeros(2), std=np.array([1.0, 2.0]))
        expected = 2 * HALF_LOG_2PI_E + np.log(2.0)
        np.testing.assert_allclose(gaussian_entropy(d), expected, atol=1e-14)

    def test_log_prob_at_mean(self):
        d = DiagGaussian(mean=np.array([1.0]), std=np.array([1.0]))
        expected = -0.5 * np.log(2 * np.pi)
        np.testing.assert_allclose(gaussian_log_prob(d, [1.0]), expected, atol=1e-15)

    def test_nonpositive_std_is_rejected(self):
        with pytest.raises(InputShapeError):
            DiagGaussian(mean=np.zeros(1), std=np.zeros(1))


class TestOptimizers:
    def test_first_adam_step_moves_by_lr_times_sign(self):
        net = DenseNet.init([2, 2], SeededRng(0))
        grads = backward(net, np.array([1.0, -2.0]), np.array([0.5, -3.0]))
        stepped = Adam(lr=0.01).step(net, grads)
        expected = flatten_params(net) - 0.01 * np.sign(grads.flat())
        np.testing.assert_allclose(flatten_params(stepped), expected, atol=1e-8)

    def test_sgd_step(self):
        net = DenseNet.init([1, 1], SeededRng(0), activation="identity")
        grads = backward(net, np.array([2.0]), np.array([1.0]))
        stepped = sgd_step(net, grads, 0.1)
        expected = flatten_params(net) - 0.1 * grads.flat()
        np.testing.assert_allclose(flatten_params(stepped), expected)

    def test_polyak_endpoints(self):
        a = DenseNet.init([2, 3], SeededRng(1))
        b = DenseNet.init([2, 3], SeededRng(2))
        np.testing.assert_array_equal(flatten_params(polyak(a, b, 1.0)), flatten_params(b))
        np.testing.assert_allclose(
            flatten_params(polyak(a, b, 0.25)),
            0.75 * flatten_params(a) + 0.25 * flatten_params(b),
            atol=1e-15,
        )


class TestSeededRng:
    def test_same_seed_same_draws(self):
        np.testing.assert_array_equal(SeededRng(42).normal(size=5), SeededRng(42).normal(size=5))

    def test_spawn_is_stable_and_label_dependent(self):
        root = SeededRng(42)
        assert root.spawn("a", 1).seed == SeededRng(42).spawn("a", 1).seed
        assert root.spawn("a", 1).seed != root.spawn("a", 2).seed


class TestNetworkCheckpoint:
    def test_saved_network_predicts_identically(self, tmp_path):
        net = DenseNet.init([3, 4, 2], SeededRng(8), activation="relu")
        path = tmp_path / "net.json"
        save_network(net, path)
        loaded = load_network(path)
        x = SeededRng(9).normal(size=(5, 3))
        np.testing.assert_array_equal(loaded(x), net(x))
        assert loaded.activation == "relu"
