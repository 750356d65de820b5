import numpy as np
import pytest

from src.errors import InputShapeError
from src.models.hyper import LossWeights, PlanConfig
from src.numkit.gradcheck import gradient_check
from src.numkit.nets import DenseNet, flatten_params, forward
from src.numkit.optim import sgd_step
from src.numkit.rng import SeededRng
from src.planning import (
    ImitationBatch,
    WorldModel,
    encode,
    model_losses,
    plan_cem,
    plan_mppi,
    rollout_score,
    shift_plan,
)
from src.planning.planners import mppi_weights, refit_elites

QUADRATIC_LIMITS = np.array([[-2.0, 2.0]])


class _NegSquaredSum:
    """Reward -(z + a)^2 for a 1-dim latent and 1-dim action."""

    def __call__(self, x):
        x = np.atleast_2d(x)
        return -((x[:, :1] + x[:, 1:]) ** 2)


class _Identity:
    def __call__(self, x):
        return np.atleast_2d(x)[:, :1]


def _const(in_dim: int, c: float) -> DenseNet:
    return DenseNet((in_dim, 1), (np.zeros((1, in_dim)),), (np.array([c]),), "identity")


def _quadratic_model() -> WorldModel:
    return WorldModel(
        encoder=DenseNet.init([1, 1], SeededRng(0), activation="identity"),
        dynamics=_Identity(),
        reward_head=_NegSquaredSum(),
        value_heads=(),
        action_limits=QUADRATIC_LIMITS,
    )


def _random_model(seed: int, obs_dim: int = 3, latent: int = 2, a_dim: int = 2) -> WorldModel:
    rng = SeededRng(seed)
    return WorldModel(
        encoder=DenseNet.init([obs_dim, 5, latent], rng.spawn("enc")),
        dynamics=DenseNet.init([latent + a_dim, 5, latent], rng.spawn("dyn")),
        reward_head=DenseNet.init([latent + a_dim, 5, 1], rng.spawn("rew")),
        value_heads=tuple(
            DenseNet.init([latent + a_dim, 5, 1], rng.spawn("val", i)) for i in range(2)
        ),
        action_limits=np.tile([-1.0, 1.0], (a_dim, 1)),
    )


def _batch(seed: int, n: int = 5, obs_dim: int = 3, a_dim: int = 2) -> ImitationBatch:
    rng = np.random.default_rng(seed)
    return ImitationBatch(
        obs=rng.normal(size=(n, obs_dim)),
        actions=rng.uniform(-1.0, 1.0, size=(n, a_dim)),
        rewards=rng.normal(size=n),
        next_obs=rng.normal(size=(n, obs_dim)),
        dones=np.zeros(n),
    )


class TestEncode:
    def test_zero_encoder_gives_zero_latent(self):
        m = _random_model(0)
        zero = WorldModel(
            DenseNet.zeros([3, 4, 2]), m.dynamics, m.reward_head, m.value_heads, m.action_limits
        )
        np.testing.assert_array_equal(encode(zero, np.ones((4, 3))), np.zeros((4, 2)))

    def test_encode_matches_manual_layers(self):
        m = _random_model(1)
        obs = np.array([0.5, -1.0, 2.0])
        w1, w2 = m.encoder.weights
        b1, b2 = m.encoder.biases
        np.testing.assert_allclose(encode(m, obs), w2 @ np.tanh(w1 @ obs + b1) + b2, atol=1e-14)


class TestRolloutScore:
    def test_single_step_without_value_is_the_reward(self):
        m = _random_model(2)
        z, a = np.array([0.1, -0.3]), np.array([[0.5, 0.2]])
        cfg = PlanConfig(horizon=1, mu_value=0.0)
        expected = forward(m.reward_head, np.concatenate([z, a[0]]))[0]
        assert rollout_score(m, z, a, cfg) == pytest.approx(expected, abs=1e-14)

    def test_constant_heads(self):
        m = WorldModel(
            encoder=DenseNet.init([1, 1], SeededRng(0)),
            dynamics=DenseNet.init([2, 1], SeededRng(1)),
            reward_head=_const(2, 1.0),
            value_heads=(_const(2, 2.0),),
            action_limits=QUADRATIC_LIMITS,
        )
        cfg = PlanConfig(horizon=3, mu_value=0.5, gamma=1.0)
        assert rollout_score(m, [0.0], np.zeros((3, 1)), cfg) == pytest.approx(6.0)

    def test_terminal_value_only_counts_the_last_step(self):
        m = WorldModel(
            encoder=DenseNet.init([1, 1], SeededRng(0)),
            dynamics=DenseNet.init([2, 1], SeededRng(1)),
            reward_head=_const(2, 1.0),
            value_heads=(_const(2, 2.0),),
            action_limits=QUADRATIC_LIMITS,
        )
        cfg = PlanConfig(horizon=3, mu_value=0.5, gamma=1.0, terminal_value_only=True)
        assert rollout_score(m, [0.0], np.zeros((3, 1)), cfg) == pytest.approx(4.0)

    def test_zero_discount_keeps_only_the_first_term(self):
        m = _random_model(3)
        z = np.array([0.2, 0.4])
        seq = np.random.default_rng(0).uniform(-1.0, 1.0, size=(4, 2))
        full = rollout_score(m, z, seq, PlanConfig(horizon=4, gamma=0.0))
        first = rollout_score(m, z, seq[:1], PlanConfig(horizon=1, gamma=0.0))
        assert full == pytest.approx(first, abs=1e-14)

    def test_action_shape_is_checked(self):
        with pytest.raises(InputShapeError):
            rollout_score(_random_model(0), np.zeros(2), np.zeros((3, 5)), PlanConfig(horizon=3))


class TestPlanners:
    @pytest.mark.parametrize("method", [plan_mppi, plan_cem])
    def test_quadratic_toy_matches_the_grid_optimum(self, method):
        m = _quadratic_model()
        cfg = PlanConfig(
            horizon=1,
            n_samples=512,
            n_elites=32,
            temperature=0.05,
            n_iters=6,
            mu_value=0.0,
            init_std=1.0,
        )
        rng = np.random.default_rng(0)
        grid = np.linspace(-2.0, 2.0, 4001)
        hits = 0
        for trial in range(100):
            z = np.array([rng.uniform(-1.5, 1.5)])
            best = grid[np.argmax(-((z[0] + grid) ** 2))]
            result = method(m, z, cfg, SeededRng(trial))
            hits += abs(result.actions[0, 0] - best) <= 0.05
        assert hits >= 95

    @pytest.mark.parametrize("method", [plan_mppi, plan_cem])
    def test_best_score_never_drops(self, method):
        m = _random_model(4)
        cfg = PlanConfig(horizon=5, n_samples=64, n_elites=8, n_iters=8)
        result = method(m, np.array([0.3, -0.2]), cfg, SeededRng(1))
        assert len(result.best_scores) == 8
        assert np.all(np.diff(result.best_scores) >= 0.0)

    @pytest.mark.parametrize("method", [plan_mppi, plan_cem])
    def test_zero_iterations_return_the_nominal(self, method):
        m = _random_model(5)
        nominal = np.random.default_rng(1).uniform(-1.0, 1.0, size=(4, 2))
        cfg = PlanConfig(horizon=4, n_iters=0)
        result = method(m, np.zeros(2), cfg, SeededRng(0), nominal)
        np.testing.assert_array_equal(result.actions, nominal)
        assert result.best_scores == []

    def test_plans_stay_inside_the_action_box(self):
        m = _random_model(6)
        cfg = PlanConfig(horizon=6, n_samples=64, n_elites=8, init_std=5.0)
        result = plan_mppi(m, np.zeros(2), cfg, SeededRng(2))
        assert np.all(np.abs(result.actions) <= 1.0)

    def test_wrong_nominal_shape_raises(self):
        with pytest.raises(InputShapeError):
            plan_mppi(
                _random_model(0), np.zeros(2), PlanConfig(horizon=3), SeededRng(0), np.zeros((2, 2))
            )

    def test_near_zero_temperature_picks_the_best_sample(self):
        scores = np.array([0.1, 0.7, 0.3, 0.69])
        np.testing.assert_allclose(mppi_weights(scores, 1e-6), [0.0, 1.0, 0.0, 0.0], atol=1e-12)

    def test_full_elite_set_refits_sample_moments(self):
        samples = np.random.default_rng(2).normal(size=(50, 3, 2))
        scores = np.random.default_rng(3).normal(size=50)
        mean, std = refit_elites(samples, scores, 50)
        np.testing.assert_allclose(mean, samples.mean(axis=0), atol=1e-14)
        np.testing.assert_allclose(std, samples.std(axis=0), atol=1e-14)

    def test_shift_plan_repeats_the_last_action(self):
        seq = np.array([[1.0], [2.0], [3.0]])
        np.testing.assert_array_equal(shift_plan(seq), [[2.0], [3.0], [3.0]])


class TestModelLosses:
    def test_realizable_batch_has_zero_loss(self):
        m = WorldModel(
            encoder=DenseNet.zeros([3, 2]),
            dynamics=DenseNet.zeros([4, 2]),
            reward_head=DenseNet.zeros([4, 1]),
            value_heads=(DenseNet.zeros([4, 1]),),
            action_limits=np.tile([-1.0, 1.0], (2, 1)),
        )
        b = _batch(0)
        batch = ImitationBatch(b.obs, b.actions, np.zeros(len(b)), b.next_obs, b.dones)
        losses = model_losses(m, batch, value_targets=np.zeros(len(b)))
        assert losses.total == 0.0

    def test_head_gradients_match_central_differences(self):
        m = _random_model(7)
        batch = _batch(1)
        y = np.random.default_rng(4).normal(size=len(batch))
        losses = model_losses(m, batch, value_targets=y)

        def with_dynamics(net):
            return model_losses(m.with_heads(dynamics=net), batch, value_targets=y).total

        def with_reward(net):
            return model_losses(m.with_heads(reward_head=net), batch, value_targets=y).total

        assert gradient_check(with_dynamics, losses.dynamics_grads, m.dynamics) < 1e-3
        assert gradient_check(with_reward, losses.reward_grads, m.reward_head) < 1e-3
        for i, g in enumerate(losses.value_grads):

            def with_value(net, i=i):
                heads = m.value_heads[:i] + (net,) + m.value_heads[i + 1 :]
                return model_losses(m.with_heads(value_heads=heads), batch, value_targets=y).total

            assert gradient_check(with_value, g, m.value_heads[i]) < 1e-3

    def test_encoder_gradient_matches_central_differences(self):
        # With the consistency term off, the loss depends on the encoder only through z.
        m = _random_model(8)
        batch = _batch(2)
        weights = LossWeights(dynamics=0.0, reward=1.0, value=1.0)
        y = np.random.default_rng(5).normal(size=len(batch))
        losses = model_losses(m, batch, weights, value_targets=y)

        def with_encoder(net):
            return model_losses(m.with_heads(encoder=net), batch, weights, value_targets=y).total

        assert gradient_check(with_encoder, losses.encoder_grads, m.encoder) < 1e-3

    def test_zero_weight_head_is_left_unchanged(self):
        m = _random_model(9)
        losses = model_losses(m, _batch(3), LossWeights(dynamics=0.0))
        stepped = sgd_step(m.dynamics, losses.dynamics_grads, 0.5)
        np.testing.assert_array_equal(flatten_params(stepped), flatten_params(m.dynamics))

    def test_without_targets_the_value_loss_is_zero(self):
        losses = model_losses(_random_model(10), _batch(4))
        assert losses.value == 0.0
        assert all(np.all(g.flat() == 0.0) for g in losses.value_grads)
