"""Forward corruption, training loss, reverse sampling."""

import math
from dataclasses import dataclass

import numpy as np
import pytest

from diffscen import autodiff as ad
from diffscen.denoiser import DenoiserConfig, init_params
from diffscen.diffusion import (
    DiffusionModel,
    SampleDraw,
    draw_training_noise,
    forward_sample,
    reverse_step,
    sample_chain,
    sample_scenarios,
    training_loss,
    training_loss_taped,
)
from diffscen.metrics import ScenarioSet
from diffscen.schedule import ConfigError, make_cosine, make_linear, posterior_mean_coeffs

TINY = DenoiserConfig(n_blocks=2, res_channels=3, hidden=6, time_embed_dim=4, seq_len=6)


@dataclass
class Pair:
    forecast: np.ndarray
    actual: np.ndarray


def tiny_model(seed=0, steps=10, variance="posterior", random_weights=True):
    rng = np.random.default_rng(seed)
    params = init_params(TINY, rng)
    if random_weights:
        for p in params.values():
            p.data = rng.normal(size=p.data.shape) * 0.3
    return DiffusionModel(sched=make_cosine(steps), params=params,
                          config=TINY, variance=variance)


def make_batch(n, seed=0):
    rng = np.random.default_rng(seed)
    return [Pair(forecast=rng.uniform(size=6), actual=rng.uniform(size=6))
            for _ in range(n)]


class TestForwardSample:
    def test_zero_noise_scales_signal(self):
        sched = make_linear(10)
        x0 = np.arange(6.0)
        for t in (1, 5, 10):
            out = forward_sample(x0, t, np.zeros(6), sched)
            np.testing.assert_array_equal(out, math.sqrt(sched.alpha_bar[t]) * x0)

    def test_zero_signal_scales_noise(self):
        sched = make_linear(10)
        eps = np.random.default_rng(0).normal(size=6)
        out = forward_sample(np.zeros(6), 7, eps, sched)
        np.testing.assert_array_equal(out, math.sqrt(1.0 - sched.alpha_bar[7]) * eps)

    def test_rejects_step_out_of_range(self):
        sched = make_linear(10)
        for t in (0, 11):
            with pytest.raises(ValueError, match="range"):
                forward_sample(np.zeros(6), t, np.zeros(6), sched)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            forward_sample(np.zeros(6), 1, np.zeros(5), make_linear(10))

    def test_matches_iterated_chain_moments(self):
        # closed form vs the step-by-step corruption, Monte-Carlo
        sched = make_linear(50)
        x0 = np.linspace(0.1, 0.9, 6)
        n_chains = 5000
        t_stop = 30
        rng = np.random.default_rng(42)
        x = np.tile(x0, (n_chains, 1))
        for t in range(1, t_stop + 1):
            noise = rng.standard_normal((n_chains, 6))
            x = math.sqrt(1.0 - sched.beta[t]) * x + math.sqrt(sched.beta[t]) * noise
        mean_err = np.abs(x.mean(axis=0) - math.sqrt(sched.alpha_bar[t_stop]) * x0)
        mean_se = x.std(axis=0, ddof=1) / math.sqrt(n_chains)
        assert np.all(mean_err <= 4.0 * mean_se)
        var = x.var(axis=0, ddof=1)
        var_err = np.abs(var - (1.0 - sched.alpha_bar[t_stop]))
        var_se = var * math.sqrt(2.0 / (n_chains - 1))
        assert np.all(var_err <= 4.0 * var_se)


class TestTrainingLoss:
    def test_perfect_predictor_zero_loss(self):
        model = tiny_model()
        batch = make_batch(4)
        draws = draw_training_noise(4, model.sched, 6, np.random.default_rng(1))
        replay = iter(draws)
        loss = training_loss_taped(model, batch, draws, None,
                                   predictor=lambda x, t, c: next(replay).eps)
        assert float(loss.data) == 0.0

    def test_zero_head_loss_near_one(self):
        # untrained net predicts 0, so the loss is the mean of eps^2
        model = tiny_model(random_weights=False)
        batch = make_batch(400, seed=2)
        draws = draw_training_noise(400, model.sched, 6, np.random.default_rng(3))
        loss = training_loss_taped(model, batch, draws, None)
        assert abs(float(loss.data) - 1.0) < 0.12

    def test_batch_duplication_invariant(self):
        model = tiny_model(seed=4)
        batch = make_batch(5, seed=5)
        draws = draw_training_noise(5, model.sched, 6, np.random.default_rng(6))
        single = float(training_loss_taped(model, batch, draws, None).data)
        double = float(training_loss_taped(model, batch + batch, draws + draws, None).data)
        assert double == pytest.approx(single, abs=1e-12)

    def test_rejects_empty_batch(self):
        with pytest.raises(ValueError, match="nonempty"):
            training_loss_taped(tiny_model(), [], [], None)

    def test_rejects_draw_mismatch(self):
        model = tiny_model()
        with pytest.raises(ValueError, match="draws"):
            training_loss_taped(model, make_batch(3), [], None)

    def test_populates_gradients(self):
        model = tiny_model(seed=7)
        value = training_loss(model, make_batch(3, seed=8), np.random.default_rng(9))
        assert value > 0.0
        assert np.abs(model.params["in.w"].grad).max() > 0.0

    def test_draws_cover_step_range(self):
        sched = make_cosine(10)
        draws = draw_training_noise(500, sched, 6, np.random.default_rng(10))
        steps = {d.t for d in draws}
        assert min(steps) >= 1 and max(steps) <= 10
        assert len(steps) == 10


class TestReverseStep:
    def test_zero_net_zero_noise_rescales(self):
        # zero prediction, x_t scaled so the implied clean signal sits in [0,1]:
        # the step must reduce to the plain 1/sqrt(alpha_t) rescale
        model = tiny_model(random_weights=False)
        x0 = np.random.default_rng(11).uniform(size=6)
        cond = np.random.default_rng(12).uniform(size=6)
        for t in (2, 5, 10):
            x_t = math.sqrt(model.sched.alpha_bar[t]) * x0
            out = reverse_step(model, x_t, t, cond, np.zeros(6))
            np.testing.assert_allclose(out, x_t / math.sqrt(model.sched.alpha[t]),
                                       rtol=0, atol=1e-13)

    def test_out_of_range_implied_signal_saturates(self):
        # zero prediction and |x_t| far outside the data range: the implied
        # clean signal pins at the bound instead of amplifying
        model = tiny_model(random_weights=False)
        cond = np.random.default_rng(20).uniform(size=6)
        t = 5
        x_t = np.full(6, 5.0)
        coef_xt, coef_x0 = posterior_mean_coeffs(model.sched, t)
        out = reverse_step(model, x_t, t, cond, np.zeros(6))
        np.testing.assert_allclose(out, coef_xt * x_t + coef_x0, rtol=0, atol=1e-14)
        out_lo = reverse_step(model, -x_t, t, cond, np.zeros(6))
        np.testing.assert_allclose(out_lo, coef_xt * -x_t, rtol=0, atol=1e-14)

    def test_final_step_recovers_signal_with_oracle(self):
        model = tiny_model()
        rng = np.random.default_rng(13)
        x0 = rng.uniform(size=6)
        eps = rng.standard_normal(6)
        cond = rng.uniform(size=6)
        x1 = forward_sample(x0, 1, eps, model.sched)
        out = reverse_step(model, x1, 1, cond, np.zeros(6),
                           predictor=lambda x, t, c: eps)
        np.testing.assert_allclose(out, x0, rtol=0, atol=1e-12)

    def test_final_step_ignores_z(self):
        model = tiny_model(seed=14)
        rng = np.random.default_rng(15)
        x1 = rng.normal(size=6)
        cond = rng.uniform(size=6)
        a = reverse_step(model, x1, 1, cond, np.zeros(6))
        b = reverse_step(model, x1, 1, cond, np.ones(6))
        np.testing.assert_array_equal(a, b)

    def test_matches_posterior_coefficient_form(self):
        # noise-parameterized mean vs the (x_t, x0) coefficient form
        model = tiny_model()
        rng = np.random.default_rng(16)
        cond = rng.uniform(size=6)
        for _ in range(100):
            t = int(rng.integers(1, model.sched.steps + 1))
            x0 = rng.uniform(size=6)
            eps = rng.standard_normal(6)
            x_t = forward_sample(x0, t, eps, model.sched)
            got = reverse_step(model, x_t, t, cond, np.zeros(6),
                               predictor=lambda x, tt, c: eps)
            coef_xt, coef_x0 = posterior_mean_coeffs(model.sched, t)
            np.testing.assert_allclose(got, coef_xt * x_t + coef_x0 * x0,
                                       rtol=0, atol=1e-12)

    def test_variance_switch_changes_noise_scale(self):
        base = tiny_model(seed=17)
        wide = DiffusionModel(sched=base.sched, params=base.params,
                              config=base.config, variance="beta")
        rng = np.random.default_rng(18)
        x_t = rng.normal(size=6)
        cond = rng.uniform(size=6)
        z = np.ones(6)
        t = 5
        gap = reverse_step(wide, x_t, t, cond, z) - reverse_step(base, x_t, t, cond, z)
        expect = math.sqrt(base.sched.beta[t]) - math.sqrt(base.sched.posterior_var[t])
        np.testing.assert_allclose(gap, expect, rtol=1e-12)

    def test_rejects_bad_variance_name(self):
        base = tiny_model()
        with pytest.raises(ConfigError, match="variance"):
            DiffusionModel(sched=base.sched, params=base.params,
                           config=base.config, variance="none")

    def test_oracle_round_trip_recovers_signal(self):
        # descend the whole chain feeding the exact effective noise
        model = tiny_model(steps=50)
        rng = np.random.default_rng(19)
        x0 = rng.uniform(size=6)
        cond = rng.uniform(size=6)
        x = forward_sample(x0, 50, rng.standard_normal(6), model.sched)
        for t in range(50, 0, -1):
            abar = model.sched.alpha_bar[t]
            eps_t = (x - math.sqrt(abar) * x0) / math.sqrt(1.0 - abar)
            x = reverse_step(model, x, t, cond, np.zeros(6),
                             predictor=lambda xx, tt, cc, e=eps_t: e)
        np.testing.assert_allclose(x, x0, rtol=0, atol=1e-8)


class TestSampleScenarios:
    def test_shape_and_range(self):
        model = tiny_model(seed=20)
        cond = np.random.default_rng(21).uniform(size=6)
        sset = sample_scenarios(model, cond, 5, np.random.default_rng(22))
        assert isinstance(sset, ScenarioSet)
        assert sset.values.shape == (5, 6)
        assert sset.values.min() >= 0.0
        assert sset.values.max() <= 1.0
        assert sset.normalized

    def test_seeded_determinism(self):
        model = tiny_model(seed=23)
        cond = np.random.default_rng(24).uniform(size=6)
        a = sample_scenarios(model, cond, 4, np.random.default_rng(99))
        b = sample_scenarios(model, cond, 4, np.random.default_rng(99))
        np.testing.assert_array_equal(a.values, b.values)

    def test_chain_count_does_not_reshuffle_streams(self):
        # scenario i only depends on its own spawned stream
        model = tiny_model(seed=25)
        cond = np.random.default_rng(26).uniform(size=6)
        few = sample_scenarios(model, cond, 2, np.random.default_rng(7))
        many = sample_scenarios(model, cond, 5, np.random.default_rng(7))
        np.testing.assert_array_equal(few.values, many.values[:2])

    def test_single_chain_deterministic_given_stream(self):
        model = tiny_model(seed=27)
        cond = np.random.default_rng(28).uniform(size=6)
        a = sample_chain(model, cond, np.random.default_rng(3))
        b = sample_chain(model, cond, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_rejects_nonpositive_count(self):
        model = tiny_model()
        with pytest.raises(ValueError, match="at least one"):
            sample_scenarios(model, np.zeros(6), 0, np.random.default_rng(0))

    def test_rejects_non_finite_params(self):
        model = tiny_model(seed=29)
        model.params["in.w"].data[0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            sample_scenarios(model, np.zeros(6), 1, np.random.default_rng(0))

    def test_metadata_recorded(self):
        model = tiny_model(seed=30)
        cond = np.random.default_rng(31).uniform(size=6)
        sset = sample_scenarios(model, cond, 2, np.random.default_rng(1),
                                model_id="pv-test", seed=1)
        assert sset.model_id == "pv-test"
        assert sset.seed == 1
        np.testing.assert_array_equal(sset.condition, cond)
