"""Forward corruption, denoising training loss, and ancestral sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .denoiser import DenoiserConfig, forward as denoiser_forward, validate_condition
from .metrics import ScenarioSet
from .schedule import ConfigError, NoiseSchedule, posterior_mean_coeffs

__all__ = [
    "DiffusionModel",
    "SampleDraw",
    "forward_sample",
    "draw_training_noise",
    "training_loss_taped",
    "training_loss",
    "reverse_step",
    "sample_scenarios",
]

# predictor(x_t, t, cond) -> predicted noise; used to swap in oracle stubs
Predictor = Callable[[np.ndarray, int, np.ndarray], np.ndarray]


@dataclass
class DiffusionModel:
    sched: NoiseSchedule
    params: dict[str, Tensor]
    config: DenoiserConfig
    variance: str = "posterior"

    def __post_init__(self) -> None:
        if self.variance not in ("posterior", "beta"):
            raise ConfigError(f"variance must be 'posterior' or 'beta', got {self.variance!r}")

    def predict(self, x_t: np.ndarray, t: int, cond: np.ndarray,
                tape: Tape | None = None) -> Tensor:
        return denoiser_forward(self.params, self.config, x_t, t, cond, tape)


def forward_sample(x0: np.ndarray, t: int, eps: np.ndarray,
                   sched: NoiseSchedule) -> np.ndarray:
    """Corrupt x0 to step t in closed form: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    sched.check_step(t)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    abar = sched.alpha_bar[t]
    return math.sqrt(abar) * x0 + math.sqrt(1.0 - abar) * eps


@dataclass(frozen=True)
class SampleDraw:
    """One training draw: a uniform step index and its standard-normal noise."""
    t: int
    eps: np.ndarray


def draw_training_noise(n: int, sched: NoiseSchedule, seq_len: int,
                        rng: np.random.Generator) -> list[SampleDraw]:
    """Independent (t, eps) draws, one per sample in a batch."""
    draws = []
    for _ in range(n):
        t = int(rng.integers(1, sched.steps + 1))
        draws.append(SampleDraw(t=t, eps=rng.standard_normal(seq_len)))
    return draws


def training_loss_taped(model: DiffusionModel, batch: Sequence, draws: Sequence[SampleDraw],
                        tape: Tape | None, predictor: Predictor | None = None) -> Tensor:
    """Mean over the batch of per-sample noise-prediction MSE.

    batch items expose normalized .forecast and .actual arrays. draws must
    align with batch one to one, which lets tests replay identical noise.
    """
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    if len(draws) != len(batch):
        raise ValueError(f"got {len(draws)} draws for {len(batch)} samples")
    total: Tensor | None = None
    for sample, draw in zip(batch, draws):
        x_t = forward_sample(sample.actual, draw.t, draw.eps, model.sched)
        if predictor is None:
            pred = model.predict(x_t, draw.t, sample.forecast, tape)
        else:
            pred = Tensor(predictor(x_t, draw.t, sample.forecast))
        term = ad.mse(tape, pred, Tensor(draw.eps))
        total = term if total is None else ad.add(tape, total, term)
    return ad.scale(tape, total, 1.0 / len(batch))


def training_loss(model: DiffusionModel, batch: Sequence,
                  rng: np.random.Generator) -> float:
    """Draw fresh noise, evaluate the loss, populate parameter gradients."""
    draws = draw_training_noise(len(batch), model.sched, model.config.seq_len, rng)
    tape = Tape()
    for p in model.params.values():
        p.zero_grad()
    loss = training_loss_taped(model, batch, draws, tape)
    ad.backward(loss, tape)
    return float(loss.data)


def reverse_step(model: DiffusionModel, x_t: np.ndarray, t: int, cond: np.ndarray,
                 z: np.ndarray, predictor: Predictor | None = None) -> np.ndarray:
    """One ancestral step: posterior mean around the implied clean signal, plus scaled z.

    The noise prediction is converted to the clean-signal estimate it implies,
    that estimate is clipped to the data range [0,1], and the posterior mean
    is formed from it. When the estimate is already in range this equals the
    direct noise-parameterized mean; the clip keeps prediction error at the
    near-pure-noise steps (where 1/sqrt(alpha_bar_t) is huge) from compounding
    into runaway chains. z is ignored at t = 1 so the final step is
    deterministic.
    """
    model.sched.check_step(t)
    x_t = np.asarray(x_t, dtype=np.float64)
    if predictor is None:
        eps_hat = model.predict(x_t, t, cond).data
    else:
        eps_hat = np.asarray(predictor(x_t, t, cond), dtype=np.float64)
    abar_t = model.sched.alpha_bar[t]
    x0_hat = (x_t - math.sqrt(1.0 - abar_t) * eps_hat) / math.sqrt(abar_t)
    np.clip(x0_hat, 0.0, 1.0, out=x0_hat)
    coef_xt, coef_x0 = posterior_mean_coeffs(model.sched, t)
    mean = coef_xt * x_t + coef_x0 * x0_hat
    if t == 1:
        return mean
    if model.variance == "posterior":
        var = model.sched.posterior_var[t]
    else:
        var = model.sched.beta[t]
    return mean + math.sqrt(var) * np.asarray(z, dtype=np.float64)


def _check_params_finite(model: DiffusionModel) -> None:
    for name, p in model.params.items():
        if not np.all(np.isfinite(p.data)):
            raise ValueError(f"model parameter {name} contains non-finite values")


def sample_chain(model: DiffusionModel, cond: np.ndarray,
                 rng: np.random.Generator, predictor: Predictor | None = None) -> np.ndarray:
    """One full reverse trajectory from fresh Gaussian noise, clamped to [0,1]."""
    x = rng.standard_normal(model.config.seq_len)
    zeros = np.zeros(model.config.seq_len)
    for t in range(model.sched.steps, 0, -1):
        z = rng.standard_normal(model.config.seq_len) if t > 1 else zeros
        x = reverse_step(model, x, t, cond, z, predictor)
    return np.clip(x, 0.0, 1.0)


def sample_scenarios(model: DiffusionModel, cond: np.ndarray, n_scenarios: int,
                     rng: np.random.Generator, model_id: str = "",
                     seed: int | None = None) -> ScenarioSet:
    """Run n_scenarios independent reverse chains conditioned on one forecast.

    Each chain draws from its own spawned RNG stream, so scenario i is
    reproducible regardless of how many chains run.
    """
    if n_scenarios < 1:
        raise ValueError(f"need at least one scenario, got {n_scenarios}")
    cond = validate_condition(cond, model.config.seq_len)
    _check_params_finite(model)
    streams = rng.spawn(n_scenarios)
    values = np.empty((n_scenarios, model.config.seq_len))
    for i, stream in enumerate(streams):
        values[i] = sample_chain(model, cond, stream)
    return ScenarioSet(values=values, condition=cond.copy(), normalized=True,
                       seed=seed, model_id=model_id)
