"""Linear and cosine noise schedules and the closed-form diffusion quantities.

Arrays are indexed by diffusion step t = 1..T; index 0 holds the t = 0
convention values (beta 0, cumulative signal fraction 1) so the posterior
formulas are well defined at t = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["ConfigError", "NoiseSchedule", "make_linear", "make_cosine", "posterior_mean_coeffs"]

DEFAULT_COSINE_OFFSET = 0.008
DEFAULT_BETA_MAX = 0.999


class ConfigError(ValueError):
    """Invalid schedule or model configuration."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed per-step noise variances and their cumulative products.

    beta, alpha, alpha_bar and posterior_var all have length T + 1 with
    the t = 0 slot set to the empty-product convention (beta[0] = 0,
    alpha_bar[0] = 1, posterior_var[0] = 0).
    """

    kind: str
    steps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    posterior_var: np.ndarray
    s: float | None = None
    beta_max: float | None = None
    beta_start: float | None = None
    beta_end: float | None = None

    @property
    def T(self) -> int:
        return self.steps

    def check_step(self, t: int) -> None:
        if not 1 <= t <= self.steps:
            raise ValueError(f"step {t} outside schedule range 1..{self.steps}")


def _derive(kind: str, beta: np.ndarray, **extra) -> NoiseSchedule:
    """Build the derived arrays from per-step betas (beta[0] must be 0)."""
    steps = beta.shape[0] - 1
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    posterior_var = np.zeros_like(beta)
    posterior_var[1:] = (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]) * beta[1:]
    return NoiseSchedule(
        kind=kind,
        steps=steps,
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        posterior_var=posterior_var,
        **extra,
    )


def make_linear(steps: int, beta_start: float = 0.0001, beta_end: float = 0.05) -> NoiseSchedule:
    """Linear ramp with inclusive endpoints: beta[1] = start, beta[T] = end."""
    if steps < 2:
        raise ConfigError(f"linear schedule needs at least 2 steps, got {steps}")
    if not 0.0 < beta_start < beta_end < 1.0:
        raise ConfigError(f"need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}")
    beta = np.zeros(steps + 1)
    beta[1:] = np.linspace(beta_start, beta_end, steps)
    return _derive("linear", beta, beta_start=beta_start, beta_end=beta_end)


def make_cosine(steps: int, s: float = DEFAULT_COSINE_OFFSET,
                beta_max: float = DEFAULT_BETA_MAX) -> NoiseSchedule:
    """Cosine-squared schedule with a ceiling on the final betas.

    The raw cumulative signal fraction is cos(((t/T + s)/(1 + s)) * pi/2)^2
    normalized to 1 at t = 0; each beta is clamped to beta_max and the
    cumulative products are then rebuilt from the clamped betas so the
    product identity holds exactly.
    """
    if steps < 2:
        raise ConfigError(f"cosine schedule needs at least 2 steps, got {steps}")
    if not 0.0 < s < 0.1:
        raise ConfigError(f"cosine offset must be in (0, 0.1), got {s}")
    if not 0.0 < beta_max <= 0.999:
        raise ConfigError(f"beta_max must be in (0, 0.999], got {beta_max}")

    grid = np.arange(steps + 1) / steps
    f = np.cos((grid + s) / (1.0 + s) * math.pi / 2.0) ** 2
    raw_bar = f / f[0]
    beta = np.zeros(steps + 1)
    beta[1:] = np.minimum(1.0 - raw_bar[1:] / raw_bar[:-1], beta_max)
    return _derive("cosine", beta, s=s, beta_max=beta_max)


def posterior_mean_coeffs(sched: NoiseSchedule, t: int) -> tuple[float, float]:
    """Coefficients (on x_t and on x_0) of the exact reverse-posterior mean."""
    sched.check_step(t)
    if t == 1:
        # beta_1 / (1 - alpha_bar_1) is exactly 1; avoid the rounding in
        # recomputing it from the stored arrays
        return 0.0, 1.0
    denom = 1.0 - sched.alpha_bar[t]
    coef_xt = math.sqrt(sched.alpha[t]) * (1.0 - sched.alpha_bar[t - 1]) / denom
    coef_x0 = math.sqrt(sched.alpha_bar[t - 1]) * sched.beta[t] / denom
    return coef_xt, coef_x0
