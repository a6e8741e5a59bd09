"""Conditional noise-prediction network.

A stack of gated dilated-convolution residual blocks over a length-24
sequence. A sinusoidal step embedding and the forecast condition each pass
through a shared two-layer dense head; every block then projects those
shared vectors into its own channel space, adds them to the residual
stream, and applies a tanh/sigmoid gated convolution pair. Skip outputs
are summed and collapsed to one channel by a two-conv head whose final
layer starts at zero, so a freshly initialized network predicts zero noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .schedule import ConfigError

__all__ = [
    "DenoiserConfig",
    "block_dilation",
    "receptive_field",
    "time_embed",
    "init_params",
    "validate_condition",
    "forward",
]

CONDITION_TOL = 1e-9


@dataclass(frozen=True)
class DenoiserConfig:
    n_blocks: int = 8
    res_channels: int = 8
    hidden: int = 64
    dilation_cycle: int = 2
    kernel_size: int = 3
    time_embed_dim: int = 64
    seq_len: int = 24
    dilation_pattern: str = "cycle"

    def __post_init__(self) -> None:
        if self.n_blocks < 1:
            raise ConfigError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if self.res_channels < 1 or self.hidden < 1 or self.seq_len < 1:
            raise ConfigError("res_channels, hidden and seq_len must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2 != 0:
            raise ConfigError(f"time_embed_dim must be even, got {self.time_embed_dim}")
        if self.dilation_cycle < 1:
            raise ConfigError(f"dilation_cycle must be >= 1, got {self.dilation_cycle}")
        if self.dilation_pattern not in ("cycle", "doubling"):
            raise ConfigError(f"unknown dilation_pattern {self.dilation_pattern!r}")


def block_dilation(cfg: DenoiserConfig, k: int) -> int:
    if cfg.dilation_pattern == "doubling":
        return 2 ** k
    return 2 ** (k % cfg.dilation_cycle)


def receptive_field(cfg: DenoiserConfig) -> int:
    """Length of input each output position can see through the conv stack."""
    span = 1
    for k in range(cfg.n_blocks):
        span += (cfg.kernel_size - 1) * block_dilation(cfg, k)
    return span


def time_embed(t: int, dim: int) -> np.ndarray:
    """Sinusoidal step embedding: sin then cos halves over a 10^0..10^4 sweep."""
    if dim < 2 or dim % 2 != 0:
        raise ConfigError(f"embedding dim must be even and >= 2, got {dim}")
    if t < 0:
        raise ValueError(f"step index must be >= 0, got {t}")
    half = dim // 2
    if half > 1:
        exponents = np.arange(half) * (4.0 / (half - 1))
    else:
        exponents = np.zeros(1)
    angles = float(t) * 10.0 ** exponents
    return np.concatenate([np.sin(angles), np.cos(angles)])


def _he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg: DenoiserConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Fan-in uniform weights, zero biases, zeroed final head conv."""
    c = cfg.res_channels
    h = cfg.hidden
    k = cfg.kernel_size

    def weight(shape: tuple[int, ...], fan_in: int) -> Tensor:
        return Tensor(_he_uniform(rng, shape, fan_in), param=True)

    def bias(n: int) -> Tensor:
        return Tensor(np.zeros(n), param=True)

    params: dict[str, Tensor] = {}
    params["in.w"] = weight((c, 1, 1), 1)
    params["in.b"] = bias(c)
    params["temb.fc1.w"] = weight((h, cfg.time_embed_dim), cfg.time_embed_dim)
    params["temb.fc1.b"] = bias(h)
    params["temb.fc2.w"] = weight((h, h), h)
    params["temb.fc2.b"] = bias(h)
    params["cemb.fc1.w"] = weight((h, cfg.seq_len), cfg.seq_len)
    params["cemb.fc1.b"] = bias(h)
    params["cemb.fc2.w"] = weight((h, h), h)
    params["cemb.fc2.b"] = bias(h)
    for i in range(cfg.n_blocks):
        p = f"block{i}"
        params[f"{p}.t.w"] = weight((c, h), h)
        params[f"{p}.t.b"] = bias(c)
        params[f"{p}.c.w"] = weight((c, h, 1), h)
        params[f"{p}.c.b"] = bias(c)
        params[f"{p}.filt.w"] = weight((c, c, k), c * k)
        params[f"{p}.filt.b"] = bias(c)
        params[f"{p}.gate.w"] = weight((c, c, k), c * k)
        params[f"{p}.gate.b"] = bias(c)
        params[f"{p}.res.w"] = weight((c, c, 1), c)
        params[f"{p}.res.b"] = bias(c)
        params[f"{p}.skip.w"] = weight((c, c, 1), c)
        params[f"{p}.skip.b"] = bias(c)
    params["head.conv1.w"] = weight((c, c, 1), c)
    params["head.conv1.b"] = bias(c)
    params["head.conv2.w"] = Tensor(np.zeros((1, c, 1)), param=True)
    params["head.conv2.b"] = Tensor(np.zeros(1), param=True)
    return params


def validate_condition(cond: np.ndarray, seq_len: int) -> np.ndarray:
    cond = np.asarray(cond, dtype=np.float64)
    if cond.shape != (seq_len,):
        raise ValueError(f"condition must have shape ({seq_len},), got {cond.shape}")
    if not np.all(np.isfinite(cond)):
        raise ValueError("condition contains non-finite values")
    if cond.min() < -CONDITION_TOL or cond.max() > 1.0 + CONDITION_TOL:
        raise ValueError(
            f"condition values must lie in [0, 1], got range "
            f"[{cond.min()}, {cond.max()}]"
        )
    return cond


def _embed_mlp(tape: Tape | None, params: dict[str, Tensor], prefix: str,
               vec: Tensor) -> Tensor:
    out = ad.dense(tape, vec, params[f"{prefix}.fc1.w"], params[f"{prefix}.fc1.b"])
    out = ad.swish(tape, out)
    out = ad.dense(tape, out, params[f"{prefix}.fc2.w"], params[f"{prefix}.fc2.b"])
    return ad.swish(tape, out)


def forward(params: dict[str, Tensor], cfg: DenoiserConfig, x_t: np.ndarray,
            t: int, cond: np.ndarray, tape: Tape | None = None) -> Tensor:
    """Predict the noise component of x_t at step t given forecast cond.

    Record onto tape to make the result differentiable with respect to
    params; with tape None the call is pure inference.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (cfg.seq_len,):
        raise ValueError(f"input must have shape ({cfg.seq_len},), got {x_t.shape}")
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    cond = validate_condition(cond, cfg.seq_len)

    tvec = _embed_mlp(tape, params, "temb",
                      Tensor(time_embed(t, cfg.time_embed_dim)))
    cvec = _embed_mlp(tape, params, "cemb", Tensor(cond))
    cond_wide = ad.broadcast_len(tape, cvec, cfg.seq_len)

    x = ad.conv1d_dilated(tape, Tensor(x_t.reshape(1, cfg.seq_len)),
                          params["in.w"], params["in.b"], 1)
    skip_sum: Tensor | None = None
    for k in range(cfg.n_blocks):
        p = f"block{k}"
        tproj = ad.dense(tape, tvec, params[f"{p}.t.w"], params[f"{p}.t.b"])
        cproj = ad.conv1d_dilated(tape, cond_wide, params[f"{p}.c.w"],
                                  params[f"{p}.c.b"], 1)
        y = ad.add(tape, ad.add(tape, x, tproj), cproj)
        d = block_dilation(cfg, k)
        filt = ad.tanh(tape, ad.conv1d_dilated(
            tape, y, params[f"{p}.filt.w"], params[f"{p}.filt.b"], d))
        gate = ad.sigmoid(tape, ad.conv1d_dilated(
            tape, y, params[f"{p}.gate.w"], params[f"{p}.gate.b"], d))
        z = ad.mul(tape, filt, gate)
        res = ad.conv1d_dilated(tape, z, params[f"{p}.res.w"],
                                params[f"{p}.res.b"], 1)
        x = ad.add(tape, x, res)
        sk = ad.conv1d_dilated(tape, z, params[f"{p}.skip.w"],
                               params[f"{p}.skip.b"], 1)
        skip_sum = sk if skip_sum is None else ad.add(tape, skip_sum, sk)

    h = ad.tanh(tape, skip_sum)
    h = ad.conv1d_dilated(tape, h, params["head.conv1.w"], params["head.conv1.b"], 1)
    h = ad.tanh(tape, h)
    out = ad.conv1d_dilated(tape, h, params["head.conv2.w"], params["head.conv2.b"], 1)
    return ad.reshape(tape, out, (cfg.seq_len,))
