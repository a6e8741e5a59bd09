"""Adam training loop and portable binary checkpoints."""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .autodiff import Tensor
from .denoiser import DenoiserConfig, init_params
from .diffusion import DiffusionModel, training_loss
from .schedule import ConfigError, NoiseSchedule, make_cosine, make_linear

__all__ = [
    "TrainConfig",
    "TrainingError",
    "CheckpointError",
    "AdamState",
    "adam_step",
    "make_schedule",
    "train",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "write_loss_curve",
    "DEFAULT_STEPS",
]

MAGIC = b"ICGD"
FORMAT_VERSION = 1
DEFAULT_STEPS = {"pv": 250, "wind": 200}


class TrainingError(RuntimeError):
    """Training aborted (bad input, divergence, non-finite gradients)."""


class CheckpointError(ValueError):
    """Unreadable or malformed checkpoint file."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 300
    seed: int = 0
    steps: int = 250
    schedule_kind: str = "cosine"
    cosine_s: float = 0.008
    beta_max: float = 0.999
    beta_start: float = 0.0001
    beta_end: float = 0.05
    variance: str = "posterior"

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.adam_eps <= 0:
            raise ConfigError("learning_rate and adam_eps must be positive")
        if not (0.0 < self.adam_beta1 < 1.0 and 0.0 < self.adam_beta2 < 1.0):
            raise ConfigError("Adam decay rates must lie in (0, 1)")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.schedule_kind not in ("linear", "cosine"):
            raise ConfigError(f"unknown schedule kind {self.schedule_kind!r}")


def make_schedule(cfg: TrainConfig) -> NoiseSchedule:
    if cfg.schedule_kind == "linear":
        return make_linear(cfg.steps, cfg.beta_start, cfg.beta_end)
    return make_cosine(cfg.steps, cfg.cosine_s, cfg.beta_max)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def init_like(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(
            m={name: np.zeros_like(p.data) for name, p in params.items()},
            v={name: np.zeros_like(p.data) for name, p in params.items()},
        )


def adam_step(params: dict[str, Tensor], state: AdamState, cfg: TrainConfig,
              step: int) -> None:
    """Bias-corrected Adam update in place; gradients ride on the tensors."""
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    for name, p in params.items():
        g = p.grad
        if g is None:
            raise TrainingError(f"parameter {name} has no gradient")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter {name}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** step)
        v_hat = v / (1.0 - b2 ** step)
        p.data -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def train(days: Sequence, cfg: TrainConfig, net_cfg: DenoiserConfig,
          source: str = "", normalizer=None) -> tuple["Checkpoint", list[tuple[int, float]]]:
    """Shuffled mini-batch epochs over normalized day samples.

    Returns the trained checkpoint and the per-epoch mean-loss curve.
    (days, cfg, net_cfg) fully determine both through cfg.seed.
    """
    if len(days) == 0:
        raise TrainingError("training set is empty")
    rng = np.random.default_rng(cfg.seed)
    sched = make_schedule(cfg)
    params = init_params(net_cfg, rng)
    model = DiffusionModel(sched=sched, params=params, config=net_cfg,
                           variance=cfg.variance)
    state = AdamState.init_like(params)
    curve: list[tuple[int, float]] = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(days))
        batch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [days[i] for i in order[start:start + cfg.batch_size]]
            loss = training_loss(model, batch, rng)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            step += 1
            adam_step(params, state, cfg, step)
            batch_losses.append(loss)
        mean_loss = float(np.mean(batch_losses))
        if not np.isfinite(mean_loss):
            raise TrainingError(f"non-finite mean loss at epoch {epoch}")
        curve.append((epoch, mean_loss))

    metadata = _build_metadata(cfg, net_cfg, source, normalizer,
                               epochs_run=len(curve),
                               final_loss=curve[-1][1] if curve else None)
    weights = {name: p.data.copy() for name, p in params.items()}
    return Checkpoint(metadata=metadata, weights=weights), curve


def _build_metadata(cfg: TrainConfig, net_cfg: DenoiserConfig, source: str,
                    normalizer, epochs_run: int, final_loss: float | None) -> dict[str, str]:
    meta = {
        "n_blocks": str(net_cfg.n_blocks),
        "res_channels": str(net_cfg.res_channels),
        "hidden": str(net_cfg.hidden),
        "dilation_cycle": str(net_cfg.dilation_cycle),
        "kernel_size": str(net_cfg.kernel_size),
        "time_embed_dim": str(net_cfg.time_embed_dim),
        "seq_len": str(net_cfg.seq_len),
        "dilation_pattern": net_cfg.dilation_pattern,
        "schedule_kind": cfg.schedule_kind,
        "steps": str(cfg.steps),
        "cosine_s": repr(cfg.cosine_s),
        "beta_max": repr(cfg.beta_max),
        "beta_start": repr(cfg.beta_start),
        "beta_end": repr(cfg.beta_end),
        "variance": cfg.variance,
        "seed": str(cfg.seed),
        "epochs_run": str(epochs_run),
        "final_loss": "" if final_loss is None else repr(final_loss),
        "source": source,
    }
    if normalizer is not None:
        meta["norm_min"] = repr(float(normalizer.vmin))
        meta["norm_max"] = repr(float(normalizer.vmax))
    return meta


@dataclass
class Checkpoint:
    """Named weight arrays plus enough metadata to rebuild the model."""

    metadata: dict[str, str]
    weights: dict[str, np.ndarray]
    version: int = FORMAT_VERSION

    def denoiser_config(self) -> DenoiserConfig:
        m = self.metadata
        return DenoiserConfig(
            n_blocks=int(m["n_blocks"]),
            res_channels=int(m["res_channels"]),
            hidden=int(m["hidden"]),
            dilation_cycle=int(m["dilation_cycle"]),
            kernel_size=int(m["kernel_size"]),
            time_embed_dim=int(m["time_embed_dim"]),
            seq_len=int(m["seq_len"]),
            dilation_pattern=m["dilation_pattern"],
        )

    def schedule(self) -> NoiseSchedule:
        m = self.metadata
        if m["schedule_kind"] == "linear":
            return make_linear(int(m["steps"]), float(m["beta_start"]),
                               float(m["beta_end"]))
        return make_cosine(int(m["steps"]), float(m["cosine_s"]),
                           float(m["beta_max"]))

    def model(self) -> DiffusionModel:
        params = {name: Tensor(arr.copy(), param=True)
                  for name, arr in self.weights.items()}
        return DiffusionModel(sched=self.schedule(), params=params,
                              config=self.denoiser_config(),
                              variance=self.metadata.get("variance", "posterior"))

    def norm_range(self) -> tuple[float, float] | None:
        if "norm_min" not in self.metadata:
            return None
        return float(self.metadata["norm_min"]), float(self.metadata["norm_max"])


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    payload = _encode(ckpt)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def _encode(ckpt: Checkpoint) -> bytes:
    for key, value in ckpt.metadata.items():
        if "=" in key or "\n" in key or "\n" in value:
            raise CheckpointError(f"metadata key/value not encodable: {key!r}")
    meta_blob = "".join(f"{k}={v}\n" for k, v in ckpt.metadata.items()).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", ckpt.version)
    out += struct.pack("<I", len(meta_blob))
    out += meta_blob
    out += struct.pack("<I", len(ckpt.weights))
    for name, arr in ckpt.weights.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        name_b = name.encode("utf-8")
        out += struct.pack("<I", len(name_b))
        out += name_b
        out += struct.pack("<I", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    return bytes(out)


def _read_exact(fh: IO[bytes], n: int, what: str) -> bytes:
    blob = fh.read(n)
    if len(blob) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return blob


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise CheckpointError(f"bad magic bytes {magic!r}: not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, "metadata length"))
        try:
            meta_text = _read_exact(fh, meta_len, "metadata").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError("metadata is not valid UTF-8") from exc
        metadata: dict[str, str] = {}
        for line in meta_text.splitlines():
            key, sep, value = line.partition("=")
            if not sep:
                raise CheckpointError(f"malformed metadata line {line!r}")
            metadata[key] = value
        (n_tensors,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        weights: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "tensor name length"))
            name = _read_exact(fh, name_len, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, f"rank of {name}"))
            dims = struct.unpack(f"<{rank}I",
                                 _read_exact(fh, 4 * rank, f"dims of {name}"))
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            blob = _read_exact(fh, 8 * count, f"data of {name}")
            weights[name] = np.frombuffer(blob, dtype="<f8").reshape(dims).copy()
        if fh.read(1):
            raise CheckpointError("trailing bytes after last tensor")
    return Checkpoint(metadata=metadata, weights=weights, version=version)


def write_loss_curve(curve: Sequence[tuple[int, float]], stream: IO[str]) -> None:
    stream.write("epoch,mean_loss\n")
    for epoch, loss in curve:
        stream.write(f"{epoch},{repr(float(loss))}\n")
