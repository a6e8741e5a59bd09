"""Day-ahead renewable-power scenario generation with a conditional
denoising diffusion model, plus the matching evaluation metrics."""

from .dataset import DaySample, Normalizer, load_csv, load_dataset, split
from .denoiser import DenoiserConfig, init_params, receptive_field, time_embed
from .diffusion import (
    DiffusionModel,
    forward_sample,
    reverse_step,
    sample_scenarios,
    training_loss,
)
from .metrics import (
    IntervalReport,
    ScenarioSet,
    acf,
    aed,
    build_report,
    coverage_rate,
    interval,
    piw,
)
from .schedule import NoiseSchedule, make_cosine, make_linear, posterior_mean_coeffs
from .trainer import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "DaySample",
    "Normalizer",
    "load_csv",
    "load_dataset",
    "split",
    "DenoiserConfig",
    "init_params",
    "receptive_field",
    "time_embed",
    "DiffusionModel",
    "forward_sample",
    "reverse_step",
    "sample_scenarios",
    "training_loss",
    "IntervalReport",
    "ScenarioSet",
    "acf",
    "aed",
    "build_report",
    "coverage_rate",
    "interval",
    "piw",
    "NoiseSchedule",
    "make_cosine",
    "make_linear",
    "posterior_mean_coeffs",
    "Checkpoint",
    "TrainConfig",
    "load_checkpoint",
    "save_checkpoint",
    "train",
    "__version__",
]
