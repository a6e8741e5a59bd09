"""Command line: train a model, sample scenarios, evaluate, dump schedules.

Every option can come from a `key = value` config file (# comments allowed)
via --config; explicit flags win. All artifacts land in --out together with
a manifest recording the resolved options, so any output traces back to a
config and seed. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
from typing import IO, Callable, Sequence

import numpy as np

from .dataset import (
    HOURS_PER_DAY,
    DataError,
    Normalizer,
    fit_normalizer,
    load_csv,
    load_day_csv,
    make_days,
    split,
)
from .denoiser import DenoiserConfig
from .diffusion import sample_scenarios
from .metrics import (
    MetricsError,
    ScenarioSet,
    aed,
    build_report,
    write_report_csv,
)
from .schedule import ConfigError, NoiseSchedule, make_cosine, make_linear
from .trainer import (
    DEFAULT_STEPS,
    CheckpointError,
    TrainConfig,
    TrainingError,
    load_checkpoint,
    save_checkpoint,
    train,
    write_loss_curve,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

DEFAULT_TEST_DAYS = 50
SCENARIO_HEADER = ["scenario_id", "hour", "power_mw"]


class UsageError(ValueError):
    """Bad flags, config keys, or input values; maps to exit code 2."""


def _parse_levels(raw: str) -> tuple[float, ...]:
    try:
        levels = tuple(float(v) for v in raw.split(","))
    except ValueError as exc:
        raise UsageError(f"cannot parse levels {raw!r}") from exc
    if not levels:
        raise UsageError("need at least one confidence level")
    for v in levels:
        if not 0.0 < v <= 100.0:
            raise UsageError(f"confidence level {v} outside (0, 100]")
    return tuple(sorted(set(levels), reverse=True))


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"cannot parse boolean {raw!r}")


# dest -> (converter, default); default None means required or derived later
_COMMON = {
    "out": (str, "."),
    "seed": (int, 0),
}
_NET = {
    "blocks": (int, 8),
    "channels": (int, 8),
    "hidden": (int, 64),
    "kernel_size": (int, 3),
    "dilation_cycle": (int, 2),
    "time_embed_dim": (int, 64),
}
_SCHED = {
    "steps": (int, None),
    "beta_start": (float, 0.0001),
    "beta_end": (float, 0.05),
    "cosine_s": (float, 0.008),
    "beta_max": (float, 0.999),
}
OPTIONS: dict[str, dict[str, tuple[Callable, object]]] = {
    "train": {
        **_COMMON, **_NET, **_SCHED,
        "schedule": (str, "cosine"),
        "data": (str, None),
        "source": (str, None),
        "n_train": (int, None),
        "epochs": (int, 300),
        "batch_size": (int, 32),
        "learning_rate": (float, 0.001),
        "variance": (str, "posterior"),
    },
    "sample": {
        **_COMMON,
        "model": (str, None),
        "forecast": (str, None),
        "source": (str, None),
        "num": (int, 100),
    },
    "eval": {
        **_COMMON,
        "scenarios": (str, None),
        "actual": (str, None),
        "levels": (_parse_levels, (100.0, 90.0, 80.0, 60.0)),
        "aed_mw": (_parse_bool, False),
    },
    "schedule": {
        **_COMMON, **_SCHED,
        "kind": (str, None),
    },
}
REQUIRED = {
    "train": ("data", "source"),
    "sample": ("model", "forecast"),
    "eval": ("scenarios", "actual"),
    "schedule": ("kind",),
}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Resolved options for one command, flags merged over config file."""

    command: str
    values: dict

    def __getattr__(self, name: str):
        try:
            return self.values[name]
        except KeyError as exc:
            raise AttributeError(name) from exc


def read_config_file(path: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        entries[key.strip()] = value.strip()
    return entries


def resolve(command: str, args: argparse.Namespace) -> RunConfig:
    spec = OPTIONS[command]
    file_entries = read_config_file(args.config) if args.config else {}
    for key in file_entries:
        if key not in spec:
            raise UsageError(f"unknown config key {key!r} for command {command!r}")
    values: dict = {}
    for key, (convert, default) in spec.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            values[key] = flag_value
        elif key in file_entries:
            try:
                values[key] = convert(file_entries[key])
            except (ValueError, TypeError) as exc:
                raise UsageError(
                    f"bad config value {key} = {file_entries[key]!r}: {exc}") from exc
        else:
            values[key] = default
    for key in REQUIRED[command]:
        if values[key] is None:
            raise UsageError(f"missing required option --{key.replace('_', '-')}")
    return RunConfig(command=command, values=values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffscen",
        description="Day-ahead renewable scenario generation with a "
                    "conditional denoising diffusion model.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(p: argparse.ArgumentParser, name: str, **kwargs) -> None:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name,
                       default=None, **kwargs)

    p_train = sub.add_parser("train", help="train a denoiser on an hourly CSV")
    add(p_train, "data", help="hourly CSV: timestamp,forecast_mw,actual_mw")
    add(p_train, "source", choices=["pv", "wind"], help="generation source tag")
    add(p_train, "config", help="key = value config file")
    add(p_train, "schedule", choices=["cosine", "linear"], help="noise schedule kind")
    add(p_train, "steps", type=int, help="diffusion steps T (default 250 pv / 200 wind)")
    add(p_train, "beta_start", type=float)
    add(p_train, "beta_end", type=float)
    add(p_train, "cosine_s", type=float)
    add(p_train, "beta_max", type=float)
    add(p_train, "n_train", type=int,
        help="training days (default: all but 50, or 80%% of small sets)")
    add(p_train, "epochs", type=int)
    add(p_train, "batch_size", type=int)
    add(p_train, "learning_rate", type=float)
    add(p_train, "variance", choices=["posterior", "beta"])
    add(p_train, "blocks", type=int)
    add(p_train, "channels", type=int)
    add(p_train, "hidden", type=int)
    add(p_train, "kernel_size", type=int)
    add(p_train, "dilation_cycle", type=int)
    add(p_train, "time_embed_dim", type=int)
    add(p_train, "seed", type=int)
    add(p_train, "out", help="output directory")

    p_sample = sub.add_parser("sample", help="generate scenarios for one forecast day")
    add(p_sample, "model", help="checkpoint file from train")
    add(p_sample, "forecast", help="day CSV: timestamp,forecast_mw (24 rows)")
    add(p_sample, "source", choices=["pv", "wind"],
        help="expected source; must match the checkpoint")
    add(p_sample, "num", type=int, help="scenario count (default 100)")
    add(p_sample, "config", help="key = value config file")
    add(p_sample, "seed", type=int)
    add(p_sample, "out", help="output directory")

    p_eval = sub.add_parser("eval", help="score a scenario CSV against an actual day")
    add(p_eval, "scenarios", help="CSV from sample: scenario_id,hour,power_mw")
    add(p_eval, "actual", help="day CSV with actual_mw column")
    add(p_eval, "levels", type=_parse_levels, help="comma list, e.g. 100,90,80,60")
    p_eval.add_argument("--aed-mw", dest="aed_mw", action="store_true", default=None,
                        help="report AED in MW instead of normalized units")
    add(p_eval, "config", help="key = value config file")
    add(p_eval, "seed", type=int)
    add(p_eval, "out", help="output directory")

    p_sched = sub.add_parser("schedule", help="dump schedule arrays as CSV")
    add(p_sched, "kind", choices=["cosine", "linear", "both"])
    add(p_sched, "steps", type=int)
    add(p_sched, "beta_start", type=float)
    add(p_sched, "beta_end", type=float)
    add(p_sched, "cosine_s", type=float)
    add(p_sched, "beta_max", type=float)
    add(p_sched, "config", help="key = value config file")
    add(p_sched, "seed", type=int)
    add(p_sched, "out", help="output directory")
    return parser


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_manifest(path: str, command: str, values: dict) -> None:
    with open(path, "w") as fh:
        fh.write(f"command={command}\n")
        for key in sorted(values):
            value = values[key]
            if isinstance(value, tuple):
                value = ",".join(_fmt(v) for v in value)
            fh.write(f"{key}={value}\n")


def _default_n_train(total_days: int) -> int:
    if total_days < 2:
        raise UsageError(f"need at least 2 days of data, got {total_days}")
    if total_days > DEFAULT_TEST_DAYS + 10:
        return total_days - DEFAULT_TEST_DAYS
    return max(1, min(total_days - 1, (total_days * 4) // 5))


def cmd_train(cfg: RunConfig) -> int:
    series = load_csv(cfg.data, cfg.source)
    n_train = cfg.n_train if cfg.n_train is not None else _default_n_train(series.n_days)
    normalizer = fit_normalizer(series, n_train)
    days = make_days(series, normalizer)
    train_days, _test_days = split(days, n_train)

    steps = cfg.steps if cfg.steps is not None else DEFAULT_STEPS[cfg.source]
    net_cfg = DenoiserConfig(
        n_blocks=cfg.blocks, res_channels=cfg.channels, hidden=cfg.hidden,
        dilation_cycle=cfg.dilation_cycle, kernel_size=cfg.kernel_size,
        time_embed_dim=cfg.time_embed_dim, seq_len=HOURS_PER_DAY)
    train_cfg = TrainConfig(
        learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
        epochs=cfg.epochs, seed=cfg.seed, steps=steps,
        schedule_kind=cfg.schedule, cosine_s=cfg.cosine_s, beta_max=cfg.beta_max,
        beta_start=cfg.beta_start, beta_end=cfg.beta_end, variance=cfg.variance)

    ckpt, curve = train(train_days, train_cfg, net_cfg, source=cfg.source,
                        normalizer=normalizer)

    os.makedirs(cfg.out, exist_ok=True)
    ckpt_path = os.path.join(cfg.out, "model.ckpt")
    curve_path = os.path.join(cfg.out, "loss_curve.csv")
    manifest_path = os.path.join(cfg.out, "manifest_train.txt")
    written = []
    try:
        save_checkpoint(ckpt, ckpt_path)
        written.append(ckpt_path)
        with open(curve_path, "w") as fh:
            write_loss_curve(curve, fh)
        written.append(curve_path)
        resolved = dict(cfg.values, n_train=n_train, steps=steps)
        _write_manifest(manifest_path, "train", resolved)
        written.append(manifest_path)
    except BaseException:
        for path in written:
            if os.path.exists(path):
                os.unlink(path)
        raise
    final = f", final loss {curve[-1][1]:.6f}" if curve else ""
    print(f"trained {len(curve)} epoch(s) on {len(train_days)} day(s){final}")
    print(f"wrote {ckpt_path}, {curve_path}, {manifest_path}")
    return EXIT_OK


def _normalizer_from_checkpoint(ckpt) -> Normalizer:
    rng = ckpt.norm_range()
    if rng is None:
        raise UsageError("checkpoint lacks a normalization range; cannot map MW")
    return Normalizer(vmin=rng[0], vmax=rng[1],
                      source=ckpt.metadata.get("source", ""))


def cmd_sample(cfg: RunConfig) -> int:
    ckpt = load_checkpoint(cfg.model)
    ckpt_source = ckpt.metadata.get("source", "")
    if cfg.source is not None and ckpt_source and cfg.source != ckpt_source:
        raise UsageError(
            f"checkpoint was trained on source {ckpt_source!r}, not {cfg.source!r}")
    model = ckpt.model()
    if model.config.seq_len != HOURS_PER_DAY:
        raise UsageError(
            f"checkpoint sequence length {model.config.seq_len} is not a day")
    forecast_mw, _actual = load_day_csv(cfg.forecast)
    normalizer = _normalizer_from_checkpoint(ckpt)
    cond = normalizer.normalize(forecast_mw)
    if cfg.num < 1:
        raise UsageError(f"--num must be >= 1, got {cfg.num}")

    sset = sample_scenarios(model, cond, cfg.num, np.random.default_rng(cfg.seed),
                            model_id=ckpt_source, seed=cfg.seed)
    power = normalizer.denormalize(sset.values)

    os.makedirs(cfg.out, exist_ok=True)
    scen_path = os.path.join(cfg.out, "scenarios.csv")
    with open(scen_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SCENARIO_HEADER)
        for sid in range(power.shape[0]):
            for hour in range(power.shape[1]):
                writer.writerow([sid, hour, _fmt(power[sid, hour])])
    manifest_path = os.path.join(cfg.out, "manifest_sample.txt")
    _write_manifest(manifest_path, "sample", cfg.values)
    print(f"wrote {power.shape[0]} scenario(s) to {scen_path}")
    return EXIT_OK


def read_scenarios_csv(path: str) -> np.ndarray:
    """Parse sample output back into a (W, 24) array, strictly ordered."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SCENARIO_HEADER:
            raise DataError(
                f"expected header {','.join(SCENARIO_HEADER)!r}, got {header!r}")
        rows = []
        for idx, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise DataError(f"row {idx}: expected 3 columns")
            try:
                rows.append((int(row[0]), int(row[1]), float(row[2])))
            except ValueError as exc:
                raise DataError(f"row {idx}: non-numeric cell") from exc
    if not rows or len(rows) % HOURS_PER_DAY != 0:
        raise DataError(f"{len(rows)} data rows is not a whole number of days")
    n_scen = len(rows) // HOURS_PER_DAY
    values = np.empty((n_scen, HOURS_PER_DAY))
    for i, (sid, hour, value) in enumerate(rows):
        expect_sid, expect_hour = divmod(i, HOURS_PER_DAY)
        if sid != expect_sid or hour != expect_hour:
            raise DataError(
                f"row {i + 2}: expected scenario {expect_sid} hour {expect_hour}, "
                f"got scenario {sid} hour {hour}")
        values[sid, hour] = value
    return values


def cmd_eval(cfg: RunConfig) -> int:
    values = read_scenarios_csv(cfg.scenarios)
    _forecast, actual = load_day_csv(cfg.actual)
    if actual is None:
        raise UsageError(f"{cfg.actual} has no actual_mw column")
    sset = ScenarioSet(values=values, normalized=False)
    report = build_report(sset, actual, levels=cfg.levels)
    if not cfg.aed_mw:
        # rescale scenarios and actual jointly to [0,1] so the distance is
        # comparable across plants of different size
        lo = min(values.min(), actual.min())
        hi = max(values.max(), actual.max())
        if hi > lo:
            norm_set = ScenarioSet(values=(values - lo) / (hi - lo))
            norm_aed = aed(norm_set, (actual - lo) / (hi - lo))
        else:
            norm_aed = 0.0
        report = dataclasses.replace(report, aed=norm_aed)

    os.makedirs(cfg.out, exist_ok=True)
    metrics_path = os.path.join(cfg.out, "metrics.csv")
    with open(metrics_path, "w", newline="") as fh:
        write_report_csv(report, fh)
    manifest_path = os.path.join(cfg.out, "manifest_eval.txt")
    _write_manifest(manifest_path, "eval", cfg.values)
    if report.n_constant_scenarios:
        logging.getLogger(__name__).warning(
            "%d constant scenario(s) excluded from the ACF summary",
            report.n_constant_scenarios)
    print(f"wrote {metrics_path}")
    return EXIT_OK


def _schedule_for(kind: str, cfg: RunConfig, steps: int) -> NoiseSchedule:
    if kind == "linear":
        return make_linear(steps, cfg.beta_start, cfg.beta_end)
    return make_cosine(steps, cfg.cosine_s, cfg.beta_max)


def cmd_schedule(cfg: RunConfig) -> int:
    steps = cfg.steps if cfg.steps is not None else 250
    kinds = ["cosine", "linear"] if cfg.kind == "both" else [cfg.kind]
    if cfg.kind not in ("cosine", "linear", "both"):
        raise UsageError(f"unknown schedule kind {cfg.kind!r}")

    os.makedirs(cfg.out, exist_ok=True)
    sched_path = os.path.join(cfg.out, "schedule.csv")
    with open(sched_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        labeled = len(kinds) > 1
        header = ["t", "beta", "alpha_bar", "posterior_var"]
        writer.writerow((["kind"] + header) if labeled else header)
        for kind in kinds:
            sched = _schedule_for(kind, cfg, steps)
            for t in range(1, steps + 1):
                row = [t, _fmt(sched.beta[t]), _fmt(sched.alpha_bar[t]),
                       _fmt(sched.posterior_var[t])]
                writer.writerow(([kind] + row) if labeled else row)
    manifest_path = os.path.join(cfg.out, "manifest_schedule.txt")
    _write_manifest(manifest_path, "schedule", dict(cfg.values, steps=steps))
    print(f"wrote {sched_path}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "schedule": cmd_schedule,
}


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args.command, args)
        return COMMANDS[args.command](cfg)
    except (UsageError, ConfigError, DataError, MetricsError,
            CheckpointError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
