"""Shared fixtures: a tiny PV dataset and a CLI-trained model."""

import math
from datetime import datetime, timedelta

import pytest

from diffscen.cli import main

# one line per acceptance criterion, echoed after the run so the verdicts
# are visible even with output capture on
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def pv_shape(hour: int) -> float:
    """Daylight half-sine, zero at night."""
    return max(0.0, math.sin(math.pi * (hour - 6) / 12.0))


def write_toy_series(path, n_days: int, start="2021-03-01 00:00") -> str:
    stamp = datetime.fromisoformat(start)
    lines = ["timestamp,forecast_mw,actual_mw"]
    for d in range(n_days):
        amp = 4.0 + 6.0 * ((d * 37) % 10) / 10.0
        for h in range(24):
            forecast = amp * pv_shape(h)
            actual = 0.9 * forecast + 0.3 * pv_shape(h)
            lines.append(f"{stamp.isoformat(sep=' ', timespec='minutes')},"
                         f"{forecast},{actual}")
            stamp += timedelta(hours=1)
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def write_toy_day(path, amp: float = 7.0, with_actual: bool = True,
                  start="2021-06-01 00:00") -> str:
    stamp = datetime.fromisoformat(start)
    header = "timestamp,forecast_mw" + (",actual_mw" if with_actual else "")
    lines = [header]
    for h in range(24):
        forecast = amp * pv_shape(h)
        row = f"{stamp.isoformat(sep=' ', timespec='minutes')},{forecast}"
        if with_actual:
            row += f",{0.92 * forecast + 0.2 * pv_shape(h)}"
        lines.append(row)
        stamp += timedelta(hours=1)
    path.write_text("\n".join(lines) + "\n")
    return str(path)


TINY_NET_FLAGS = [
    "--blocks", "2", "--channels", "3", "--hidden", "6",
    "--time-embed-dim", "4",
]
FAST_TRAIN_FLAGS = TINY_NET_FLAGS + [
    "--steps", "8", "--epochs", "2", "--batch-size", "4", "--seed", "11",
]


@pytest.fixture(scope="session")
def cli_workspace(tmp_path_factory):
    """Toy data plus one trained run, shared across CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = write_toy_series(root / "pv.csv", 5)
    day = write_toy_day(root / "day.csv")
    run = root / "run"
    rc = main(["train", "--data", data, "--source", "pv",
               "--out", str(run)] + FAST_TRAIN_FLAGS)
    assert rc == 0
    return {
        "root": root,
        "data": data,
        "day": day,
        "model": str(run / "model.ckpt"),
        "run": run,
    }
