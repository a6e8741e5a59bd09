#!/usr/bin/env python3
"""End-to-end toy experiment on synthetic half-sine data, driven through the CLI.

Generates a history and one held-out day, trains a small model, samples a
scenario set for the held-out forecast, and scores it. Defaults are sized to
finish in about a minute; pass --full for the configuration used by the
end-to-end acceptance run (slower, better calibrated).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
import make_synthetic_data  # noqa: E402

from diffscen import cli  # noqa: E402


def run_command(argv: list[str]) -> None:
    code = cli.main(argv)
    if code != 0:
        raise SystemExit(f"command failed with exit code {code}: {' '.join(argv)}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", default="synthetic_run", help="directory for data and artifacts")
    parser.add_argument("--days", type=int, default=150)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--num-scenarios", type=int, default=50)
    parser.add_argument("--full", action="store_true",
                        help="220 days, 8 blocks, 100 epochs, 50 steps, 100 scenarios")
    args = parser.parse_args(argv)

    os.makedirs(args.workdir, exist_ok=True)
    history = os.path.join(args.workdir, "history.csv")
    day = os.path.join(args.workdir, "held_out_day.csv")

    if args.full:
        days, num = 220, 100
        train_flags = ["--epochs", "100", "--steps", "50"]
    else:
        days, num = args.days, args.num_scenarios
        train_flags = ["--epochs", "60", "--steps", "25",
                       "--blocks", "6", "--channels", "6",
                       "--hidden", "32", "--time-embed-dim", "16"]

    make_synthetic_data.write_series(history, days, peak_mw=10.0, noise_mw=0.5, seed=args.seed)
    make_synthetic_data.write_day(day, amplitude_mw=7.0, noise_mw=0.5, seed=args.seed + 1,
                                  with_actual=True)
    print(f"data: {days} training-history days -> {history}")

    run_command(["train", "--data", history, "--source", "pv",
                 "--out", args.workdir, "--seed", str(args.seed),
                 "--batch-size", "16", *train_flags])
    model = os.path.join(args.workdir, "model.ckpt")

    run_command(["sample", "--model", model, "--forecast", day, "--source", "pv",
                 "--num", str(num), "--out", args.workdir, "--seed", str(args.seed)])
    scenarios = os.path.join(args.workdir, "scenarios.csv")

    run_command(["eval", "--scenarios", scenarios, "--actual", day,
                 "--out", args.workdir])

    print("\nscore summary (interval rows in MW, aed in normalized units):")
    with open(os.path.join(args.workdir, "metrics.csv"), newline="") as fh:
        for row in csv.reader(fh):
            if row and row[0] in {"theta", "100.0", "aed", "acf_lag1"}:
                print("  " + ", ".join(row))
    return 0


if __name__ == "__main__":
    sys.exit(main())
