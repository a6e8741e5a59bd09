"""Adam updates, the training loop, and checkpoint serialization."""

import io
import math
from dataclasses import dataclass

import numpy as np
import pytest

from diffscen.autodiff import Tensor
from diffscen.denoiser import DenoiserConfig, init_params
from diffscen.schedule import ConfigError
from diffscen.trainer import (
    DEFAULT_STEPS,
    AdamState,
    Checkpoint,
    CheckpointError,
    TrainConfig,
    TrainingError,
    adam_step,
    load_checkpoint,
    make_schedule,
    save_checkpoint,
    train,
    write_loss_curve,
)

TINY = DenoiserConfig(n_blocks=2, res_channels=3, hidden=6, time_embed_dim=4, seq_len=6)
FAST = TrainConfig(epochs=2, batch_size=4, steps=8, seed=1)


@dataclass
class Pair:
    forecast: np.ndarray
    actual: np.ndarray


def tiny_days(n, seed=0):
    rng = np.random.default_rng(seed)
    days = []
    for _ in range(n):
        amp = rng.uniform(0.3, 1.0)
        base = amp * np.sin(np.linspace(0.0, np.pi, 6))
        days.append(Pair(forecast=np.clip(base, 0, 1),
                         actual=np.clip(base + rng.normal(0, 0.02, 6), 0, 1)))
    return days


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.learning_rate == 1e-3
        assert cfg.batch_size == 32
        assert cfg.steps == 250

    def test_per_source_step_defaults(self):
        assert DEFAULT_STEPS == {"pv": 250, "wind": 200}

    @pytest.mark.parametrize("kwargs", [
        {"learning_rate": 0.0},
        {"adam_beta1": 1.0},
        {"adam_beta2": 0.0},
        {"batch_size": 0},
        {"epochs": -1},
        {"schedule_kind": "quadratic"},
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)

    def test_schedule_dispatch(self):
        lin = make_schedule(TrainConfig(schedule_kind="linear", steps=10))
        cos = make_schedule(TrainConfig(schedule_kind="cosine", steps=10))
        assert lin.kind == "linear" and lin.steps == 10
        assert cos.kind == "cosine" and cos.steps == 10


class TestAdamStep:
    def setup_method(self):
        self.cfg = TrainConfig(learning_rate=0.01)

    def test_zero_gradient_no_movement(self):
        p = Tensor(np.array([1.0, -2.0]), param=True)
        params = {"w": p}
        state = AdamState.init_like(params)
        before = p.data.copy()
        adam_step(params, state, self.cfg, 1)
        np.testing.assert_array_equal(p.data, before)

    def test_moments_decay_toward_zero_on_zero_grad(self):
        p = Tensor(np.array([1.0]), param=True)
        params = {"w": p}
        state = AdamState.init_like(params)
        p.grad[:] = 0.5
        adam_step(params, state, self.cfg, 1)
        m_after_grad = abs(state.m["w"][0])
        p.grad[:] = 0.0
        adam_step(params, state, self.cfg, 2)
        assert abs(state.m["w"][0]) < m_after_grad

    def test_first_step_magnitude_near_learning_rate(self):
        # bias correction makes m_hat/sqrt(v_hat) = sign(g) at step 1
        p = Tensor(np.array([0.0]), param=True)
        params = {"w": p}
        state = AdamState.init_like(params)
        p.grad[:] = 0.37
        adam_step(params, state, self.cfg, 1)
        assert abs(p.data[0]) == pytest.approx(self.cfg.learning_rate, rel=1e-6)
        assert p.data[0] < 0.0

    def test_opposite_gradients_move_symmetrically(self):
        a = Tensor(np.array([1.0]), param=True)
        b = Tensor(np.array([1.0]), param=True)
        params = {"a": a, "b": b}
        state = AdamState.init_like(params)
        a.grad[:] = 0.8
        b.grad[:] = -0.8
        adam_step(params, state, self.cfg, 3)
        assert a.data[0] - 1.0 == -(b.data[0] - 1.0)

    def test_nan_gradient_names_tensor(self):
        p = Tensor(np.array([1.0]), param=True)
        params = {"block3.filt.w": p}
        state = AdamState.init_like(params)
        p.grad[:] = np.nan
        with pytest.raises(TrainingError, match="block3.filt.w"):
            adam_step(params, state, self.cfg, 1)

    def test_rejects_step_zero(self):
        p = Tensor(np.array([1.0]), param=True)
        params = {"w": p}
        with pytest.raises(ValueError, match=">= 1"):
            adam_step(params, AdamState.init_like(params), self.cfg, 0)


class TestTrain:
    def test_empty_training_set_rejected(self):
        with pytest.raises(TrainingError, match="empty"):
            train([], FAST, TINY)

    def test_zero_epochs_returns_initialization(self):
        days = tiny_days(8)
        cfg = TrainConfig(epochs=0, steps=8, seed=12)
        ckpt, curve = train(days, cfg, TINY)
        assert curve == []
        fresh = init_params(TINY, np.random.default_rng(12))
        assert ckpt.weights.keys() == fresh.keys()
        for name in fresh:
            np.testing.assert_array_equal(ckpt.weights[name], fresh[name].data)
        assert ckpt.metadata["final_loss"] == ""

    def test_same_seed_identical_curves_and_weights(self):
        days = tiny_days(10)
        ckpt_a, curve_a = train(days, FAST, TINY)
        ckpt_b, curve_b = train(days, FAST, TINY)
        assert curve_a == curve_b
        for name in ckpt_a.weights:
            np.testing.assert_array_equal(ckpt_a.weights[name], ckpt_b.weights[name])

    def test_different_seed_differs(self):
        days = tiny_days(10)
        _, curve_a = train(days, FAST, TINY)
        _, curve_b = train(days, TrainConfig(epochs=2, batch_size=4, steps=8, seed=2), TINY)
        assert curve_a != curve_b

    def test_loss_drops_on_toy_data(self):
        days = tiny_days(16, seed=3)
        cfg = TrainConfig(epochs=30, batch_size=8, steps=8, seed=4,
                          learning_rate=3e-3)
        _, curve = train(days, cfg, TINY)
        losses = dict(curve)
        assert losses[30] < losses[1]
        assert all(np.isfinite(v) for _, v in curve)

    def test_metadata_recorded(self):
        days = tiny_days(6)

        class Norm:
            vmin, vmax = 0.0, 12.5

        ckpt, curve = train(days, FAST, TINY, source="pv", normalizer=Norm())
        assert ckpt.metadata["source"] == "pv"
        assert ckpt.metadata["seed"] == "1"
        assert ckpt.metadata["epochs_run"] == "2"
        assert float(ckpt.metadata["final_loss"]) == curve[-1][1]
        assert ckpt.norm_range() == (0.0, 12.5)

    def test_checkpoint_rebuilds_model(self):
        days = tiny_days(6)
        ckpt, _ = train(days, FAST, TINY)
        model = ckpt.model()
        assert model.config == TINY
        assert model.sched.steps == FAST.steps
        out = model.predict(np.zeros(6), 1, np.zeros(6))
        assert out.data.shape == (6,)


class TestCheckpointIO:
    def make_ckpt(self, seed=0):
        days = tiny_days(5, seed=seed)
        ckpt, _ = train(days, FAST, TINY)
        return ckpt

    def test_round_trip_bitwise(self, tmp_path):
        ckpt = self.make_ckpt()
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.metadata == ckpt.metadata
        assert loaded.version == ckpt.version
        assert loaded.weights.keys() == ckpt.weights.keys()
        for name in ckpt.weights:
            np.testing.assert_array_equal(loaded.weights[name], ckpt.weights[name])

    def test_round_trip_forward_outputs_identical(self, tmp_path):
        ckpt = self.make_ckpt(seed=5)
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(ckpt, path)
        original = ckpt.model()
        restored = load_checkpoint(path).model()
        rng = np.random.default_rng(6)
        for _ in range(100):
            x = rng.normal(size=6)
            c = rng.uniform(size=6)
            t = int(rng.integers(1, FAST.steps + 1))
            np.testing.assert_array_equal(original.predict(x, t, c).data,
                                          restored.predict(x, t, c).data)

    def test_save_is_byte_deterministic(self, tmp_path):
        ckpt = self.make_ckpt()
        p1, p2 = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
        save_checkpoint(ckpt, p1)
        save_checkpoint(ckpt, p2)
        with open(p1, "rb") as f1, open(p2, "rb") as f2:
            assert f1.read() == f2.read()

    def test_no_temp_files_left(self, tmp_path):
        save_checkpoint(self.make_ckpt(), str(tmp_path / "m.ckpt"))
        assert [p.name for p in tmp_path.iterdir()] == ["m.ckpt"]

    def test_truncation_detected_everywhere(self, tmp_path):
        ckpt = self.make_ckpt()
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(ckpt, path)
        with open(path, "rb") as fh:
            blob = fh.read()
        bad = str(tmp_path / "bad.ckpt")
        for cut in (0, 2, 4, 6, 10, len(blob) // 2, len(blob) - 1):
            with open(bad, "wb") as fh:
                fh.write(blob[:cut])
            with pytest.raises(CheckpointError, match="truncated"):
                load_checkpoint(bad)

    def test_wrong_magic_rejected(self, tmp_path):
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(self.make_ckpt(), path)
        with open(path, "rb") as fh:
            blob = bytearray(fh.read())
        blob[:4] = b"PNG\x00"
        with open(path, "wb") as fh:
            fh.write(blob)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_unknown_version_rejected(self, tmp_path):
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(self.make_ckpt(), path)
        with open(path, "rb") as fh:
            blob = bytearray(fh.read())
        blob[4:8] = (99).to_bytes(4, "little")
        with open(path, "wb") as fh:
            fh.write(blob)
        with pytest.raises(CheckpointError, match="version 99"):
            load_checkpoint(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(self.make_ckpt(), path)
        with open(path, "ab") as fh:
            fh.write(b"x")
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)

    def test_metadata_with_newline_rejected(self, tmp_path):
        ckpt = Checkpoint(metadata={"a": "1\n2"}, weights={})
        with pytest.raises(CheckpointError, match="encodable"):
            save_checkpoint(ckpt, str(tmp_path / "x.ckpt"))


class TestLossCurveCsv:
    def test_format(self):
        buf = io.StringIO()
        write_loss_curve([(1, 0.5), (2, 0.25)], buf)
        assert buf.getvalue() == "epoch,mean_loss\n1,0.5\n2,0.25\n"

    def test_float_round_trip(self):
        buf = io.StringIO()
        value = 1.0 / 3.0
        write_loss_curve([(1, value)], buf)
        line = buf.getvalue().splitlines()[1]
        assert float(line.split(",")[1]) == value
