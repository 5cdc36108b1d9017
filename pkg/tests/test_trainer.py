import numpy as np
import pytest

from corrodet import errors, model, trainer
from corrodet.imaging import AugmentConfig
from corrodet.model import Batch
from corrodet.trainer import TileSet, TrainConfig

from conftest import tiny_arch


def toy_tileset(rng, n=32, size=8):
    """Linearly separable tiles: corroded tiles are brighter in the red channel."""
    tiles = rng.integers(40, 90, size=(n, size, size, 3)).astype(np.uint8)
    labels = np.arange(n) % 2
    tiles[labels == 1, :, :, 0] += 120
    return TileSet(tiles=tiles, labels=labels.astype(np.int64))


def quick_cfg(**kw):
    defaults = dict(
        epochs=2, batch_size=8, lr_min=0.02, lr_max=0.2, seed=0,
        augment=AugmentConfig(enabled=False),
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestTrainConfig:
    def test_bad_lr_order(self):
        with pytest.raises(errors.BadRange):
            TrainConfig(lr_min=1.0, lr_max=0.1)

    def test_bad_pct_start(self):
        with pytest.raises(ValueError):
            TrainConfig(pct_start=0.0)
        with pytest.raises(ValueError):
            TrainConfig(pct_start=1.0)

    def test_bad_epochs(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)


class TestStandardization:
    def test_round_trip_moments(self, rng):
        tiles = rng.integers(0, 256, size=(20, 8, 8, 3), dtype=np.uint8)
        mean, std = trainer.compute_standardization(tiles)
        z = trainer.standardize(tiles, mean, std, dtype=np.float64)
        assert np.allclose(z.mean(axis=(0, 1, 2)), 0.0, atol=1e-9)
        assert np.allclose(z.std(axis=(0, 1, 2)), 1.0, atol=1e-9)

    def test_constant_channel_guard(self):
        tiles = np.full((4, 8, 8, 3), 100, dtype=np.uint8)
        mean, std = trainer.compute_standardization(tiles)
        assert np.all(std >= 1e-6)
        z = trainer.standardize(tiles, mean, std)
        assert np.all(np.isfinite(z))


class TestDiscriminativeLrs:
    def test_endpoints(self):
        lrs = trainer.discriminative_lrs(5, 1e-6, 5e-4)
        assert lrs[0] == pytest.approx(1e-6)
        assert lrs[-1] == pytest.approx(5e-4)

    def test_constant_geometric_ratio(self):
        lrs = trainer.discriminative_lrs(5, 1e-6, 5e-4)
        expected_ratio = 500.0 ** 0.25
        for a, b in zip(lrs, lrs[1:]):
            assert b / a == pytest.approx(expected_ratio, rel=1e-12)

    def test_five_group_reference_values(self):
        lrs = trainer.discriminative_lrs(5, 1e-6, 5e-4)
        expected = [1.0000e-6, 4.728708e-6, 2.236068e-5, 1.057371e-4, 5.0000e-4]
        assert np.allclose(lrs, expected, rtol=1e-5)

    def test_single_group(self):
        assert trainer.discriminative_lrs(1, 1e-6, 5e-4) == [5e-4]

    def test_bad_inputs(self):
        with pytest.raises(errors.BadRange):
            trainer.discriminative_lrs(3, 1.0, 0.1)
        with pytest.raises(ValueError):
            trainer.discriminative_lrs(0, 1e-6, 5e-4)


class TestOneCycleSchedule:
    def test_boundary_values(self):
        cfg = TrainConfig(pct_start=0.3)
        total = 1000
        lr0, m0 = trainer.one_cycle_schedule(0, total, cfg)
        assert lr0 == pytest.approx(cfg.lr_max / cfg.div_factor, rel=1e-12)
        assert m0 == pytest.approx(cfg.momentum_range[0], rel=1e-12)
        lr_end, m_end = trainer.one_cycle_schedule(total - 1, total, cfg)
        assert lr_end == pytest.approx(cfg.lr_max / cfg.final_div_factor, rel=1e-9)
        assert m_end == pytest.approx(cfg.momentum_range[0], rel=1e-9)

    def test_peak_at_warmup_end(self):
        cfg = TrainConfig(pct_start=0.3)
        total = 1000
        lr_peak, m_peak = trainer.one_cycle_schedule(300, total, cfg)
        assert lr_peak == pytest.approx(cfg.lr_max, rel=1e-12)
        assert m_peak == pytest.approx(cfg.momentum_range[1], rel=1e-12)

    def test_warmup_rises_anneal_falls(self):
        cfg = TrainConfig(pct_start=0.3)
        total = 200
        lrs = [trainer.one_cycle_schedule(s, total, cfg)[0] for s in range(total)]
        warm = int(cfg.pct_start * total)
        assert all(a <= b for a, b in zip(lrs[:warm], lrs[1 : warm + 1]))
        assert all(a >= b for a, b in zip(lrs[warm:], lrs[warm + 1 :]))

    def test_momentum_opposes_lr(self):
        cfg = TrainConfig(pct_start=0.3)
        total = 200
        pairs = [trainer.one_cycle_schedule(s, total, cfg) for s in range(total)]
        warm = int(cfg.pct_start * total)
        moms = [m for _, m in pairs]
        assert all(a >= b for a, b in zip(moms[:warm], moms[1 : warm + 1]))
        assert all(a <= b for a, b in zip(moms[warm:], moms[warm + 1 :]))

    def test_step_out_of_range(self):
        cfg = TrainConfig()
        with pytest.raises(errors.StepOutOfRange):
            trainer.one_cycle_schedule(-1, 100, cfg)
        with pytest.raises(errors.StepOutOfRange):
            trainer.one_cycle_schedule(100, 100, cfg)


class QuadraticObjective:
    """1-d strictly convex surrogate: loss = 0.5 * w^2 routed through a fake
    tensor so lr_find can be checked without a network."""

    def __call__(self, params, batch):
        w = params.tensors["head.fc.b"]
        loss = 0.5 * float((w**2).sum()) + 1.0
        return loss, {"head.fc.b": w.copy()}


class TestLrFind:
    def test_geometric_lr_sequence(self, rng):
        params = model.init_model(tiny_arch(), seed=0, dtype=np.float64)
        params.tensors["head.fc.b"] += 1.0
        curve = trainer.lr_find(
            params, [None], lr_lo=1e-4, lr_hi=1.0, steps=40, objective=QuadraticObjective()
        )
        k = np.arange(len(curve.learning_rates))
        expected = 1e-4 * (1.0 / 1e-4) ** (k / 39)
        assert np.allclose(curve.learning_rates, expected, rtol=1e-12)

    def test_original_params_untouched(self, rng):
        params = model.init_model(tiny_arch(), seed=0, dtype=np.float64)
        before = {k: v.copy() for k, v in params.tensors.items()}
        tiles = rng.normal(size=(8, 8, 8, 3))
        batch = Batch(inputs=tiles, labels=rng.integers(0, 2, size=8))
        trainer.lr_find(params, [batch], lr_lo=1e-5, lr_hi=0.5, steps=15)
        for k in before:
            assert np.array_equal(params.tensors[k], before[k])

    def test_suggestion_in_descending_region(self, rng):
        # separable toy task: the suggested lr must sit where loss was falling
        params = model.init_model(tiny_arch(), seed=1, dtype=np.float64)
        ts = toy_tileset(rng, n=48)
        mean, std = trainer.compute_standardization(ts.tiles)
        batches = [
            Batch(
                inputs=trainer.standardize(ts.tiles[lo : lo + 16], mean, std, np.float64),
                labels=ts.labels[lo : lo + 16],
            )
            for lo in range(0, 48, 16)
        ]
        curve = trainer.lr_find(params, batches, lr_lo=1e-5, lr_hi=20.0, steps=60)
        slopes = np.gradient(np.asarray(curve.smoothed_losses), np.log(curve.learning_rates))
        at = int(np.argmin(np.abs(np.asarray(curve.learning_rates) - curve.suggestion * 10)))
        assert slopes[at] < 0

    def test_early_stop_on_divergence(self):
        params = model.init_model(tiny_arch(), seed=0, dtype=np.float64)
        params.tensors["head.fc.b"] += 1.0
        curve = trainer.lr_find(
            params, [None], lr_lo=1e-3, lr_hi=1e4, steps=80, objective=QuadraticObjective()
        )
        assert len(curve.learning_rates) < 80

    def test_bad_range(self):
        params = model.init_model(tiny_arch(), seed=0)
        with pytest.raises(errors.BadRange):
            trainer.lr_find(params, [None], lr_lo=1.0, lr_hi=0.1)

    def test_empty_batches(self):
        params = model.init_model(tiny_arch(), seed=0)
        with pytest.raises(errors.EmptyStream):
            trainer.lr_find(params, [])


class TestTrain:
    def test_learns_separable_toy(self, rng):
        params = model.init_model(tiny_arch(), seed=0, dtype=np.float64)
        ts = toy_tileset(rng, n=32)
        params, history = trainer.train(params, ts, ts, quick_cfg(epochs=6))
        assert history.train_loss[-1] < history.train_loss[0]
        probs = trainer.predict_probs(params, ts.tiles, batch_size=16)
        acc = np.mean((probs >= 0.5).astype(int) == ts.labels)
        assert acc >= 0.9

    def test_history_lengths(self, rng):
        params = model.init_model(tiny_arch(), seed=0)
        ts = toy_tileset(rng)
        _, history = trainer.train(params, ts, ts, quick_cfg(epochs=3))
        assert len(history.train_loss) == len(history.val_loss) == len(history.seconds) == 3

    def test_deterministic_given_seed(self, rng):
        ts = toy_tileset(rng)
        runs = []
        for _ in range(2):
            params = model.init_model(tiny_arch(), seed=4, dtype=np.float64)
            params, history = trainer.train(params, ts, ts, quick_cfg(epochs=2, seed=9))
            runs.append((history.train_loss, history.val_loss, params))
        assert runs[0][0] == runs[1][0]
        assert runs[0][1] == runs[1][1]
        for k in runs[0][2].tensors:
            assert np.array_equal(runs[0][2].tensors[k], runs[1][2].tensors[k])

    def test_sets_standardization(self, rng):
        params = model.init_model(tiny_arch(), seed=0)
        ts = toy_tileset(rng)
        trainer.train(params, ts, ts, quick_cfg(epochs=1))
        assert params.input_mean is not None and params.input_std is not None

    def test_empty_split_rejected(self, rng):
        params = model.init_model(tiny_arch(), seed=0)
        ts = toy_tileset(rng)
        empty = TileSet(tiles=np.zeros((0, 0, 0, 3), np.uint8), labels=np.zeros(0, np.int64))
        with pytest.raises(errors.EmptyStream):
            trainer.train(params, empty, ts, quick_cfg())
        with pytest.raises(errors.EmptyStream):
            trainer.train(params, ts, empty, quick_cfg())

    def test_non_finite_loss_carries_history(self, rng):
        params = model.init_model(tiny_arch(), seed=0, dtype=np.float32)
        ts = toy_tileset(rng)
        with pytest.raises(errors.NonFiniteLoss) as exc_info, np.errstate(all="ignore"):
            trainer.train(params, ts, ts, quick_cfg(epochs=2, lr_min=1e17, lr_max=1e18))
        assert isinstance(exc_info.value.history, trainer.TrainHistory)

    def test_class_weights_change_outcome(self, rng):
        ts = toy_tileset(rng)
        a = model.init_model(tiny_arch(), seed=0, dtype=np.float64)
        b = model.init_model(tiny_arch(), seed=0, dtype=np.float64)
        trainer.train(a, ts, ts, quick_cfg(epochs=1))
        trainer.train(b, ts, ts, quick_cfg(epochs=1, class_weights=(1.0, 5.0)))
        assert not np.array_equal(a.tensors["head.fc.w"], b.tensors["head.fc.w"])

    def test_history_csv(self, tmp_path):
        history = trainer.TrainHistory(train_loss=[1.0, 0.5], val_loss=[1.1, 0.6], seconds=[2.0, 2.1])
        path = tmp_path / "history.csv"
        history.save(str(path))
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "epoch,train_loss,val_loss,seconds"
        assert rows[1].startswith("0,1,1.1")
        assert len(rows) == 3


class TestPredictProbs:
    def test_requires_standardization(self, rng):
        params = model.init_model(tiny_arch(), seed=0)
        with pytest.raises(ValueError):
            trainer.predict_probs(params, rng.integers(0, 255, (2, 8, 8, 3), dtype=np.uint8))

    def test_batching_invariant(self, rng):
        params = model.init_model(tiny_arch(), seed=0, dtype=np.float64)
        params.input_mean = np.array([0.5, 0.5, 0.5])
        params.input_std = np.array([0.25, 0.25, 0.25])
        tiles = rng.integers(0, 255, (10, 8, 8, 3), dtype=np.uint8)
        a = trainer.predict_probs(params, tiles, batch_size=3)
        b = trainer.predict_probs(params, tiles, batch_size=10)
        assert np.allclose(a, b, atol=1e-12)
        assert a.shape == (10,)

    def test_empty_input(self):
        params = model.init_model(tiny_arch(), seed=0)
        params.input_mean = np.zeros(3)
        params.input_std = np.ones(3)
        out = trainer.predict_probs(params, np.zeros((0, 8, 8, 3), dtype=np.uint8))
        assert out.shape == (0,)
