import numpy as np
import pytest

from corrodet import errors, model
from corrodet.model import ArchConfig, Batch

from conftest import tiny_arch


def tiny_batch(rng, n=3, size=8, dtype=np.float64):
    inputs = rng.normal(0.0, 1.0, size=(n, size, size, 3)).astype(dtype)
    labels = rng.integers(0, 2, size=n)
    return Batch(inputs=inputs, labels=labels)


def finite_diff_check(params, batch, eps, seed):
    """Max relative error between backprop and a central-difference directional
    derivative, one gradient-aligned direction per tensor.

    The difference quotient is always evaluated in float64 at the same weight
    values, so it approximates the true derivative regardless of the precision
    under test.
    """
    _, grads = model.loss_and_grad(params, batch, mode="eval")
    fd = params.copy()
    fd.tensors = {k: v.astype(np.float64) for k, v in fd.tensors.items()}
    fd.state = {k: v.astype(np.float64) for k, v in fd.state.items()}
    fd_inputs = np.asarray(batch.inputs, dtype=np.float64)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for key, tensor in fd.tensors.items():
        g = grads[key].astype(np.float64)
        v = np.sign(g) + 0.1 * rng.normal(size=g.shape)
        v /= max(np.abs(v).max(), 1e-12)
        analytic = float((g * v).sum())
        fd.tensors[key] = tensor + eps * v
        lp = model.loss(model.forward(fd, fd_inputs), batch.labels)
        fd.tensors[key] = tensor - eps * v
        lm = model.loss(model.forward(fd, fd_inputs), batch.labels)
        fd.tensors[key] = tensor
        numeric = (lp - lm) / (2 * eps)
        worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-10))
    return worst


class TestArchConfig:
    def test_defaults_param_count(self):
        params = model.init_model(ArchConfig(), seed=0)
        assert params.num_params() == 174_866

    def test_rejects_empty_stages(self):
        with pytest.raises(ValueError):
            ArchConfig(stage_channels=[])

    def test_rejects_other_norms(self):
        with pytest.raises(ValueError):
            ArchConfig(norm="layer_norm")

    def test_layer_groups_cover_all_tensors(self):
        params = model.init_model(ArchConfig(), seed=0)
        grouped = [k for keys in params.layer_groups.values() for k in keys]
        assert sorted(grouped) == sorted(params.tensors)
        assert list(params.layer_groups) == ["stem", "stage_1", "stage_2", "stage_3", "head"]


class TestInit:
    def test_deterministic(self):
        a = model.init_model(tiny_arch(), seed=7)
        b = model.init_model(tiny_arch(), seed=7)
        for k in a.tensors:
            assert np.array_equal(a.tensors[k], b.tensors[k])

    def test_seed_matters(self):
        a = model.init_model(tiny_arch(), seed=1)
        b = model.init_model(tiny_arch(), seed=2)
        assert not np.array_equal(a.tensors["stem.conv.w"], b.tensors["stem.conv.w"])

    def test_norm_layers_start_as_identity(self):
        params = model.init_model(tiny_arch(), seed=0)
        assert np.all(params.tensors["stem.bn.gamma"] == 1)
        assert np.all(params.tensors["stem.bn.beta"] == 0)
        assert np.all(params.state["stem.bn.mean"] == 0)
        assert np.all(params.state["stem.bn.var"] == 1)

    def test_head_starts_near_zero(self, rng):
        params = model.init_model(tiny_arch(), seed=0, dtype=np.float64)
        logits = model.forward(params, tiny_batch(rng))
        assert np.all(np.abs(logits) < 1.0)

    def test_copy_is_deep(self):
        params = model.init_model(tiny_arch(), seed=0)
        clone = params.copy()
        clone.tensors["stem.conv.w"] += 1.0
        assert not np.array_equal(clone.tensors["stem.conv.w"], params.tensors["stem.conv.w"])


class TestForward:
    def test_logit_shape(self, rng):
        params = model.init_model(tiny_arch(), seed=0, dtype=np.float64)
        logits = model.forward(params, tiny_batch(rng, n=5))
        assert logits.shape == (5, 2)

    def test_shape_mismatch(self, rng):
        params = model.init_model(tiny_arch(), seed=0)
        with pytest.raises(errors.ShapeMismatch):
            model.forward(params, rng.normal(size=(2, 8, 8, 1)))
        with pytest.raises(errors.ShapeMismatch):
            model.forward(params, rng.normal(size=(2, 16, 8, 3)))

    def test_non_finite_input(self, rng):
        params = model.init_model(tiny_arch(), seed=0)
        bad = np.full((1, 8, 8, 3), np.nan)
        with pytest.raises(errors.NonFiniteInput):
            model.forward(params, bad)

    def test_bad_mode(self, rng):
        params = model.init_model(tiny_arch(), seed=0)
        with pytest.raises(ValueError):
            model.forward(params, tiny_batch(rng), mode="test")

    def test_eval_is_pure(self, rng):
        params = model.init_model(tiny_arch(), seed=0, dtype=np.float64)
        before = {k: v.copy() for k, v in params.state.items()}
        model.forward(params, tiny_batch(rng), mode="eval")
        for k in before:
            assert np.array_equal(params.state[k], before[k])

    def test_train_mode_updates_running_stats(self, rng):
        params = model.init_model(tiny_arch(), seed=0, dtype=np.float64)
        model.forward(params, tiny_batch(rng, n=4), mode="train")
        assert not np.all(params.state["stem.bn.mean"] == 0)

    def test_eval_batch_composition_invariant(self, rng):
        # eval-mode BN uses running stats, so each sample's logits are
        # independent of its batchmates
        params = model.init_model(tiny_arch(), seed=3, dtype=np.float64)
        batch = tiny_batch(rng, n=6)
        full = model.forward(params, batch)
        perm = np.array([4, 0, 5, 2, 1, 3])
        permuted = model.forward(params, Batch(inputs=batch.inputs[perm], labels=batch.labels[perm]))
        assert np.allclose(permuted, full[perm], atol=1e-12)
        single = model.forward(params, Batch(inputs=batch.inputs[2:3], labels=batch.labels[2:3]))
        assert np.allclose(single[0], full[2], atol=1e-12)


class TestLoss:
    def test_softmax_rows_normalize(self, rng):
        p = model.softmax(rng.normal(size=(10, 2)) * 50)
        assert np.allclose(p.sum(axis=1), 1.0)
        assert np.all(p >= 0)

    def test_known_value(self):
        logits = np.array([[0.0, 0.0]])
        assert model.loss(logits, [1]) == pytest.approx(np.log(2.0))

    def test_perfect_prediction_low_loss(self):
        logits = np.array([[100.0, -100.0], [-100.0, 100.0]])
        assert model.loss(logits, [0, 1]) < 1e-12

    def test_class_weights_scale_terms(self):
        logits = np.array([[1.0, -1.0], [1.0, -1.0]])
        base = model.loss(logits, [0, 1])
        up = model.loss(logits, [0, 1], class_weights=[1.0, 3.0])
        per0 = model.loss(logits[:1], [0])
        per1 = model.loss(logits[1:], [1])
        assert base == pytest.approx((per0 + per1) / 2)
        assert up == pytest.approx((per0 + 3 * per1) / 2)

    def test_shape_mismatch(self):
        with pytest.raises(errors.ShapeMismatch):
            model.loss(np.zeros((2, 2)), [0])


class TestGradients:
    def test_grads_match_tensor_keys_and_shapes(self, rng):
        params = model.init_model(tiny_arch(), seed=0, dtype=np.float64)
        loss_val, grads = model.loss_and_grad(params, tiny_batch(rng), mode="eval")
        assert np.isfinite(loss_val)
        assert list(grads) == list(params.tensors)
        for k in grads:
            assert grads[k].shape == params.tensors[k].shape

    def test_finite_difference_float64(self, rng):
        params = model.init_model(tiny_arch(), seed=11, dtype=np.float64)
        batch = tiny_batch(rng, n=2)
        assert finite_diff_check(params, batch, eps=1e-6, seed=0) <= 1e-5

    def test_finite_difference_float32(self, rng):
        params = model.init_model(tiny_arch(), seed=11, dtype=np.float32)
        batch = tiny_batch(rng, n=2, dtype=np.float32)
        assert finite_diff_check(params, batch, eps=1e-3, seed=0) <= 1e-2

    def test_class_weights_propagate(self, rng):
        params = model.init_model(tiny_arch(), seed=5, dtype=np.float64)
        batch = tiny_batch(rng, n=4)
        g1 = model.grad(params, batch, mode="eval")
        g2 = model.grad(params, batch, mode="eval", class_weights=[2.0, 2.0])
        assert np.allclose(g2["head.fc.w"], 2 * g1["head.fc.w"])


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        params = model.init_model(tiny_arch(), seed=9)
        params.input_mean = np.array([0.4, 0.5, 0.6])
        params.input_std = np.array([0.2, 0.2, 0.3])
        path = str(tmp_path / "model.ckpt.npz")
        model.save_checkpoint(params, path)
        back = model.load_checkpoint(path)
        assert back.cfg == params.cfg
        assert list(back.tensors) == list(params.tensors)
        for k in params.tensors:
            assert np.array_equal(back.tensors[k], params.tensors[k])
        for k in params.state:
            assert np.array_equal(back.state[k], params.state[k])
        assert np.array_equal(back.input_mean, params.input_mean)
        assert back.layer_groups == params.layer_groups
        logits_a = model.forward(params, tiny_batch(rng))
        logits_b = model.forward(back, tiny_batch(np.random.default_rng(1234)))
        assert np.array_equal(logits_a, logits_b)

    def test_without_standardization(self, tmp_path):
        params = model.init_model(tiny_arch(), seed=9)
        path = str(tmp_path / "m.npz")
        model.save_checkpoint(params, path)
        back = model.load_checkpoint(path)
        assert back.input_mean is None and back.input_std is None

    def test_unknown_format_rejected(self, tmp_path):
        import json

        path = str(tmp_path / "m.npz")
        meta = {"format": "other-1", "arch": {}, "tensor_keys": [], "state_keys": [], "layer_groups": {}}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8))
        with pytest.raises(ValueError):
            model.load_checkpoint(path)
