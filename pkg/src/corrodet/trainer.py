"""Training orchestration: LR finder, discriminative log-spaced layer rates,
one-cycle schedule and the SGD-with-momentum epoch loop."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import errors, imaging, model
from .imaging import AugmentConfig

SUPPORTED_BATCH_SIZES = (32, 64, 128, 256)


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    lr_min: float = 1e-6
    lr_max: float = 5e-4
    pct_start: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4
    momentum_range: tuple = (0.95, 0.85)  # (high, low)
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    augment_val: bool = False
    class_weights: tuple | None = None

    def __post_init__(self):
        if self.lr_min > self.lr_max:
            raise errors.BadRange("lr_min must be <= lr_max")
        if not (0.0 < self.pct_start < 1.0):
            raise ValueError("pct_start must be in (0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class LossCurve:
    learning_rates: list
    smoothed_losses: list
    suggestion: float


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def save(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "seconds"])
            for i, (tr, vl, sec) in enumerate(zip(self.train_loss, self.val_loss, self.seconds)):
                writer.writerow([i, f"{tr:.10g}", f"{vl:.10g}", f"{sec:.3f}"])


@dataclass
class TileSet:
    tiles: np.ndarray  # (N, H, W, 3) uint8
    labels: np.ndarray  # (N,)

    def __len__(self):
        return len(self.labels)

    @classmethod
    def from_manifest(cls, manifest, split):
        recs = manifest.for_split(split)
        tiles = np.stack([imaging.load_image(r.path).pixels for r in recs]) if recs else np.zeros((0, 0, 0, 3), np.uint8)
        labels = np.array([r.label for r in recs], dtype=np.int64)
        return cls(tiles=tiles, labels=labels)


def compute_standardization(tiles: np.ndarray):
    """Per-channel mean/std of tiles scaled to [0, 1]."""
    x = tiles.astype(np.float64) / 255.0
    mean = x.mean(axis=(0, 1, 2))
    std = np.maximum(x.std(axis=(0, 1, 2)), 1e-6)
    return mean, std


def standardize(tiles: np.ndarray, mean, std, dtype=np.float32):
    x = tiles.astype(np.float64) / 255.0
    return ((x - mean[None, None, None, :]) / std[None, None, None, :]).astype(dtype)


def discriminative_lrs(n_groups: int, lr_min: float, lr_max: float):
    """Log-spaced per-group learning rates, lr_min for the first group up to
    lr_max for the last."""
    if lr_min > lr_max:
        raise errors.BadRange(f"lr_min {lr_min} > lr_max {lr_max}")
    if n_groups < 1:
        raise ValueError("n_groups must be >= 1")
    if n_groups == 1:
        return [lr_max]
    ratio = lr_max / lr_min
    return [lr_min * ratio ** (g / (n_groups - 1)) for g in range(n_groups)]


def _cos_interp(start, end, t):
    return start + (end - start) * (1.0 - np.cos(np.pi * t)) / 2.0


def one_cycle_schedule(step: int, total_steps: int, cfg: TrainConfig):
    """(lr for the top layer group, momentum) at a given optimizer step.

    Cosine warmup from lr_max/div_factor to lr_max over the first pct_start of
    the run, cosine anneal down to lr_max/final_div_factor after; momentum
    cycles oppositely between momentum_range = (high, low).
    """
    if not (0 <= step < total_steps):
        raise errors.StepOutOfRange(f"step {step} not in [0, {total_steps})")
    hi_m, lo_m = cfg.momentum_range
    warm = cfg.pct_start * total_steps
    if step < warm:
        t = step / warm
        lr = _cos_interp(cfg.lr_max / cfg.div_factor, cfg.lr_max, t)
        mom = _cos_interp(hi_m, lo_m, t)
    else:
        denom = (total_steps - 1) - warm
        t = (step - warm) / denom if denom > 0 else 1.0
        lr = _cos_interp(cfg.lr_max, cfg.lr_max / cfg.final_div_factor, t)
        mom = _cos_interp(lo_m, hi_m, t)
    return float(lr), float(mom)


def lr_find(
    params: model.ModelParams,
    batches,
    lr_lo: float = 1e-7,
    lr_hi: float = 10.0,
    steps: int = 100,
    objective=None,
    beta: float = 0.98,
):
    """Mock training sweep over geometrically increasing learning rates.

    Runs plain SGD on a disposable copy of params; records bias-corrected
    exponentially smoothed loss and stops early once it exceeds 4x the best
    seen. The suggestion is the lr at the steepest negative slope of the
    smoothed curve, divided by 10.
    """
    if not lr_lo < lr_hi:
        raise errors.BadRange("lr_lo must be < lr_hi")
    if steps < 10:
        raise ValueError("steps must be >= 10")
    work = params.copy()
    if objective is None:
        objective = lambda prm, batch: model.loss_and_grad(prm, batch, mode="train")

    batch_list = list(batches)
    if not batch_list:
        raise errors.EmptyStream("lr_find needs at least one batch")

    lrs, smoothed = [], []
    avg, best = 0.0, np.inf
    for k in range(steps):
        lr = lr_lo * (lr_hi / lr_lo) ** (k / (steps - 1))
        batch = batch_list[k % len(batch_list)]
        loss_val, grads = objective(work, batch)
        if k == 0 and not np.isfinite(loss_val):
            raise errors.DivergedImmediately(f"loss {loss_val} at step 0")
        avg = beta * avg + (1.0 - beta) * loss_val
        smooth = avg / (1.0 - beta ** (k + 1))
        lrs.append(lr)
        smoothed.append(smooth)
        if smooth > 4.0 * best or not np.isfinite(loss_val):
            break
        best = min(best, smooth)
        for key, g in grads.items():
            work.tensors[key] -= (lr * g).astype(work.tensors[key].dtype)

    log_lr = np.log(lrs)
    slopes = np.gradient(np.asarray(smoothed), log_lr) if len(lrs) > 1 else np.array([0.0])
    suggestion = float(lrs[int(np.argmin(slopes))] / 10.0)
    return LossCurve(learning_rates=lrs, smoothed_losses=smoothed, suggestion=suggestion)


def _iter_batches(n, batch_size, order):
    for lo in range(0, n, batch_size):
        yield order[lo : lo + batch_size]


def train(
    params: model.ModelParams,
    train_split: TileSet,
    val_split: TileSet,
    cfg: TrainConfig,
    log=None,
):
    """One-cycle SGD with momentum and discriminative per-group rates.

    Augmentation is applied to training batches (and, only if cfg.augment_val,
    to validation batches); validation loss is computed in eval mode. Returns
    (params, history) with params trained in place.
    """
    if len(train_split) == 0 or len(val_split) == 0:
        raise errors.EmptyStream("train and val splits must be nonempty")

    mean, std = compute_standardization(train_split.tiles)
    params.input_mean, params.input_std = mean, std

    groups = list(params.layer_groups)
    base_lrs = dict(zip(groups, discriminative_lrs(len(groups), cfg.lr_min, cfg.lr_max)))
    key_lr = {key: base_lrs[g] for g in groups for key in params.layer_groups[g]}

    n = len(train_split)
    steps_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    total_steps = cfg.epochs * steps_per_epoch
    rng = np.random.default_rng(cfg.seed)
    velocity = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    history = TrainHistory()

    step = 0
    for epoch in range(cfg.epochs):
        t0 = time.time()
        order = rng.permutation(n)
        epoch_losses = []
        for idx in _iter_batches(n, cfg.batch_size, order):
            tiles = train_split.tiles[idx]
            if cfg.augment.enabled:
                tiles = np.stack([imaging.augment(t, cfg.augment, rng) for t in tiles])
            batch = model.Batch(
                inputs=standardize(tiles, mean, std), labels=train_split.labels[idx]
            )
            lr_top, momentum = one_cycle_schedule(step, total_steps, cfg)
            try:
                loss_val, grads = model.loss_and_grad(
                    params, batch, mode="train", class_weights=cfg.class_weights
                )
            except errors.NonFiniteGradient as exc:
                err = errors.NonFiniteLoss(f"diverged at step {step}: {exc}")
                err.history = history
                raise err from exc
            if not np.isfinite(loss_val):
                err = errors.NonFiniteLoss(f"loss {loss_val} at step {step}")
                err.history = history
                raise err
            scale = lr_top / cfg.lr_max
            for key, g in grads.items():
                v = velocity[key]
                v *= momentum
                v -= (key_lr[key] * scale * g).astype(v.dtype)
                params.tensors[key] += v
            epoch_losses.append(loss_val)
            step += 1

        val_loss = evaluate_loss(params, val_split, cfg, rng if cfg.augment_val else None)
        history.train_loss.append(float(np.mean(epoch_losses)))
        history.val_loss.append(val_loss)
        history.seconds.append(time.time() - t0)
        if log:
            log(epoch, history)
    return params, history


def evaluate_loss(params, tileset: TileSet, cfg: TrainConfig, aug_rng=None, batch_size=None):
    """Mean eval-mode loss over a tile set."""
    bs = batch_size or cfg.batch_size
    losses, weights = [], []
    for lo in range(0, len(tileset), bs):
        tiles = tileset.tiles[lo : lo + bs]
        if aug_rng is not None and cfg.augment.enabled:
            tiles = np.stack([imaging.augment(t, cfg.augment, aug_rng) for t in tiles])
        batch = model.Batch(
            inputs=standardize(tiles, params.input_mean, params.input_std),
            labels=tileset.labels[lo : lo + bs],
        )
        logits = model.forward(params, batch, mode="eval")
        losses.append(model.loss(logits, batch.labels, cfg.class_weights))
        weights.append(len(batch.labels))
    return float(np.average(losses, weights=weights))


def predict_probs(params, tiles: np.ndarray, batch_size: int = 64):
    """Eval-mode corrosion probability (class 1) for a stack of uint8 tiles."""
    if params.input_mean is None:
        raise ValueError("params carry no standardization constants; train first")
    out = []
    for lo in range(0, len(tiles), batch_size):
        x = standardize(tiles[lo : lo + batch_size], params.input_mean, params.input_std)
        logits = model.forward(params, x, mode="eval")
        out.append(model.softmax(logits.astype(np.float64))[:, 1])
    return np.concatenate(out) if out else np.zeros(0)
