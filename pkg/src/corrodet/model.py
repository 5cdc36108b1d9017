"""Compact residual tile classifier: forward pass, loss and exact gradients.

Pure numpy (the conv patch shuffling goes through corrodet.kernels). Layout is
NCHW internally; the public batch format is B x H x W x 3. The head follows
the modified-classifier design: global average pool and global max pool
concatenated, then a single 2-unit affine map.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import errors, kernels

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
CHECKPOINT_FORMAT = "corrodet-ckpt-1"
_CONV_CHUNK = 8  # images per im2col slab, bounds peak memory


@dataclass
class ArchConfig:
    stem_channels: int = 16
    stage_channels: list = field(default_factory=lambda: [16, 32, 64])
    blocks_per_stage: int = 2
    num_classes: int = 2
    norm: str = "batch_norm"
    input_size: int = 256

    def __post_init__(self):
        if not self.stage_channels:
            raise ValueError("stage_channels must be nonempty")
        if self.num_classes != 2:
            raise ValueError("num_classes is fixed at 2")
        if self.norm != "batch_norm":
            raise ValueError(f"unsupported norm {self.norm!r}")

    def to_dict(self):
        return {
            "stem_channels": self.stem_channels,
            "stage_channels": list(self.stage_channels),
            "blocks_per_stage": self.blocks_per_stage,
            "num_classes": self.num_classes,
            "norm": self.norm,
            "input_size": self.input_size,
        }


@dataclass
class ModelParams:
    cfg: ArchConfig
    tensors: dict  # trainable parameters, insertion-ordered
    state: dict  # batch-norm running mean/var
    layer_groups: dict  # group name -> list of tensor keys
    input_mean: np.ndarray | None = None  # per-channel standardization
    input_std: np.ndarray | None = None

    def copy(self) -> "ModelParams":
        return ModelParams(
            cfg=self.cfg,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            state={k: v.copy() for k, v in self.state.items()},
            layer_groups={k: list(v) for k, v in self.layer_groups.items()},
            input_mean=None if self.input_mean is None else self.input_mean.copy(),
            input_std=None if self.input_std is None else self.input_std.copy(),
        )

    def num_params(self) -> int:
        return sum(v.size for v in self.tensors.values())


@dataclass
class Batch:
    inputs: np.ndarray  # (B, H, W, 3) standardized
    labels: np.ndarray  # (B,) in {0, 1}


# -- architecture plan -------------------------------------------------------


def _block_specs(cfg: ArchConfig):
    """Yield (prefix, group, in_c, out_c, stride) for every residual block."""
    in_c = cfg.stem_channels
    for si, out_c in enumerate(cfg.stage_channels):
        group = f"stage_{si + 1}"
        for bi in range(cfg.blocks_per_stage):
            stride = 2 if (si > 0 and bi == 0) else 1
            yield f"stage{si + 1}.block{bi}", group, in_c, out_c, stride
            in_c = out_c


def init_model(cfg: ArchConfig, seed: int, dtype=np.float32) -> ModelParams:
    """He-initialized convolutions, unit/zero norms, near-zero head."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    state: dict[str, np.ndarray] = {}
    groups: dict[str, list] = {}

    def conv(name, group, in_c, out_c, k):
        std = np.sqrt(2.0 / (in_c * k * k))
        tensors[name + ".w"] = rng.normal(0.0, std, (out_c, in_c, k, k)).astype(dtype)
        groups.setdefault(group, []).append(name + ".w")

    def bn(name, group, c):
        tensors[name + ".gamma"] = np.ones(c, dtype=dtype)
        tensors[name + ".beta"] = np.zeros(c, dtype=dtype)
        state[name + ".mean"] = np.zeros(c, dtype=dtype)
        state[name + ".var"] = np.ones(c, dtype=dtype)
        groups.setdefault(group, []).extend([name + ".gamma", name + ".beta"])

    conv("stem.conv", "stem", 3, cfg.stem_channels, 3)
    bn("stem.bn", "stem", cfg.stem_channels)
    for prefix, group, in_c, out_c, stride in _block_specs(cfg):
        conv(prefix + ".conv1", group, in_c, out_c, 3)
        bn(prefix + ".bn1", group, out_c)
        conv(prefix + ".conv2", group, out_c, out_c, 3)
        bn(prefix + ".bn2", group, out_c)
        if stride != 1 or in_c != out_c:
            conv(prefix + ".proj", group, in_c, out_c, 1)
            bn(prefix + ".projbn", group, out_c)

    feat = 2 * cfg.stage_channels[-1]
    tensors["head.fc.w"] = rng.normal(0.0, 0.01, (cfg.num_classes, feat)).astype(dtype)
    tensors["head.fc.b"] = np.zeros(cfg.num_classes, dtype=dtype)
    groups.setdefault("head", []).extend(["head.fc.w", "head.fc.b"])

    return ModelParams(cfg=cfg, tensors=tensors, state=state, layer_groups=groups)


# -- primitives --------------------------------------------------------------


def _conv_fwd(x, w, stride, pad):
    n = x.shape[0]
    out_c, in_c, k, _ = w.shape
    oh = kernels.conv_out_size(x.shape[2], k, stride, pad)
    ow = kernels.conv_out_size(x.shape[3], k, stride, pad)
    w2 = w.reshape(out_c, -1)
    out = np.empty((n, out_c, oh, ow), dtype=x.dtype)
    for lo in range(0, n, _CONV_CHUNK):
        hi = min(lo + _CONV_CHUNK, n)
        cols = kernels.im2col(x[lo:hi], k, stride, pad)
        out[lo:hi] = np.matmul(w2, cols).reshape(hi - lo, out_c, oh, ow)
    return out


def _conv_bwd(x, w, dout, stride, pad):
    n = x.shape[0]
    out_c, in_c, k, _ = w.shape
    w2 = w.reshape(out_c, -1)
    dw2 = np.zeros_like(w2, dtype=dout.dtype)
    dx = np.empty_like(x)
    for lo in range(0, n, _CONV_CHUNK):
        hi = min(lo + _CONV_CHUNK, n)
        cols = kernels.im2col(x[lo:hi], k, stride, pad)
        do = dout[lo:hi].reshape(hi - lo, out_c, -1)
        # batched (o,l)x(l,k) GEMMs summed over the batch
        dw2 += np.matmul(do, cols.transpose(0, 2, 1)).sum(axis=0)
        dcols = np.matmul(w2.T, do)
        dx[lo:hi] = kernels.col2im(dcols, x[lo:hi].shape, k, stride, pad)
    return dx, dw2.reshape(w.shape)


def _bn_fwd(x, gamma, beta, rmean, rvar, train):
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        rmean *= 1.0 - BN_MOMENTUM
        rmean += BN_MOMENTUM * mean.astype(rmean.dtype)
        rvar *= 1.0 - BN_MOMENTUM
        rvar += BN_MOMENTUM * var.astype(rvar.dtype)
    else:
        mean, var = rmean, rvar
    std = np.sqrt(var + BN_EPS).astype(x.dtype)
    xhat = (x - mean.astype(x.dtype)[None, :, None, None]) / std[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return out, (xhat, std)


def _bn_bwd(dout, cache, gamma, train):
    xhat, std = cache
    dgamma = np.einsum("bchw,bchw->c", dout, xhat, optimize=True)
    dbeta = dout.sum(axis=(0, 2, 3))
    g_over_std = (gamma / std)[None, :, None, None]
    if train:
        m = dout.shape[0] * dout.shape[2] * dout.shape[3]
        dx = g_over_std * (
            dout
            - dbeta[None, :, None, None] / m
            - xhat * dgamma[None, :, None, None] / m
        )
    else:
        dx = g_over_std * dout
    return dx, dgamma.astype(gamma.dtype), dbeta.astype(gamma.dtype)


# -- forward / backward ------------------------------------------------------


def _forward_impl(params: ModelParams, x, train: bool, want_cache: bool):
    p, s = params.tensors, params.state
    tape = [] if want_cache else None

    def bn(name, h):
        out, cache = _bn_fwd(h, p[name + ".gamma"], p[name + ".beta"], s[name + ".mean"], s[name + ".var"], train)
        return out, cache

    h = _conv_fwd(x, p["stem.conv.w"], 2, 1)
    hbn, stem_bn = bn("stem.bn", h)
    a = np.maximum(hbn, 0)
    if want_cache:
        tape.append({"kind": "stem", "x": x, "bn": stem_bn, "out": a})

    for prefix, _group, in_c, out_c, stride in _block_specs(params.cfg):
        block_in = a
        h1 = _conv_fwd(block_in, p[prefix + ".conv1.w"], stride, 1)
        b1, c1 = bn(prefix + ".bn1", h1)
        r1 = np.maximum(b1, 0)
        h2 = _conv_fwd(r1, p[prefix + ".conv2.w"], 1, 1)
        b2, c2 = bn(prefix + ".bn2", h2)
        if prefix + ".proj.w" in p:
            sp = _conv_fwd(block_in, p[prefix + ".proj.w"], stride, 0)
            skip, cp = bn(prefix + ".projbn", sp)
        else:
            skip, cp = block_in, None
        a = np.maximum(b2 + skip, 0)
        if want_cache:
            tape.append(
                {
                    "kind": "block",
                    "prefix": prefix,
                    "stride": stride,
                    "x": block_in,
                    "r1": r1,
                    "bn1": c1,
                    "bn2": c2,
                    "bnp": cp,
                    "out": a,
                }
            )

    n, c = a.shape[0], a.shape[1]
    flat = a.reshape(n, c, -1)
    gap = flat.mean(axis=2)
    amax = flat.argmax(axis=2)
    gmp = np.take_along_axis(flat, amax[:, :, None], axis=2)[:, :, 0]
    feat = np.concatenate([gap, gmp], axis=1)
    logits = feat @ p["head.fc.w"].T + p["head.fc.b"]
    if want_cache:
        tape.append({"kind": "head", "feat": feat, "amax": amax, "shape": a.shape})
    return logits, tape


def _to_nchw(params: ModelParams, inputs) -> np.ndarray:
    x = np.asarray(inputs)
    if x.ndim != 4 or x.shape[3] != 3:
        raise errors.ShapeMismatch(f"expected (B, H, W, 3), got {x.shape}")
    if x.shape[1] != params.cfg.input_size or x.shape[2] != params.cfg.input_size:
        raise errors.ShapeMismatch(
            f"expected {params.cfg.input_size}^2 inputs, got {x.shape[1]}x{x.shape[2]}"
        )
    if not np.all(np.isfinite(x)):
        raise errors.NonFiniteInput("batch contains non-finite values")
    dtype = next(iter(params.tensors.values())).dtype
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2).astype(dtype, copy=False))


def forward(params: ModelParams, batch: Batch, mode: str = "eval") -> np.ndarray:
    """Logits (B, 2) for a batch. mode='train' uses batch statistics."""
    if mode not in ("train", "eval"):
        raise ValueError(f"bad mode {mode!r}")
    x = _to_nchw(params, batch.inputs if isinstance(batch, Batch) else batch)
    logits, _ = _forward_impl(params, x, train=(mode == "train"), want_cache=False)
    return logits


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss(logits, labels, class_weights=None) -> float:
    """Mean weighted softmax cross-entropy."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise errors.ShapeMismatch(f"logits {logits.shape} vs labels {labels.shape}")
    p = softmax(logits.astype(np.float64))
    w = np.ones(logits.shape[1]) if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    picked = np.clip(p[np.arange(len(labels)), labels], 1e-300, None)
    return float(np.mean(w[labels] * -np.log(picked)))


def loss_and_grad(params: ModelParams, batch: Batch, mode: str = "train", class_weights=None):
    """Loss plus exact reverse-mode gradients for every trainable tensor."""
    if mode not in ("train", "eval"):
        raise ValueError(f"bad mode {mode!r}")
    train = mode == "train"
    x = _to_nchw(params, batch.inputs)
    labels = np.asarray(batch.labels, dtype=np.int64)
    logits, tape = _forward_impl(params, x, train=train, want_cache=True)
    loss_val = loss(logits, labels, class_weights)

    p = params.tensors
    b = len(labels)
    probs = softmax(logits.astype(np.float64))
    w = np.ones(logits.shape[1]) if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0
    dlogits *= (w[labels] / b)[:, None]
    dlogits = dlogits.astype(logits.dtype)

    grads: dict[str, np.ndarray] = {}

    head = tape.pop()
    grads["head.fc.w"] = dlogits.T @ head["feat"]
    grads["head.fc.b"] = dlogits.sum(axis=0)
    dfeat = dlogits @ p["head.fc.w"]
    n, c, hh, ww = head["shape"]
    dgap, dgmp = dfeat[:, :c], dfeat[:, c:]
    dflat = np.repeat(dgap[:, :, None] / (hh * ww), hh * ww, axis=2)
    np.put_along_axis(
        dflat, head["amax"][:, :, None], np.take_along_axis(dflat, head["amax"][:, :, None], axis=2) + dgmp[:, :, None], axis=2
    )
    da = dflat.reshape(n, c, hh, ww)

    for frame in reversed(tape):
        if frame["kind"] == "block":
            prefix, stride = frame["prefix"], frame["stride"]
            dpre = da * (frame["out"] > 0)
            db2, dg2, dbt2 = _bn_bwd(dpre, frame["bn2"], p[prefix + ".bn2.gamma"], train)
            grads[prefix + ".bn2.gamma"] = dg2
            grads[prefix + ".bn2.beta"] = dbt2
            dr1, dw2 = _conv_bwd(frame["r1"], p[prefix + ".conv2.w"], db2, 1, 1)
            grads[prefix + ".conv2.w"] = dw2
            dr1 *= frame["r1"] > 0
            db1, dg1, dbt1 = _bn_bwd(dr1, frame["bn1"], p[prefix + ".bn1.gamma"], train)
            grads[prefix + ".bn1.gamma"] = dg1
            grads[prefix + ".bn1.beta"] = dbt1
            dx_main, dw1 = _conv_bwd(frame["x"], p[prefix + ".conv1.w"], db1, stride, 1)
            grads[prefix + ".conv1.w"] = dw1
            if frame["bnp"] is not None:
                dskip, dgp, dbtp = _bn_bwd(dpre, frame["bnp"], p[prefix + ".projbn.gamma"], train)
                grads[prefix + ".projbn.gamma"] = dgp
                grads[prefix + ".projbn.beta"] = dbtp
                dx_skip, dwp = _conv_bwd(frame["x"], p[prefix + ".proj.w"], dskip, stride, 0)
                grads[prefix + ".proj.w"] = dwp
                da = dx_main + dx_skip
            else:
                da = dx_main + dpre
        else:  # stem
            dpre = da * (frame["out"] > 0)
            dbn, dg, dbt = _bn_bwd(dpre, frame["bn"], p["stem.bn.gamma"], train)
            grads["stem.bn.gamma"] = dg
            grads["stem.bn.beta"] = dbt
            _, dw = _conv_bwd(frame["x"], p["stem.conv.w"], dbn, 2, 1)
            grads["stem.conv.w"] = dw

    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise errors.NonFiniteGradient(key)
    return loss_val, {k: grads[k] for k in p}


def grad(params: ModelParams, batch: Batch, mode: str = "train", class_weights=None):
    """Gradient set matching params.tensors (see loss_and_grad)."""
    _, grads = loss_and_grad(params, batch, mode=mode, class_weights=class_weights)
    return grads


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(params: ModelParams, path: str) -> None:
    meta = {
        "format": CHECKPOINT_FORMAT,
        "arch": params.cfg.to_dict(),
        "tensor_keys": list(params.tensors),
        "state_keys": list(params.state),
        "layer_groups": params.layer_groups,
    }
    arrays = {f"t::{k}": v for k, v in params.tensors.items()}
    arrays.update({f"s::{k}": v for k, v in params.state.items()})
    if params.input_mean is not None:
        arrays["norm::mean"] = params.input_mean
        arrays["norm::std"] = params.input_std
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path: str) -> ModelParams:
    with np.load(str(path), allow_pickle=False) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unknown checkpoint format {meta.get('format')!r}")
        cfg = ArchConfig(**meta["arch"])
        tensors = {k: data[f"t::{k}"] for k in meta["tensor_keys"]}
        state = {k: data[f"s::{k}"] for k in meta["state_keys"]}
        mean = data["norm::mean"] if "norm::mean" in data else None
        std = data["norm::std"] if "norm::std" in data else None
    return ModelParams(
        cfg=cfg,
        tensors=tensors,
        state=state,
        layer_groups=meta["layer_groups"],
        input_mean=mean,
        input_std=std,
    )
