"""The learnable lifting network.

Layers aggregate node features through the normalized adjacency (and its
hop powers), blend in the initial post-embedding features with weight
``alpha``, scale each learnable matrix by a depth-dependent factor, and
concatenate per-hop blocks.  Three layer kinds are supported:

* ``gcn_baseline`` — plain propagation ``sigma(S H W)``;
* ``ifnet``        — single-hop smoothing with the initial-feature
  residual, ``sigma(((1-a) S H + a X0) (b_l W))``;
* ``hoifnet``      — the multi-hop generalization concatenating
  ``((1-a) S^k H + a X0) (b_l W_k)`` over ``k = 1..K``.

Forward passes cache activations; :func:`network_backward` produces exact
reverse-mode gradients for every trainable tensor, including batchnorm in
train mode.  Checkpoints are a JSON manifest plus a flat little-endian
float64 blob.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph import GraphOperators

LAYER_KINDS = ("gcn_baseline", "ifnet", "hoifnet")


class CheckpointError(ValueError):
    """Checkpoint manifest and blob disagree, or required fields differ."""


@dataclass
class NetworkConfig:
    """Architecture hyperparameters.

    ``hops`` only matters for ``hoifnet``; the single-hop kinds ignore
    it.  ``hidden_width`` must be divisible by the effective hop count so
    per-hop blocks tile the layer width exactly.
    """

    num_layers: int = 10
    hidden_width: int = 96
    hops: int = 3
    alpha: float = 0.2
    beta: float = 0.5
    input_dim: int = 2
    output_dim: int = 3
    use_batchnorm: bool = True
    layer_kind: str = "hoifnet"
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if self.layer_kind not in LAYER_KINDS:
            raise ValueError(f"layer_kind must be one of {LAYER_KINDS}, got {self.layer_kind!r}")
        if self.num_layers < 2:
            raise ValueError(f"num_layers must be >= 2, got {self.num_layers}")
        if self.hops < 1:
            raise ValueError(f"hops must be >= 1, got {self.hops}")
        if self.hidden_width < 1 or self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("widths must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.beta <= 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.hidden_width % self.effective_hops != 0:
            raise ValueError(
                f"hidden_width {self.hidden_width} is not divisible by "
                f"hops {self.effective_hops}"
            )

    @property
    def effective_hops(self) -> int:
        return self.hops if self.layer_kind == "hoifnet" else 1

    @property
    def block_width(self) -> int:
        return self.hidden_width // self.effective_hops


def scale_factor(beta: float, layer_index: int) -> float:
    """Depth-dependent weight shrinkage ``log(1 + beta / (1 + layer_index))``.

    Strictly decreasing in ``layer_index`` and tending to zero, so deeper
    layers perturb features progressively less.
    """
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if layer_index < 0:
        raise ValueError(f"layer_index must be >= 0, got {layer_index}")
    return math.log1p(beta / (1.0 + layer_index))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


# ---------------------------------------------------------------------------
# Parameters.


@dataclass
class BatchNormParams:
    """Per-feature affine parameters and running statistics."""

    gain: np.ndarray
    shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    def copy(self) -> "BatchNormParams":
        return BatchNormParams(
            self.gain.copy(), self.shift.copy(), self.running_mean.copy(), self.running_var.copy()
        )


@dataclass
class LayerParams:
    weights: list[np.ndarray]
    bn: BatchNormParams | None

    def copy(self) -> "LayerParams":
        return LayerParams([w.copy() for w in self.weights], self.bn.copy() if self.bn else None)


@dataclass
class NetworkParams:
    """All tensors of the network, in fixed declaration order."""

    input_embed: np.ndarray
    layers: list[LayerParams]
    output_proj: np.ndarray

    def named_tensors(self, trainable_only: bool = False):
        """Yield ``(name, array)`` pairs in declaration order.

        Running batchnorm statistics are included unless
        ``trainable_only`` is set; they are carried by checkpoints but
        receive no gradients.
        """
        yield "input_embed", self.input_embed
        for idx, layer in enumerate(self.layers):
            for k, w in enumerate(layer.weights):
                yield f"layer{idx}.w{k + 1}", w
            if layer.bn is not None:
                yield f"layer{idx}.bn_gain", layer.bn.gain
                yield f"layer{idx}.bn_shift", layer.bn.shift
                if not trainable_only:
                    yield f"layer{idx}.bn_running_mean", layer.bn.running_mean
                    yield f"layer{idx}.bn_running_var", layer.bn.running_var
        yield "output_proj", self.output_proj

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.input_embed.copy(),
            [layer.copy() for layer in self.layers],
            self.output_proj.copy(),
        )


def params_init(cfg: NetworkConfig, seed) -> NetworkParams:
    """Glorot-uniform weights (bound ``sqrt(6/(fan_in+fan_out))``), unit
    batchnorm gains, zero shifts; deterministic for a given seed."""
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    width = cfg.hidden_width
    input_embed = glorot(cfg.input_dim, width)
    layers = []
    for idx in range(cfg.num_layers):
        weights = [glorot(width, cfg.block_width) for _ in range(cfg.effective_hops)]
        has_bn = cfg.use_batchnorm and idx < cfg.num_layers - 1
        bn = (
            BatchNormParams(
                gain=np.ones(width),
                shift=np.zeros(width),
                running_mean=np.zeros(width),
                running_var=np.ones(width),
            )
            if has_bn
            else None
        )
        layers.append(LayerParams(weights=weights, bn=bn))
    output_proj = glorot(width, cfg.output_dim)
    return NetworkParams(input_embed=input_embed, layers=layers, output_proj=output_proj)


def params_count(params: NetworkParams, trainable_only: bool = True) -> int:
    """Total number of scalar parameters."""
    return int(sum(t.size for _, t in params.named_tensors(trainable_only=trainable_only)))


# ---------------------------------------------------------------------------
# Layer rules (functional forms).


def _check_feature_shapes(s_norm: np.ndarray, h: np.ndarray, w: np.ndarray) -> None:
    if h.shape[-2] != s_norm.shape[0]:
        raise ValueError(f"feature rows {h.shape} do not match graph size {s_norm.shape[0]}")
    if w.shape[0] != h.shape[-1]:
        raise ValueError(f"weight shape {w.shape} does not match feature width {h.shape[-1]}")


def gcn_layer_forward(s_norm: np.ndarray, h, w, activate: bool = True) -> np.ndarray:
    """Plain propagation ``sigma(S @ H @ W)`` (ReLU when ``activate``)."""
    h = np.asarray(h, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check_feature_shapes(s_norm, h, w)
    out = (s_norm @ h) @ w
    return relu(out) if activate else out


def ifnet_layer_forward(
    ops: GraphOperators, h, x0, w, alpha: float, beta_ell: float, activate: bool = True
) -> np.ndarray:
    """Single-hop smoothing layer ``sigma(((1-a) S H + a X0) (b_l W))``."""
    h = np.asarray(h, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x0.shape != h.shape:
        raise ValueError(f"initial features {x0.shape} must match layer input {h.shape}")
    s_norm = ops.s_powers[0]
    _check_feature_shapes(s_norm, h, w)
    agg = (1.0 - alpha) * (s_norm @ h) + alpha * x0
    out = agg @ (beta_ell * w)
    return relu(out) if activate else out


def hoif_layer_forward(
    ops: GraphOperators, h, x0, weights, alpha: float, beta_ell: float, activate: bool = True
) -> np.ndarray:
    """Multi-hop layer concatenating ``((1-a) S^k H + a X0) (b_l W_k)``.

    ``weights`` holds one matrix per hop; block widths are whatever the
    matrices provide, so callers control the output width.
    """
    h = np.asarray(h, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != h.shape:
        raise ValueError(f"initial features {x0.shape} must match layer input {h.shape}")
    if len(weights) > len(ops.s_powers):
        raise ValueError(
            f"{len(weights)} hop weights but only {len(ops.s_powers)} cached powers"
        )
    blocks = []
    for k, w in enumerate(weights):
        w = np.asarray(w, dtype=np.float64)
        _check_feature_shapes(ops.s_powers[k], h, w)
        agg = (1.0 - alpha) * (ops.s_powers[k] @ h) + alpha * x0
        blocks.append(agg @ (beta_ell * w))
    out = np.concatenate(blocks, axis=-1)
    return relu(out) if activate else out


# ---------------------------------------------------------------------------
# Batch normalization.


def _batchnorm_forward(z, bn: BatchNormParams, eps: float, momentum: float, mode: str):
    flat = z.reshape(-1, z.shape[-1])
    if mode == "train":
        mean = flat.mean(axis=0)
        var = flat.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (flat - mean) * inv_std
        count = flat.shape[0]
        unbiased = var * (count / (count - 1)) if count > 1 else var
        bn.running_mean[:] = (1.0 - momentum) * bn.running_mean + momentum * mean
        bn.running_var[:] = (1.0 - momentum) * bn.running_var + momentum * unbiased
        cache = (xhat, inv_std)
    else:
        inv_std = 1.0 / np.sqrt(bn.running_var + eps)
        xhat = (flat - bn.running_mean) * inv_std
        cache = None
    out = bn.gain * xhat + bn.shift
    return out.reshape(z.shape), cache


def _batchnorm_backward(d_out, bn: BatchNormParams, cache):
    xhat, inv_std = cache
    shape = d_out.shape
    flat = d_out.reshape(-1, shape[-1])
    d_gain = (flat * xhat).sum(axis=0)
    d_shift = flat.sum(axis=0)
    d_xhat = flat * bn.gain
    d_in = inv_std * (
        d_xhat - d_xhat.mean(axis=0) - xhat * (d_xhat * xhat).mean(axis=0)
    )
    return d_in.reshape(shape), d_gain, d_shift


# ---------------------------------------------------------------------------
# Full network.


@dataclass
class _LayerCache:
    h_in: np.ndarray
    aggregates: list[np.ndarray]
    pre_activation: np.ndarray | None
    bn_cache: tuple | None


@dataclass
class ForwardCache:
    """Activations retained by a forward pass for the backward pass."""

    cfg: NetworkConfig
    ops: GraphOperators
    params: NetworkParams
    mode: str
    x2d: np.ndarray
    x0: np.ndarray
    layers: list[_LayerCache] = field(default_factory=list)
    h_final: np.ndarray | None = None
    consumed: bool = False


def network_forward(
    cfg: NetworkConfig,
    ops: GraphOperators,
    params: NetworkParams,
    x2d,
    mode: str = "eval",
) -> tuple[np.ndarray, ForwardCache]:
    """Run the full pipeline: embed, stacked layers, output projection.

    ``x2d`` is one pose ``(N, input_dim)`` or a batch ``(B, N, input_dim)``;
    the output matches.  Train mode normalizes with batch statistics (and
    updates the running ones in place); eval mode uses running statistics
    and is a pure function of its inputs.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.ascontiguousarray(x2d, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    n = ops.num_nodes
    if x.ndim != 3 or x.shape[1] != n or x.shape[2] != cfg.input_dim:
        raise ValueError(
            f"input shape {np.shape(x2d)} does not match "
            f"(batch, {n}, {cfg.input_dim})"
        )
    if not np.isfinite(x).all():
        raise ValueError("input contains non-finite entries")
    if cfg.effective_hops > ops.max_hop:
        raise ValueError(f"config needs {cfg.effective_hops} hop powers, operators cache {ops.max_hop}")
    if len(params.layers) != cfg.num_layers:
        raise ValueError(f"params have {len(params.layers)} layers, config says {cfg.num_layers}")

    x0 = x @ params.input_embed
    cache = ForwardCache(cfg=cfg, ops=ops, params=params, mode=mode, x2d=x, x0=x0)
    h = x0
    hoif_like = cfg.layer_kind != "gcn_baseline"
    for idx in range(cfg.num_layers):
        layer = params.layers[idx]
        if hoif_like:
            beta_ell = scale_factor(cfg.beta, idx)
            aggregates = []
            blocks = []
            for k in range(cfg.effective_hops):
                agg = (1.0 - cfg.alpha) * (ops.s_powers[k] @ h) + cfg.alpha * x0
                aggregates.append(agg)
                blocks.append(agg @ (beta_ell * layer.weights[k]))
            z = blocks[0] if len(blocks) == 1 else np.concatenate(blocks, axis=-1)
        else:
            agg = ops.s_powers[0] @ h
            aggregates = [agg]
            z = agg @ layer.weights[0]
        last = idx == cfg.num_layers - 1
        if last:
            cache.layers.append(_LayerCache(h, aggregates, None, None))
            h = z
        else:
            bn_cache = None
            if layer.bn is not None:
                z, bn_cache = _batchnorm_forward(z, layer.bn, cfg.bn_eps, cfg.bn_momentum, mode)
            cache.layers.append(_LayerCache(h, aggregates, z, bn_cache))
            h = relu(z)
    cache.h_final = h
    y = h @ params.output_proj
    return (y[0] if single else y), cache


def network_backward(cache: ForwardCache, grad_y) -> dict[str, np.ndarray]:
    """Exact gradients of a scalar loss for every trainable tensor.

    ``grad_y`` is the loss gradient at the network output, shaped like
    the output of the forward pass that produced ``cache``.  The cache is
    single-use: parameters are typically updated in place right after,
    which would silently invalidate it.
    """
    if cache is None:
        raise ValueError("network_backward needs the cache from a train-mode forward pass")
    if cache.mode != "train":
        raise ValueError("backward requires a cache produced with mode='train'")
    if cache.consumed:
        raise ValueError("stale forward cache: already consumed by a previous backward")
    cache.consumed = True
    cfg, ops, params = cache.cfg, cache.ops, cache.params

    gy = np.ascontiguousarray(grad_y, dtype=np.float64)
    if gy.ndim == 2:
        gy = gy[None]
    if gy.shape != (cache.x2d.shape[0], ops.num_nodes, cfg.output_dim):
        raise ValueError(f"grad_y shape {np.shape(grad_y)} does not match forward output")

    grads: dict[str, np.ndarray] = {}
    grads["output_proj"] = np.tensordot(cache.h_final, gy, axes=([0, 1], [0, 1]))
    dh = gy @ params.output_proj.T
    dx0 = np.zeros_like(cache.x0)
    hoif_like = cfg.layer_kind != "gcn_baseline"
    bw = cfg.block_width
    for idx in reversed(range(cfg.num_layers)):
        layer = params.layers[idx]
        lcache = cache.layers[idx]
        last = idx == cfg.num_layers - 1
        dz = dh
        if not last:
            dz = dz * (lcache.pre_activation > 0.0)
            if layer.bn is not None:
                dz, d_gain, d_shift = _batchnorm_backward(dz, layer.bn, lcache.bn_cache)
                grads[f"layer{idx}.bn_gain"] = d_gain
                grads[f"layer{idx}.bn_shift"] = d_shift
        if hoif_like:
            beta_ell = scale_factor(cfg.beta, idx)
            dh_in = np.zeros_like(lcache.h_in)
            for k in range(cfg.effective_hops):
                dzk = dz[..., k * bw : (k + 1) * bw]
                grads[f"layer{idx}.w{k + 1}"] = beta_ell * np.tensordot(
                    lcache.aggregates[k], dzk, axes=([0, 1], [0, 1])
                )
                d_agg = dzk @ (beta_ell * layer.weights[k]).T
                # hop powers are symmetric, so S^T = S in the pullback
                dh_in += (1.0 - cfg.alpha) * (ops.s_powers[k] @ d_agg)
                dx0 += cfg.alpha * d_agg
            dh = dh_in
        else:
            grads[f"layer{idx}.w1"] = np.tensordot(
                lcache.aggregates[0], dz, axes=([0, 1], [0, 1])
            )
            dh = ops.s_powers[0] @ (dz @ layer.weights[0].T)
    dx0 += dh  # the first layer reads x0 directly
    grads["input_embed"] = np.tensordot(cache.x2d, dx0, axes=([0, 1], [0, 1]))
    return grads


# ---------------------------------------------------------------------------
# Diagnostics.


def feature_spread_profile(
    ops: GraphOperators, x0, depth: int, kind: str = "hoifnet", alpha: float = 0.2, hops: int = 1
) -> list[float]:
    """Mean pairwise node distance after each propagation step.

    Runs ``depth`` layers with identity-like weights, no normalization,
    no activation, and unit weight scaling, isolating how the layer rule
    mixes node features.  Entry 0 is the spread of ``x0`` itself.  Plain
    propagation collapses the spread as depth grows; the residual layer
    kinds keep it bounded away from zero.
    """
    if kind not in LAYER_KINDS:
        raise ValueError(f"kind must be one of {LAYER_KINDS}, got {kind!r}")
    h = np.ascontiguousarray(x0, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != ops.num_nodes:
        raise ValueError(f"x0 shape {np.shape(x0)} does not match graph")
    k_eff = hops if kind == "hoifnet" else 1
    width = h.shape[1]
    if width % k_eff != 0:
        raise ValueError(f"feature width {width} not divisible by hops {k_eff}")
    bw = width // k_eff
    eye = np.eye(width)
    slices = [eye[:, k * bw : (k + 1) * bw] for k in range(k_eff)]

    def spread(feat: np.ndarray) -> float:
        diff = feat[:, None, :] - feat[None, :, :]
        dists = np.sqrt((diff * diff).sum(axis=-1))
        n = feat.shape[0]
        return float(dists.sum() / (n * (n - 1))) if n > 1 else 0.0

    profile = [spread(h)]
    x_init = h
    for _ in range(depth):
        if kind == "gcn_baseline":
            h = ops.s_powers[0] @ h
        else:
            blocks = [
                ((1.0 - alpha) * (ops.s_powers[k] @ h) + alpha * x_init) @ slices[k]
                for k in range(k_eff)
            ]
            h = blocks[0] if len(blocks) == 1 else np.concatenate(blocks, axis=-1)
        profile.append(spread(h))
    return profile


# ---------------------------------------------------------------------------
# Checkpoints: JSON manifest + flat little-endian float64 blob.

CHECKPOINT_DTYPE = "<f8"
CHECKPOINT_VERSION = 1


def save_checkpoint(prefix, cfg: NetworkConfig, params: NetworkParams, *,
                    seed=None, step: int = 0, history=None, extra=None) -> tuple[Path, Path]:
    """Write ``<prefix>.json`` and ``<prefix>.bin``.

    The blob concatenates every tensor (running statistics included) in
    declaration order; the manifest records shapes and byte offsets, so
    the pair is self-describing.  ``extra`` is an arbitrary
    JSON-serializable dict stored verbatim (e.g. normalization stats).
    """
    prefix = Path(prefix)
    tensors = []
    chunks = []
    offset = 0
    for name, tensor in params.named_tensors():
        raw = np.ascontiguousarray(tensor, dtype=CHECKPOINT_DTYPE).tobytes()
        tensors.append({"name": name, "shape": list(tensor.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "dtype": CHECKPOINT_DTYPE,
        "config": asdict(cfg),
        "seed": seed,
        "step": step,
        "history": history if history is not None else [],
        "extra": extra if extra is not None else {},
        "blob_bytes": offset,
        "tensors": tensors,
    }
    manifest_path = prefix.with_suffix(".json")
    blob_path = prefix.with_suffix(".bin")
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(blob_path, "wb") as fh:
        fh.write(b"".join(chunks))
    return manifest_path, blob_path


def load_checkpoint(prefix) -> tuple[NetworkConfig, NetworkParams, dict]:
    """Load a checkpoint pair written by :func:`save_checkpoint`."""
    prefix = Path(prefix)
    manifest_path = prefix.with_suffix(".json")
    blob_path = prefix.with_suffix(".bin")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {manifest.get('format_version')}")
    blob = blob_path.read_bytes()
    expected = manifest["blob_bytes"]
    if len(blob) != expected:
        raise CheckpointError(
            f"checkpoint blob length mismatch: manifest declares {expected} bytes, "
            f"{blob_path.name} holds {len(blob)}"
        )
    cfg = NetworkConfig(**manifest["config"])
    itemsize = np.dtype(manifest["dtype"]).itemsize
    arrays = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        stop = start + count * itemsize
        if stop > len(blob):
            raise CheckpointError(f"tensor {entry['name']!r} overruns the blob")
        arr = np.frombuffer(blob[start:stop], dtype=manifest["dtype"]).astype(np.float64)
        arrays[entry["name"]] = arr.reshape(shape)
    params = _params_from_arrays(cfg, arrays)
    return cfg, params, manifest


def _params_from_arrays(cfg: NetworkConfig, arrays: dict[str, np.ndarray]) -> NetworkParams:
    template = params_init(cfg, seed=0)
    missing = []
    for name, tensor in template.named_tensors():
        if name not in arrays:
            missing.append(name)
        elif arrays[name].shape != tensor.shape:
            raise CheckpointError(
                f"tensor {name!r} has shape {arrays[name].shape}, expected {tensor.shape}"
            )
    if missing:
        raise CheckpointError(f"checkpoint is missing tensors: {missing}")
    layers = []
    for idx in range(cfg.num_layers):
        weights = [
            np.ascontiguousarray(arrays[f"layer{idx}.w{k + 1}"])
            for k in range(cfg.effective_hops)
        ]
        if f"layer{idx}.bn_gain" in arrays:
            bn = BatchNormParams(
                gain=np.ascontiguousarray(arrays[f"layer{idx}.bn_gain"]),
                shift=np.ascontiguousarray(arrays[f"layer{idx}.bn_shift"]),
                running_mean=np.ascontiguousarray(arrays[f"layer{idx}.bn_running_mean"]),
                running_var=np.ascontiguousarray(arrays[f"layer{idx}.bn_running_var"]),
            )
        else:
            bn = None
        layers.append(LayerParams(weights=weights, bn=bn))
    return NetworkParams(
        input_embed=np.ascontiguousarray(arrays["input_embed"]),
        layers=layers,
        output_proj=np.ascontiguousarray(arrays["output_proj"]),
    )
