"""The super-resolution network: embed, recursive residual core, reconstruct.

The graph is three sub-nets over single-channel [0,1] luminance input
that was already bicubic-upscaled to target size:

* embed:    two 3x3 conv+ReLU layers, then a 1x1 "shrink" conv+ReLU that
            halves the feature width.
* recurse:  one shared 3x3 conv whose conv+ReLU output is added back to
            its input (a residual step), applied ``recurrences`` times.
* rebuild:  per recurrence, a shared 1x1 "expand" conv+ReLU restoring
            full width and a shared 3x3 conv producing a one-channel
            image (no activation); a final bias-free 1x1 merge conv
            blends the per-recurrence images into the output.

Exactly seven distinct parameter entries exist regardless of the
recurrence count; the recursive and rebuild entries are applied many
times and their gradients accumulate over all applications.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import Xoshiro256, derive_seeds
from .tensor_ops import (
    SINGLE,
    ConfigurationError,
    ConvParams,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
)

PARAM_NAMES = (
    "enet.conv1",
    "enet.conv2",
    "enet.shrink",
    "inet.recursive",
    "rnet.expand",
    "rnet.to_image",
    "rnet.merge",
)

# First embed layer and the expand layer are exempt from weight decay.
DECAY_EXEMPT = frozenset({"enet.conv1", "rnet.expand"})

CHECKPOINT_MAGIC = b"WXZN"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Base class for checkpoint load failures."""


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


@dataclass(frozen=True)
class ModelConfig(object):
    recurrences: int = 8
    embed_features: int = 192
    infer_features: int = 96
    kernel_size: int = 3
    scale: int = 2

    def validate(self) -> None:
        if self.recurrences < 1:
            raise ConfigurationError("recurrences must be >= 1")
        if self.embed_features % 2 != 0:
            raise ConfigurationError("embed_features must be even")
        if self.infer_features * 2 != self.embed_features:
            raise ConfigurationError(
                "infer_features must be exactly half of embed_features"
            )
        if self.kernel_size % 2 != 1 or self.kernel_size < 1:
            raise ConfigurationError("kernel_size must be odd and positive")
        if self.scale < 1:
            raise ConfigurationError("scale must be >= 1")


@dataclass
class ParameterSet(object):
    """The seven named convolution entries, in fixed order."""

    entries: dict[str, ConvParams]

    def __post_init__(self):
        if tuple(self.entries.keys()) != PARAM_NAMES:
            raise ConfigurationError(
                "parameter set must contain exactly %r" % (PARAM_NAMES,)
            )

    def __getitem__(self, name: str) -> ConvParams:
        return self.entries[name]

    def astype(self, dtype) -> "ParameterSet":
        return ParameterSet({k: v.astype(dtype) for k, v in self.entries.items()})

    def copy(self) -> "ParameterSet":
        return ParameterSet({k: v.copy() for k, v in self.entries.items()})


@dataclass
class Model(object):
    config: ModelConfig
    params: ParameterSet

    def astype(self, dtype) -> "Model":
        return Model(self.config, self.params.astype(dtype))

    def copy(self) -> "Model":
        return Model(self.config, self.params.copy())


@dataclass
class ForwardTrace(object):
    """Everything the backward pass needs, plus the supervised outputs."""

    input: np.ndarray
    embed1_pre: np.ndarray
    embed1: np.ndarray
    embed2_pre: np.ndarray
    embed2: np.ndarray
    shrink_pre: np.ndarray
    features: list[np.ndarray] = field(default_factory=list)  # h_0 .. h_R
    recursive_pre: list[np.ndarray] = field(default_factory=list)
    expand_pre: list[np.ndarray] = field(default_factory=list)
    expand: list[np.ndarray] = field(default_factory=list)
    intermediate_images: list[np.ndarray] = field(default_factory=list)
    stacked: np.ndarray | None = None
    final_image: np.ndarray | None = None


# Gradients keyed by entry name: (grad_weights, grad_bias or None).
ParamGrads = dict


def _layer_shapes(cfg: ModelConfig) -> dict[str, tuple[tuple[int, ...], bool]]:
    """Weight shape and has-bias flag per entry."""
    fe, fi, k = cfg.embed_features, cfg.infer_features, cfg.kernel_size
    return {
        "enet.conv1": ((fe, 1, k, k), True),
        "enet.conv2": ((fe, fe, k, k), True),
        "enet.shrink": ((fi, fe, 1, 1), True),
        "inet.recursive": ((fi, fi, k, k), True),
        "rnet.expand": ((fe, fi, 1, 1), True),
        "rnet.to_image": ((1, fe, k, k), True),
        "rnet.merge": ((1, cfg.recurrences, 1, 1), False),
    }


def build_model(cfg: ModelConfig, seed: int) -> Model:
    """Fresh model: He-initialized convs, identity recursive core, zero biases.

    Non-recursive conv weights are zero-mean Gaussian with variance
    2/fan_in; the recursive conv starts as a per-channel identity
    (center tap of channel i -> i set to one, everything else zero);
    merge weights start uniform at 1/recurrences. The draw order is the
    entry order, weights row-major, so a given seed always produces the
    same model.
    """
    cfg.validate()
    gen = Xoshiro256(derive_seeds(seed, 1)[0])
    entries: dict[str, ConvParams] = {}
    for name, (shape, has_bias) in _layer_shapes(cfg).items():
        if name == "inet.recursive":
            w = np.zeros(shape, dtype=SINGLE)
            center = (cfg.kernel_size - 1) // 2
            for ch in range(cfg.infer_features):
                w[ch, ch, center, center] = 1.0
        elif name == "rnet.merge":
            w = np.full(shape, 1.0 / cfg.recurrences, dtype=SINGLE)
        else:
            fan_in = shape[1] * shape[2] * shape[3]
            std = float(np.sqrt(2.0 / fan_in))
            flat = np.empty(int(np.prod(shape)), dtype=SINGLE)
            for i in range(flat.size):
                flat[i] = gen.next_gaussian() * std
            w = flat.reshape(shape)
        bias = np.zeros(shape[0], dtype=SINGLE) if has_bias else None
        entries[name] = ConvParams(w, bias, decay_exempt=name in DECAY_EXEMPT)
    return Model(cfg, ParameterSet(entries))


def forward(model: Model, x: np.ndarray) -> ForwardTrace:
    """Full forward pass retaining all activations for backpropagation."""
    if x.ndim != 4 or x.shape[1] != 1:
        raise ConfigurationError("input must be (n, 1, h, w) luminance")
    p = model.params
    z1 = conv2d_forward(x, p["enet.conv1"])
    a1 = relu_forward(z1)
    z2 = conv2d_forward(a1, p["enet.conv2"])
    a2 = relu_forward(z2)
    z3 = conv2d_forward(a2, p["enet.shrink"])
    trace = ForwardTrace(x, z1, a1, z2, a2, z3)
    h = relu_forward(z3)
    trace.features.append(h)
    for _ in range(model.config.recurrences):
        z = conv2d_forward(h, p["inet.recursive"])
        trace.recursive_pre.append(z)
        h = h + relu_forward(z)
        trace.features.append(h)
    for r in range(1, model.config.recurrences + 1):
        ze = conv2d_forward(trace.features[r], p["rnet.expand"])
        trace.expand_pre.append(ze)
        e = relu_forward(ze)
        trace.expand.append(e)
        trace.intermediate_images.append(conv2d_forward(e, p["rnet.to_image"]))
    trace.stacked = np.concatenate(trace.intermediate_images, axis=1)
    trace.final_image = conv2d_forward(trace.stacked, p["rnet.merge"])
    return trace


def infer(model: Model, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Memory-light forward: returns (final, intermediate images) only."""
    if x.ndim != 4 or x.shape[1] != 1:
        raise ConfigurationError("input must be (n, 1, h, w) luminance")
    p = model.params
    h = relu_forward(conv2d_forward(x, p["enet.conv1"]))
    h = relu_forward(conv2d_forward(h, p["enet.conv2"]))
    h = relu_forward(conv2d_forward(h, p["enet.shrink"]))
    images = []
    for _ in range(model.config.recurrences):
        h = h + relu_forward(conv2d_forward(h, p["inet.recursive"]))
        e = relu_forward(conv2d_forward(h, p["rnet.expand"]))
        images.append(conv2d_forward(e, p["rnet.to_image"]))
    final = conv2d_forward(np.concatenate(images, axis=1), p["rnet.merge"])
    return final, images


def backward(
    model: Model,
    trace: ForwardTrace,
    grad_final: np.ndarray,
    grads_intermediate: list[np.ndarray],
) -> ParamGrads:
    """Backpropagate through the whole graph.

    grads_intermediate must hold one gradient per recurrence output.
    Shared entries (recursive, expand, to_image) accumulate their
    contributions over every application; gradient flows both through
    the residual recursion and through each per-recurrence rebuild
    branch.
    """
    cfg = model.config
    p = model.params
    if len(grads_intermediate) != cfg.recurrences:
        raise ConfigurationError(
            "expected %d intermediate gradients, got %d"
            % (cfg.recurrences, len(grads_intermediate))
        )
    if trace.final_image is None or grad_final.shape != trace.final_image.shape:
        raise ConfigurationError("grad_final shape mismatch")
    for g, y in zip(grads_intermediate, trace.intermediate_images):
        if g.shape != y.shape:
            raise ConfigurationError("intermediate gradient shape mismatch")

    grads: ParamGrads = {}
    d_stacked, gw_merge, _ = conv2d_backward(trace.stacked, p["rnet.merge"], grad_final)
    grads["rnet.merge"] = (gw_merge, None)

    gw_img = np.zeros_like(p["rnet.to_image"].weights)
    gb_img = np.zeros_like(p["rnet.to_image"].bias)
    gw_exp = np.zeros_like(p["rnet.expand"].weights)
    gb_exp = np.zeros_like(p["rnet.expand"].bias)
    d_features = []  # rebuild-branch gradient w.r.t. each h_r, r = 1..R
    for r in range(cfg.recurrences):
        dy = d_stacked[:, r:r + 1] + grads_intermediate[r]
        de, gw, gb = conv2d_backward(trace.expand[r], p["rnet.to_image"], dy)
        gw_img += gw
        gb_img += gb
        dze = relu_backward(trace.expand_pre[r], de)
        dh, gw, gb = conv2d_backward(trace.features[r + 1], p["rnet.expand"], dze)
        gw_exp += gw
        gb_exp += gb
        d_features.append(dh)
    grads["rnet.to_image"] = (gw_img, gb_img)
    grads["rnet.expand"] = (gw_exp, gb_exp)

    gw_rec = np.zeros_like(p["inet.recursive"].weights)
    gb_rec = np.zeros_like(p["inet.recursive"].bias)
    dh = np.zeros_like(trace.features[0])
    for r in range(cfg.recurrences, 0, -1):
        dh = dh + d_features[r - 1]
        dz = relu_backward(trace.recursive_pre[r - 1], dh)
        dh_conv, gw, gb = conv2d_backward(trace.features[r - 1], p["inet.recursive"], dz)
        gw_rec += gw
        gb_rec += gb
        dh = dh + dh_conv
    grads["inet.recursive"] = (gw_rec, gb_rec)

    dz3 = relu_backward(trace.shrink_pre, dh)
    da2, gw, gb = conv2d_backward(trace.embed2, p["enet.shrink"], dz3)
    grads["enet.shrink"] = (gw, gb)
    dz2 = relu_backward(trace.embed2_pre, da2)
    da1, gw, gb = conv2d_backward(trace.embed1, p["enet.conv2"], dz2)
    grads["enet.conv2"] = (gw, gb)
    dz1 = relu_backward(trace.embed1_pre, da1)
    _, gw, gb = conv2d_backward(trace.input, p["enet.conv1"], dz1)
    grads["enet.conv1"] = (gw, gb)

    return {name: grads[name] for name in PARAM_NAMES}


def _config_words(cfg: ModelConfig) -> tuple[int, ...]:
    return (
        cfg.recurrences,
        cfg.embed_features,
        cfg.infer_features,
        cfg.kernel_size,
        cfg.scale,
    )


def save_checkpoint(model: Model, path) -> None:
    """Write the binary checkpoint; all weights stored as little-endian f32.

    Layout: magic "WXZN", u32 format version, five u32 config words
    (recurrences, embed_features, infer_features, kernel_size, scale),
    u32 record count, then per record: u32 name length, name bytes,
    four u32 shape words, raw float32 data. Bias vectors are stored as
    (out, 1, 1, 1) records named "<entry>.bias".
    """
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    chunks.append(struct.pack("<5I", *_config_words(model.config)))
    records: list[tuple[str, np.ndarray]] = []
    for name in PARAM_NAMES:
        entry = model.params[name]
        records.append((name + ".weights", entry.weights))
        if entry.bias is not None:
            records.append((name + ".bias", entry.bias.reshape(-1, 1, 1, 1)))
    chunks.append(struct.pack("<I", len(records)))
    for name, arr in records:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<4I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader(object):
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(
                "checkpoint ends early at byte %d" % len(self.data)
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path) -> Model:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointMagicError("not a model checkpoint (bad magic)")
    version = reader.u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError("unsupported checkpoint version %d" % version)
    words = struct.unpack("<5I", reader.take(20))
    cfg = ModelConfig(*[int(v) for v in words])
    try:
        cfg.validate()
    except ConfigurationError as exc:
        raise CheckpointShapeError("embedded config invalid: %s" % exc) from exc
    count = reader.u32()
    raw: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = reader.take(reader.u32()).decode("utf-8")
        shape = struct.unpack("<4I", reader.take(16))
        size = 1
        for s in shape:
            size *= s
        arr = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(shape)
        raw[name] = arr.astype(SINGLE)
    entries: dict[str, ConvParams] = {}
    for name, (shape, has_bias) in _layer_shapes(cfg).items():
        wkey, bkey = name + ".weights", name + ".bias"
        if wkey not in raw:
            raise CheckpointShapeError("missing record %s" % wkey)
        w = raw[wkey]
        if w.shape != shape:
            raise CheckpointShapeError(
                "record %s has shape %r, config implies %r" % (wkey, w.shape, shape)
            )
        bias = None
        if has_bias:
            if bkey not in raw:
                raise CheckpointShapeError("missing record %s" % bkey)
            b = raw[bkey]
            if b.shape != (shape[0], 1, 1, 1):
                raise CheckpointShapeError(
                    "record %s has shape %r, expected %r"
                    % (bkey, b.shape, (shape[0], 1, 1, 1))
                )
            bias = b.reshape(-1).copy()
        entries[name] = ConvParams(w.copy(), bias, decay_exempt=name in DECAY_EXEMPT)
    return Model(cfg, ParameterSet(entries))
