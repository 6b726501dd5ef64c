"""Shared-encoder U-Net with a segmentation decoder and an optional distance-map decoder.

Block table for depth ``D`` and base width ``B`` (``c_i = B * 2**i``)::

    enc{i}        conv3x3(c_{i-1} -> c_i), conv3x3(c_i -> c_i)     i = 0..D-1, c_{-1} = in_channels
    bottleneck    conv3x3(c_{D-1} -> c_D), conv3x3(c_D -> c_D)
    {head}.dec{i} conv3x3(c_{i+1} + c_i -> c_i), conv3x3(c_i -> c_i)
    {head}.out    conv1x1(c_0 -> 1)

Each conv has ``cout * cin * k * k`` weights and ``cout`` biases. The ``dt``
head exists only when ``heads == "seg_and_dt"``.
"""
import struct
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import ops
from .errors import BadMagicError, ConfigError, CorruptError, GeometryError, DimensionError, ParameterSetError, TruncatedError, UnsupportedVersionError
from .tensor import Tensor, resolve_dtype
from .tensormap import decode_tensor_map, encode_tensor_map

SEG_ONLY = "seg_only"
SEG_AND_DT = "seg_and_dt"
HEADS = (SEG_ONLY, SEG_AND_DT)

CKPT_MAGIC = b"MTLC"
CKPT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 1
    base_channels: int = 16
    depth: int = 3
    heads: str = SEG_AND_DT
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1 or self.in_channels < 1:
            raise ConfigError("base_channels and in_channels must be >= 1")
        if self.heads not in HEADS:
            raise ConfigError(f"heads must be one of {HEADS}, got {self.heads!r}")
        resolve_dtype(self.precision)

    @property
    def multiple(self):
        return 2**self.depth

    def to_text(self):
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_pairs(cls, pairs):
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in pairs.items():
            if k not in kinds:
                raise ConfigError(f"unknown model config key {k!r}")
            kw[k] = int(v) if kinds[k] in (int, "int") else v
        return cls(**kw)


def layer_table(config):
    """Ordered ``(name, cin, cout, kernel)`` for every conv in the network."""
    c = [config.base_channels * 2**i for i in range(config.depth + 1)]
    table = []
    prev = config.in_channels
    for i in range(config.depth):
        table += [(f"enc{i}.conv1", prev, c[i], 3), (f"enc{i}.conv2", c[i], c[i], 3)]
        prev = c[i]
    d = config.depth
    table += [("bottleneck.conv1", c[d - 1], c[d], 3), ("bottleneck.conv2", c[d], c[d], 3)]
    heads = ["seg"] + (["dt"] if config.heads == SEG_AND_DT else [])
    for head in heads:
        for i in reversed(range(d)):
            table += [(f"{head}.dec{i}.conv1", c[i + 1] + c[i], c[i], 3), (f"{head}.dec{i}.conv2", c[i], c[i], 3)]
        table.append((f"{head}.out", c[0], 1, 1))
    return table


def param_shapes(config):
    shapes = {}
    for name, cin, cout, k in layer_table(config):
        shapes[f"{name}.weight"] = (cout, cin, k, k)
        shapes[f"{name}.bias"] = (cout,)
    return shapes


def param_count(config):
    return sum(int(np.prod(s)) for s in param_shapes(config).values())


class ModelParams:
    """Named parameter tensors plus the config that fixes their layout."""

    def __init__(self, config, tensors):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name):
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def count(self):
        return sum(t.size for t in self.tensors.values())

    def arrays(self):
        return {k: t.data for k, t in self.tensors.items()}


def build(config):
    """He-normal weights (std sqrt(2 / fan_in)) and zero biases from ``config.seed``."""
    dtype = resolve_dtype(config.precision)
    rng = np.random.default_rng(config.seed)
    tensors = {}
    for name, cin, cout, k in layer_table(config):
        std = np.sqrt(2.0 / (cin * k * k))
        w = rng.standard_normal((cout, cin, k, k)) * std
        tensors[f"{name}.weight"] = Tensor(w.astype(dtype), requires_grad=True)
        tensors[f"{name}.bias"] = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)
    return ModelParams(config, tensors)


@dataclass
class ModelOutput:
    seg_logits: Tensor
    dt_pred: Tensor = None


def _conv(p, name, x, padding=1):
    return ops.conv2d(x, p[f"{name}.weight"], p[f"{name}.bias"], stride=1, padding=padding)


def _double_conv(p, prefix, x):
    x = ops.relu(_conv(p, f"{prefix}.conv1", x))
    return ops.relu(_conv(p, f"{prefix}.conv2", x))


def _decode(p, head, x, skips, depth):
    for i in reversed(range(depth)):
        x = ops.upsample_nearest2(x)
        x = ops.concat_channels(x, skips[i])
        x = _double_conv(p, f"{head}.dec{i}", x)
    return _conv(p, f"{head}.out", x, padding=0)


def forward(params, image):
    """Run the network on an N x C x H x W batch.

    The segmentation head returns raw logits. The distance head ends in ``|z|``,
    which keeps predictions nonnegative without a dead zone: a relu or softplus
    there gets pushed below zero by the mostly-zero targets and stops learning.
    """
    cfg = params.config
    if not isinstance(image, Tensor):
        image = Tensor(np.asarray(image, dtype=resolve_dtype(cfg.precision)))
    if image.data.ndim != 4 or image.shape[1] != cfg.in_channels:
        raise DimensionError(f"expected N x {cfg.in_channels} x H x W input, got {image.shape}")
    h, w = image.shape[2:]
    if h % cfg.multiple or w % cfg.multiple or h == 0 or w == 0:
        raise GeometryError(f"input {h}x{w} is not divisible by 2**depth = {cfg.multiple}")

    skips = []
    x = image
    for i in range(cfg.depth):
        x = _double_conv(params, f"enc{i}", x)
        skips.append(x)
        x = ops.max_pool2d(x)
    x = _double_conv(params, "bottleneck", x)

    seg = _decode(params, "seg", x, skips, cfg.depth)
    dt = None
    if cfg.heads == SEG_AND_DT:
        dt = ops.absolute(_decode(params, "dt", x, skips, cfg.depth))
    return ModelOutput(seg, dt)


# ---------------------------------------------------------------------------
# checkpoints: b"MTLC", u16 version, u32 config length, key=value text, tensor map
# ---------------------------------------------------------------------------

def check_param_names(names, config):
    expected = set(param_shapes(config))
    got = set(names)
    if expected != got:
        raise ParameterSetError(missing=expected - got, unexpected=got - expected)


def encode_checkpoint(params):
    text = (f"format_version={CKPT_VERSION}\n" + params.config.to_text()).encode("utf-8")
    return CKPT_MAGIC + struct.pack("<HI", CKPT_VERSION, len(text)) + text + encode_tensor_map(params.arrays())


def save_checkpoint(params, path):
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(params))


def _parse_config_block(text):
    pairs = {}
    for line in text.splitlines():
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CorruptError(f"malformed config line {line!r}")
        pairs[key] = value
    return pairs


def decode_checkpoint(buf, expected=None):
    """Parse checkpoint bytes.

    ``expected`` (a ModelConfig) makes the name check run against the layout the
    caller needs, so loading a seg-only file into a two-head run lists the
    missing ``dt.*`` parameters.
    """
    if len(buf) < 4 or bytes(buf[:4]) != CKPT_MAGIC:
        raise BadMagicError("not a checkpoint (bad magic bytes)")
    if len(buf) < 10:
        raise TruncatedError("truncated checkpoint header")
    version, text_len = struct.unpack("<HI", buf[4:10])
    if version != CKPT_VERSION:
        raise UnsupportedVersionError(f"checkpoint version {version} is not supported (expected {CKPT_VERSION})")
    if len(buf) < 10 + text_len:
        raise TruncatedError("truncated checkpoint config block")
    try:
        pairs = _parse_config_block(bytes(buf[10 : 10 + text_len]).decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise CorruptError("checkpoint config block is not valid UTF-8") from exc
    if pairs.pop("format_version", None) != str(CKPT_VERSION):
        raise CorruptError("checkpoint config block lacks a matching format_version")
    try:
        config = ModelConfig.from_pairs(pairs)
    except (ConfigError, ValueError, TypeError) as exc:
        raise CorruptError(f"bad checkpoint config block: {exc}") from exc
    arrays, _ = decode_tensor_map(buf, offset=10 + text_len)
    target = expected if expected is not None else config
    check_param_names(arrays, target)
    shapes = param_shapes(config)
    for name, arr in arrays.items():
        if arr.shape != shapes[name]:
            raise CorruptError(f"parameter {name!r} has shape {arr.shape}, expected {shapes[name]}")
    tensors = {name: Tensor(arr, requires_grad=True) for name, arr in arrays.items()}
    return ModelParams(config, tensors)


def load_checkpoint(path, expected=None):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read(), expected)
