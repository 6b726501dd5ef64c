"""Flat ``key=value`` run configuration with strict key checking."""
from dataclasses import asdict, dataclass, fields, replace

from .errors import ConfigError
from .model import HEADS, SEG_AND_DT, SEG_ONLY, ModelConfig

PROPOSED = "proposed"
MULTITASK_FIXED = "multitask-fixed"
SINGLE = "single"
MODES = (PROPOSED, MULTITASK_FIXED, SINGLE)

COMBINER_KEYS = ("gamma", "combiner_eps", "fixed_weight", "alpha_scope", "alpha_pinned")


@dataclass(frozen=True)
class RunConfig:
    mode: str = PROPOSED
    data: str = ""
    out: str = "runs/default"
    seed: int = 0
    # model
    in_channels: int = 1
    base_channels: int = 16
    depth: int = 3
    heads: str = "auto"
    precision: str = "float32"
    # optimizer
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 4
    epochs: int = 100
    # combiner
    gamma: float = 0.9
    combiner_eps: float = 1e-8
    fixed_weight: float = 1.0
    alpha_scope: str = "batch"
    alpha_pinned: str = ""
    # data split / evaluation
    train_frac: float = 0.7
    val_frac: float = 0.15
    test_frac: float = 0.15
    split_file: str = ""
    threshold: float = 0.5
    # synthetic benchmark used by `compare` when `data` is empty
    synth_n: int = 250
    synth_size: int = 64
    synth_seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.heads not in HEADS + ("auto",):
            raise ConfigError(f"heads must be auto or one of {HEADS}, got {self.heads!r}")
        if self.alpha_scope not in ("batch", "epoch"):
            raise ConfigError(f"alpha_scope must be batch or epoch, got {self.alpha_scope!r}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.combiner_eps <= 0:
            raise ConfigError("combiner_eps must be positive")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")
        if self.alpha_pinned:
            try:
                pinned = float(self.alpha_pinned)
            except ValueError:
                raise ConfigError(f"alpha_pinned must be a number, got {self.alpha_pinned!r}") from None
            if pinned < 0:
                raise ConfigError("alpha_pinned must be nonnegative")
        needed = SEG_ONLY if self.mode == SINGLE else SEG_AND_DT
        if self.heads not in ("auto", needed):
            raise ConfigError(f"mode {self.mode!r} needs heads={needed}, but the config sets heads={self.heads}")
        if self.mode == SINGLE:
            defaults = RunConfig.__dataclass_fields__
            changed = [k for k in COMBINER_KEYS if getattr(self, k) != defaults[k].default]
            if changed:
                raise ConfigError(f"mode 'single' trains on BCE alone; combiner settings not allowed: {', '.join(changed)}")
        self.model_config()

    @property
    def resolved_heads(self):
        return SEG_ONLY if self.mode == SINGLE else SEG_AND_DT

    @property
    def fractions(self):
        return (self.train_frac, self.val_frac, self.test_frac)

    def model_config(self):
        return ModelConfig(
            in_channels=self.in_channels,
            base_channels=self.base_channels,
            depth=self.depth,
            heads=self.resolved_heads,
            seed=self.seed,
            precision=self.precision,
        )

    def to_text(self):
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    def with_overrides(self, pairs):
        return replace(self, **_coerce(pairs))


def _coerce(pairs):
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for key, value in pairs.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        kind = types[key]
        try:
            out[key] = kind(value) if kind in (int, float) else str(value)
        except ValueError:
            raise ConfigError(f"config key {key!r}: cannot parse {value!r} as {kind.__name__}") from None
    return out


def parse_pairs(text, source="config"):
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        pairs[key.strip()] = value.strip()
    return pairs


def parse_overrides(items):
    pairs = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        pairs[key.strip()] = value.strip()
    return pairs


def from_text(text, base=None):
    return (base or RunConfig()).with_overrides(parse_pairs(text))


def load_config(path=None, overrides=None, base=None):
    """Defaults (or ``base``), then the file at ``path``, then ``overrides``."""
    cfg = base or RunConfig()
    if path:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        pairs = parse_pairs(text, path)
    else:
        pairs = {}
    pairs.update(overrides or {})
    return cfg.with_overrides(pairs)
