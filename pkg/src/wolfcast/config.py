"""Run configuration: a flat ``key = value`` text format with dotted keys.

Example::

    # comments start with '#'
    mode = hybrid
    seed = 3

    [sarima]          # keys below become sarima.<key>
    m = 24
    P = 1

    lstm.hidden_size = 8   # dotted keys also work outside sections

Values are parsed according to the type of the key's default. Unknown keys,
malformed lines and bad values raise :class:`ConfigError`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .gwo import GwoConfig
from .hybrid import MODES, HybridConfig
from .lstm import TrainConfig
from .preprocess import SchemaError
from .sarima import SarimaOrder
from .synth import SyntheticSpec


class ConfigError(SchemaError):
    pass


def _none_or_int(text: str) -> Optional[int]:
    return None if text.lower() in ("none", "auto", "") else int(text)


# key -> (RunConfig attribute, parser); defaults live on RunConfig
KEYS = {
    "seed": ("seed", int),
    "mode": ("mode", str),
    "sarima.p": ("p", int),
    "sarima.d": ("d", int),
    "sarima.q": ("q", int),
    "sarima.P": ("P", int),
    "sarima.D": ("D", int),
    "sarima.Q": ("Q", int),
    "sarima.m": ("m", int),
    "gwo.pack_size": ("pack_size", int),
    "gwo.max_iter": ("max_iter", int),
    "gwo.epsilon": ("epsilon", float),
    "gwo.patience": ("gwo_patience", int),
    "lstm.hidden_size": ("hidden_size", int),
    "lstm.n_layers": ("n_layers", int),
    "lstm.dense_size": ("dense_size", _none_or_int),
    "lstm.window": ("window", _none_or_int),
    "lstm.learning_rate": ("learning_rate", float),
    "lstm.batch_size": ("batch_size", int),
    "lstm.max_epochs": ("max_epochs", int),
    "lstm.patience": ("patience", int),
    "cv.k": ("k", int),
    "eval.strategy": ("strategy", str),
    "preprocess.sigma_k": ("sigma_k", float),
    "preprocess.iqr_k": ("iqr_k", float),
    "preprocess.knn_threshold": ("knn_threshold", float),
    "preprocess.knn_k": ("knn_k", int),
    "data.time_col": ("time_col", str),
    "data.value_col": ("value_col", str),
    "synth.n": ("synth_n", int),
    "synth.amplitude": ("synth_amplitude", float),
    "synth.trend_slope": ("synth_trend_slope", float),
    "synth.level": ("synth_level", float),
    "synth.noise_sigma": ("synth_noise_sigma", float),
    "synth.ar_coef": ("synth_ar_coef", float),
    "synth.coupling": ("synth_coupling", float),
}


@dataclass(frozen=True)
class RunConfig:
    """All settings a command may need. Defaults follow the reference setup:
    GWO with 30 wolves for 50 iterations, 3 LSTM layers of 128 units, Adam at
    0.001, batches of 64, up to 200 epochs, 80/10/10 split."""

    seed: int = 0
    mode: str = "hybrid"
    p: int = 1
    d: int = 0
    q: int = 1
    P: int = 1
    D: int = 1
    Q: int = 1
    m: int = 24
    pack_size: int = 30
    max_iter: int = 50
    epsilon: float = 1e-8
    gwo_patience: int = 10
    hidden_size: int = 128
    n_layers: int = 3
    dense_size: Optional[int] = None
    window: Optional[int] = None
    learning_rate: float = 0.001
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 20
    k: int = 5
    strategy: str = "recursive"
    sigma_k: float = 3.0
    iqr_k: float = 1.5
    knn_threshold: float = 0.03
    knn_k: int = 5
    time_col: str = "timestamp"
    value_col: str = "value"
    synth_n: int = 1000
    synth_amplitude: float = 10.0
    synth_trend_slope: float = 0.01
    synth_level: float = 100.0
    synth_noise_sigma: float = 0.5
    synth_ar_coef: float = 0.0
    synth_coupling: float = 2.0
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.strategy not in ("recursive", "one_step"):
            raise ConfigError(f"eval.strategy must be 'recursive' or 'one_step', got {self.strategy!r}")

    def order(self) -> SarimaOrder:
        return SarimaOrder(self.p, self.d, self.q, self.P, self.D, self.Q, self.m)

    def gwo(self) -> GwoConfig:
        return GwoConfig(self.pack_size, self.max_iter, self.epsilon, self.seed, self.gwo_patience)

    def train(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, self.max_epochs, self.patience,
                           self.seed)

    def hybrid(self, mode: Optional[str] = None) -> HybridConfig:
        return HybridConfig(order=self.order(), gwo=self.gwo(), train=self.train(),
                            window=self.window, hidden_size=self.hidden_size,
                            n_layers=self.n_layers, dense_size=self.dense_size,
                            mode=mode or self.mode)

    def synth(self) -> SyntheticSpec:
        return SyntheticSpec(n=self.synth_n, period=self.m, amplitude=self.synth_amplitude,
                             trend_slope=self.synth_trend_slope, level=self.synth_level,
                             noise_sigma=self.synth_noise_sigma, ar_coef=self.synth_ar_coef,
                             coupling=self.synth_coupling, seed=self.seed)

    def as_dict(self) -> dict:
        """Dotted-key view of every setting."""
        return {key: getattr(self, attr) for key, (attr, _) in KEYS.items()}


def parse_text(text: str) -> dict:
    """``{dotted_key: (raw string, line number)}``; lines count from 1."""
    out = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip() + "."
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        if "." not in key:
            key = section + key if section else key
        value = value.strip("\"'")
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        out[key] = (value, lineno)
    return out


def from_mapping(raw: dict) -> RunConfig:
    """Build a config from ``{key: value}`` or ``{key: (value, line)}`` entries."""
    kwargs = {}
    for key, item in raw.items():
        value, line = item if isinstance(item, tuple) else (item, None)
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}", line)
        attr, conv = KEYS[key]
        try:
            kwargs[attr] = conv(value) if isinstance(value, str) else value
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", line) from None
    source = {k: (v[0] if isinstance(v, tuple) else v) for k, v in raw.items()}
    return validate(RunConfig(**kwargs, source=source))


def validate(config: RunConfig) -> RunConfig:
    """Build every component config once so bad combinations fail early."""
    try:
        config.hybrid()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return config


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return from_mapping(parse_text(text))


def dump(config: RunConfig) -> str:
    """Serialize every key, sorted, in the same format ``parse_text`` reads."""
    lines = []
    for key, value in sorted(config.as_dict().items()):
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"

