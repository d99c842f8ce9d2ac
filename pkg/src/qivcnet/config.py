"""Flat run configuration: file format, CLI overrides, validation.

A config file is plain ``key = value`` text: one pair per line, ``#``
starts a comment, keys use underscores and match RunConfig field names.
CLI flags (same names, dashes) override file values, which override the
defaults.  The fully resolved configuration is echoed into the output
directory of every command so a run can be reproduced from its artifacts.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .network import NetworkConfig
from .qire import QireConfig
from .training import TrainHyper


@dataclass
class RunConfig:
    """Every tunable of every command, flat."""

    # paths
    manifest: str = ""
    cache: str = "segments.qivc"
    outdir: str = "runs/latest"
    checkpoint: str = ""
    # structured-noise sampler
    k: int = 5
    p: float = 0.05
    rescale_sqrt_n: bool = False
    # variational posterior
    prior_var: float = 0.01
    kl_scale: float = 1e-5
    # architecture: comma-separated filtersxwidth pairs
    blocks: str = "16x7,32x7"
    pool_between: bool = True
    classifier_width: int = 32
    activation: str = "relu"
    bn_momentum: float = 0.1
    # training
    lr: float = 1e-3
    batch: int = 256
    epochs: int = 500
    patience: int = 50
    folds: int = 5
    fold_index: int = -1
    val_fraction: float = 0.1
    dynamic_weights: bool = True
    ema_decay: float = 0.9
    group_by_recording: bool = False
    jobs: int = 1
    seed: int = 0
    # evaluation sweeps and diagnostics
    snr_list: str = "25,20,15,10,5"
    trials: int = 10000
    kernel_shape: str = "7x16x32"

    def qire_config(self) -> QireConfig:
        return QireConfig(k=self.k, p=self.p, rescale_sqrt_n=self.rescale_sqrt_n)

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(blocks=parse_blocks(self.blocks),
                             pool_between=self.pool_between,
                             classifier_width=self.classifier_width,
                             kl_scale=self.kl_scale,
                             qire=self.qire_config(),
                             prior_var=self.prior_var,
                             activation=self.activation,
                             bn_momentum=self.bn_momentum,
                             seed=self.seed)

    def train_hyper(self) -> TrainHyper:
        return TrainHyper(lr=self.lr, batch=self.batch, epochs=self.epochs,
                          patience=self.patience, val_fraction=self.val_fraction,
                          dynamic_weights=self.dynamic_weights,
                          ema_decay=self.ema_decay)

    def snr_values(self) -> "list[float]":
        try:
            values = [float(v) for v in self.snr_list.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad snr_list {self.snr_list!r}") from exc
        if not values:
            raise ConfigError("snr_list is empty")
        return values

    def kernel_shape_tuple(self) -> "tuple[int, ...]":
        try:
            shape = tuple(int(v) for v in self.kernel_shape.split("x") if v.strip())
        except ValueError as exc:
            raise ConfigError(f"bad kernel_shape {self.kernel_shape!r}") from exc
        if not shape or any(d < 1 for d in shape):
            raise ConfigError(f"bad kernel_shape {self.kernel_shape!r}")
        return shape

    def validate(self) -> None:
        """Construct every derived config so all range checks fire upfront."""
        self.qire_config()
        self.network_config()
        self.train_hyper()
        self.snr_values()
        self.kernel_shape_tuple()
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if self.fold_index < -1:
            raise ConfigError(f"fold_index must be >= -1, got {self.fold_index}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")


def parse_blocks(text: str) -> "tuple[tuple[int, int], ...]":
    """Parse '16x7,32x7' into ((16, 7), (32, 7))."""
    blocks = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        pieces = part.split("x")
        if len(pieces) != 2:
            raise ConfigError(f"bad block spec {part!r}; expected FILTERSxWIDTH")
        try:
            blocks.append((int(pieces[0]), int(pieces[1])))
        except ValueError as exc:
            raise ConfigError(f"bad block spec {part!r}") from exc
    if not blocks:
        raise ConfigError(f"no blocks in {text!r}")
    return tuple(blocks)


_BOOL_WORDS = {"true": True, "1": True, "yes": True,
               "false": False, "0": False, "no": False}


def _convert(name: str, kind: type, raw: str):
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() not in _BOOL_WORDS:
                raise ValueError(raw)
            return _BOOL_WORDS[raw.lower()]
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r} (expected {kind.__name__})") from exc


def load_config_file(path: "str | Path") -> "dict[str, object]":
    """Parse a key=value config file into typed overrides."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"missing config file: {path}")
    types = {f.name: f.type for f in fields(RunConfig)}
    kinds = {"str": str, "int": int, "float": float, "bool": bool}
    overrides: "dict[str, object]" = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        overrides[key] = _convert(key, kinds[str(types[key])], raw)
    return overrides


def resolve_config(file_path: "str | None",
                   flag_overrides: "dict[str, object]") -> RunConfig:
    """defaults <- config file <- CLI flags, then validate."""
    values = asdict(RunConfig())
    if file_path:
        values.update(load_config_file(file_path))
    values.update({k: v for k, v in flag_overrides.items() if v is not None})
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def config_text(cfg: RunConfig) -> str:
    """Render the resolved config in the same key=value file format."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
