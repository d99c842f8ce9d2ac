"""Reversal-fusion-residual blocks and the stacked classifier network.

An RFR block runs three parallel views of its input: a 1x1-conv shortcut,
a variational conv on the signal, and a variational conv on the
time-reversed signal (un-reversed afterwards so features stay aligned).
The two conv paths are concatenated and fused by an LSTM, then the fused
features are concatenated with the shortcut and refined by a second LSTM.
Every stage is followed by batch normalization and the block activation.

The network stacks RFR blocks with width-2 max pooling between them,
applies global max pooling over time, and classifies the pooled bottleneck
vector with a small dense head ending in a two-way softmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError
from .layers import BatchNorm, Conv1d, Dense, LSTM
from .qire import QireConfig
from .rng import Rng
from .variational import LayerConfig, QiVConv


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture and regularization settings for one network."""

    blocks: "tuple[tuple[int, int], ...]" = ((16, 7), (32, 7))  # (filters, kernel width)
    pool_between: bool = True
    classifier_width: int = 32
    kl_scale: float = 1e-5
    qire: QireConfig = field(default_factory=QireConfig)
    prior_var: float = 0.01
    activation: str = "relu"
    bn_momentum: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.blocks) < 1:
            raise ConfigError("network needs at least one block")
        filters = [b[0] for b in self.blocks]
        if any(f < 1 for f in filters) or any(b[1] < 1 for b in self.blocks):
            raise ConfigError(f"block sizes must be positive, got {self.blocks}")
        if sorted(filters) != filters:
            raise ConfigError(f"filter counts must be nondecreasing, got {filters}")
        if self.classifier_width < 1:
            raise ConfigError(f"classifier width must be >= 1, got {self.classifier_width}")
        if self.prior_var <= 0.0:
            raise ConfigError(f"prior variance must be > 0, got {self.prior_var}")
        if self.kl_scale < 0.0:
            raise ConfigError(f"kl_scale must be >= 0, got {self.kl_scale}")
        if self.activation not in ad.ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")


def config_to_dict(cfg: NetworkConfig) -> dict:
    """JSON-friendly architecture echo (stored in checkpoints)."""
    return {
        "blocks": [list(b) for b in cfg.blocks],
        "pool_between": cfg.pool_between,
        "classifier_width": cfg.classifier_width,
        "kl_scale": cfg.kl_scale,
        "qire": {"k": cfg.qire.k, "p": cfg.qire.p,
                 "rescale_sqrt_n": cfg.qire.rescale_sqrt_n},
        "prior_var": cfg.prior_var,
        "activation": cfg.activation,
        "bn_momentum": cfg.bn_momentum,
        "seed": cfg.seed,
    }


def config_from_dict(d: dict) -> NetworkConfig:
    try:
        return NetworkConfig(
            blocks=tuple(tuple(b) for b in d["blocks"]),
            pool_between=bool(d["pool_between"]),
            classifier_width=int(d["classifier_width"]),
            kl_scale=float(d["kl_scale"]),
            qire=QireConfig(k=int(d["qire"]["k"]), p=float(d["qire"]["p"]),
                            rescale_sqrt_n=bool(d["qire"]["rescale_sqrt_n"])),
            prior_var=float(d["prior_var"]),
            activation=str(d["activation"]),
            bn_momentum=float(d["bn_momentum"]),
            seed=int(d["seed"]),
        )
    except KeyError as exc:
        raise ConfigError(f"architecture dictionary missing key {exc}") from exc


class RfrBlock:
    """One reversal-fusion-residual block."""

    def __init__(self, c_in: int, filters: int, width: int,
                 cfg: NetworkConfig, rng: Rng):
        self.filters = filters
        self.act = ad.ACTIVATIONS[cfg.activation]
        # conv paths apply their activation after batch norm, hence identity here
        conv_cfg = LayerConfig(qire=cfg.qire, kl_scale=cfg.kl_scale,
                               activation="identity", stride=1)
        self.fwd_conv = QiVConv(width, c_in, filters, conv_cfg, cfg.prior_var, rng)
        self.bwd_conv = QiVConv(width, c_in, filters, conv_cfg, cfg.prior_var, rng)
        self.shortcut = Conv1d(1, c_in, filters, rng)
        self.fusion_lstm = LSTM(2 * filters, filters, rng)
        self.refine_lstm = LSTM(2 * filters, filters, rng)
        mk_bn = lambda: BatchNorm(filters, momentum=cfg.bn_momentum)
        self.bn_fwd = mk_bn()
        self.bn_bwd = mk_bn()
        self.bn_short = mk_bn()
        self.bn_fuse = mk_bn()
        self.bn_refine = mk_bn()

    def path_features(self, x: Tensor, training: bool,
                      rng: "Rng | None") -> "tuple[Tensor, Tensor, Tensor]":
        """The three pre-fusion feature maps: (shortcut, forward, backward)."""
        s = self.act(self.bn_short.forward(self.shortcut.forward(x), training))
        f = self.act(self.bn_fwd.forward(self.fwd_conv.forward(x, training, rng), training))
        rx = ad.reverse_time(x)
        br = self.act(self.bn_bwd.forward(self.bwd_conv.forward(rx, training, rng), training))
        b = ad.reverse_time(br)
        return s, f, b

    def forward(self, x: Tensor, training: bool, rng: "Rng | None" = None) -> Tensor:
        s, f, b = self.path_features(x, training, rng)
        fused = self.act(self.bn_fuse.forward(
            self.fusion_lstm.forward(ad.concat([f, b], axis=-1)), training))
        out = self.act(self.bn_refine.forward(
            self.refine_lstm.forward(ad.concat([fused, s], axis=-1)), training))
        return out

    def kl(self) -> Tensor:
        return self.fwd_conv.kl() + self.bwd_conv.kl()

    def parameters(self) -> "list[Tensor]":
        params: "list[Tensor]" = []
        for part in (self.fwd_conv, self.bwd_conv, self.shortcut,
                     self.fusion_lstm, self.refine_lstm,
                     self.bn_fwd, self.bn_bwd, self.bn_short,
                     self.bn_fuse, self.bn_refine):
            params.extend(part.parameters())
        return params

    def _named_parts(self) -> "dict[str, object]":
        return {"fwd_conv": self.fwd_conv, "bwd_conv": self.bwd_conv,
                "shortcut": self.shortcut, "fusion_lstm": self.fusion_lstm,
                "refine_lstm": self.refine_lstm, "bn_fwd": self.bn_fwd,
                "bn_bwd": self.bn_bwd, "bn_short": self.bn_short,
                "bn_fuse": self.bn_fuse, "bn_refine": self.bn_refine}

    def state_arrays(self) -> "dict[str, np.ndarray]":
        out: "dict[str, np.ndarray]" = {}
        for name, part in self._named_parts().items():
            if isinstance(part, QiVConv):
                vk = part.vk
                arrays = {"mu_w": vk.mu_w.data, "rho_w": vk.rho_w.data,
                          "mu_b": vk.mu_b.data, "rho_b": vk.rho_b.data}
            else:
                arrays = part.state_arrays()
            for key, arr in arrays.items():
                out[f"{name}.{key}"] = arr
        return out

    def load_state(self, arrays: "dict[str, np.ndarray]") -> None:
        for name, part in self._named_parts().items():
            sub = {key[len(name) + 1:]: arr for key, arr in arrays.items()
                   if key.startswith(name + ".")}
            if isinstance(part, QiVConv):
                part.vk.mu_w.data = sub["mu_w"]
                part.vk.rho_w.data = sub["rho_w"]
                part.vk.mu_b.data = sub["mu_b"]
                part.vk.rho_b.data = sub["rho_b"]
            else:
                part.load_state(sub)


class QivcNet:
    """Stacked RFR blocks with a pooled dense softmax head."""

    def __init__(self, cfg: NetworkConfig, rng: "Rng | None" = None):
        if rng is None:
            rng = Rng(cfg.seed)
        self.cfg = cfg
        self.act = ad.ACTIVATIONS[cfg.activation]
        self.blocks: "list[RfrBlock]" = []
        c_in = 1
        for filters, width in cfg.blocks:
            self.blocks.append(RfrBlock(c_in, filters, width, cfg, rng))
            c_in = filters
        self.bottleneck_width = c_in
        self.hidden = Dense(c_in, cfg.classifier_width, rng)
        self.head = Dense(cfg.classifier_width, 2, rng)

    def features(self, x: Tensor, training: bool, rng: "Rng | None" = None) -> Tensor:
        """Bottleneck vector: block stack, pooling, global max pool -> (B, C)."""
        for i, block in enumerate(self.blocks):
            x = block.forward(x, training, rng)
            if self.cfg.pool_between and i + 1 < len(self.blocks):
                x = ad.max_pool(x, width=2)
        return ad.global_max_pool(x)

    def forward(self, x: Tensor, training: bool, rng: "Rng | None" = None) -> Tensor:
        z = self.features(x, training, rng)
        h = self.act(self.hidden.forward(z))
        return ad.softmax(self.head.forward(h))

    def kl(self) -> Tensor:
        total = self.blocks[0].kl()
        for block in self.blocks[1:]:
            total = total + block.kl()
        return total

    def parameters(self) -> "list[Tensor]":
        params: "list[Tensor]" = []
        for block in self.blocks:
            params.extend(block.parameters())
        params.extend(self.hidden.parameters())
        params.extend(self.head.parameters())
        return params

    def state_arrays(self) -> "dict[str, np.ndarray]":
        out: "dict[str, np.ndarray]" = {}
        for i, block in enumerate(self.blocks):
            for key, arr in block.state_arrays().items():
                out[f"block{i}.{key}"] = arr
        for key, arr in self.hidden.state_arrays().items():
            out[f"hidden.{key}"] = arr
        for key, arr in self.head.state_arrays().items():
            out[f"head.{key}"] = arr
        return out

    def load_state(self, arrays: "dict[str, np.ndarray]") -> None:
        own = self.state_arrays()
        missing = set(own) - set(arrays)
        if missing:
            raise ConfigError(f"checkpoint missing arrays: {sorted(missing)[:4]}...")
        mismatched = [key for key in own if arrays[key].shape != own[key].shape]
        if mismatched:
            raise ConfigError(
                f"checkpoint arrays do not fit this architecture: {mismatched[:4]}")
        for i, block in enumerate(self.blocks):
            prefix = f"block{i}."
            block.load_state({key[len(prefix):]: arr for key, arr in arrays.items()
                              if key.startswith(prefix)})
        self.hidden.load_state({key[7:]: arr for key, arr in arrays.items()
                                if key.startswith("hidden.")})
        self.head.load_state({key[5:]: arr for key, arr in arrays.items()
                              if key.startswith("head.")})


def segments_to_batch(segments) -> np.ndarray:
    """Stack segment values into a (batch, time, 1) array."""
    return np.stack([s.values for s in segments])[:, :, None]


def infer_probs(net: QivcNet, segments, batch: int = 64) -> np.ndarray:
    """Deterministic class probabilities (n, 2) for a list of segments."""
    rows = []
    for start in range(0, len(segments), batch):
        chunk = segments[start: start + batch]
        probs = net.forward(Tensor(segments_to_batch(chunk)), training=False)
        rows.append(probs.data)
    return np.concatenate(rows, axis=0)


def export_latent(net: QivcNet, segments, batch: int = 64) -> "list[tuple[str, str, float, float, float]]":
    """Rows of (segment id, label, first three bottleneck coordinates)."""
    if net.bottleneck_width < 3:
        raise ConfigError("bottleneck has fewer than 3 coordinates")
    rows: "list[tuple[str, str, float, float, float]]" = []
    for start in range(0, len(segments), batch):
        chunk = segments[start: start + batch]
        z = net.features(Tensor(segments_to_batch(chunk)), training=False).data
        for seg, vec in zip(chunk, z):
            seg_id = f"{seg.recording_id}:{seg.window_index}"
            rows.append((seg_id, seg.label, float(vec[0]), float(vec[1]), float(vec[2])))
    return rows
