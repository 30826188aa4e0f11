"""The deep embedding CNN: topology, forward pass, deep-supervision loss and
backpropagation through the whole graph.

Layer order (k embedding blocks, P pre-layers)::

    pre.0 .. pre.{P-1}                       conv + PReLU
    for each block i:
        ebd.i.recon                          tentative synthesis, no activation
        ebd.i.conv_a                         conv + PReLU
        concat(conv_a output, tentative)
        ebd.i.fuse                           conv + PReLU, back to `channels`
        post.i                               conv + PReLU
    recon                                    final synthesis, no activation

The transform path therefore has ``P + 3k`` convolutions (3k+5 by default).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, StateError
from .layers import Conv2D, Param, PReLU, concat_backward, concat_forward
from .tensor import DTYPE, Rng

BETA = 0.5
ALPHA = 0.001


@dataclass(frozen=True)
class ModelConfig:
    k: int = 2
    channels: int = 128
    in_slices: int = 3
    pre_layers: int = 5
    kernel: int = 3

    def __post_init__(self):
        if self.k < 0:
            raise ConfigError(f"k must be >= 0, got {self.k}")
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if self.in_slices < 1 or self.in_slices % 2 == 0:
            raise ConfigError(f"in_slices must be a positive odd number, got {self.in_slices}")
        if self.pre_layers < 1:
            raise ConfigError(f"pre_layers must be >= 1, got {self.pre_layers}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"kernel must be a positive odd number, got {self.kernel}")

    @property
    def transform_layers(self) -> int:
        return self.pre_layers + 3 * self.k

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ForwardTrace:
    final: np.ndarray
    tentatives: list[np.ndarray]
    input: np.ndarray
    cache: dict = field(repr=False, default_factory=dict)
    state: tuple = field(repr=False, default=())


@dataclass
class LossParts:
    total: float
    final_l2: float
    aux_l2: list[float]
    reg: float

    @property
    def aux_total(self) -> float:
        return float(sum(self.aux_l2))


class DecnnModel:
    def __init__(self, config: ModelConfig, dtype=DTYPE):
        self.config = config
        c, s, kk = config.channels, config.in_slices, config.kernel
        self.convs: dict[str, Conv2D] = {}
        self.acts: dict[str, PReLU] = {}

        def conv(name, in_c, out_c, act=True):
            self.convs[name] = Conv2D(in_c, out_c, kk, name=name, dtype=dtype)
            if act:
                self.acts[name] = PReLU(out_c, name=f"{name}.act", dtype=dtype)

        for j in range(config.pre_layers):
            conv(f"pre.{j}", s if j == 0 else c, c)
        for i in range(config.k):
            conv(f"ebd.{i}.recon", c, s, act=False)
            conv(f"ebd.{i}.conv_a", c, c)
            conv(f"ebd.{i}.fuse", c + s, c)
            conv(f"post.{i}", c, c)
        conv("recon", c, s, act=False)

    @property
    def layer_names(self) -> list[str]:
        return list(self.convs)

    def transform_conv_names(self) -> list[str]:
        return [n for n in self.convs if not n.endswith("recon")]

    def parameters(self) -> list[Param]:
        out = []
        for name, layer in self.convs.items():
            out.extend(layer.params())
            if name in self.acts:
                out.extend(self.acts[name].params())
        return out

    def named_parameters(self) -> dict[str, Param]:
        return {p.name: p for p in self.parameters()}

    def state_token(self) -> tuple:
        return tuple(p.version for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def init(self, rng: Rng) -> None:
        # one child stream per layer keeps initialization independent of
        # how many layers precede it
        for name, layer in self.convs.items():
            layer.he_init(rng.child(_name_key(name)))

    # -- forward ---------------------------------------------------------

    def _layer(self, name, h, cache):
        cache[name] = h
        z = self.convs[name].forward(h)
        if name not in self.acts:
            return z
        cache[name + ".act"] = z
        return self.acts[name].forward(z)

    def forward(self, x: np.ndarray, capture: str | None = None) -> ForwardTrace:
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.in_slices:
            raise ShapeError(f"expected input (n, {cfg.in_slices}, h, w), got {x.shape}")
        cache: dict = {}
        h = x
        for j in range(cfg.pre_layers):
            h = self._layer(f"pre.{j}", h, cache)
        tentatives = []
        for i in range(cfg.k):
            t = self._layer(f"ebd.{i}.recon", h, cache)
            tentatives.append(t)
            a = self._layer(f"ebd.{i}.conv_a", h, cache)
            h = self._layer(f"ebd.{i}.fuse", concat_forward(a, t), cache)
            h = self._layer(f"post.{i}", h, cache)
        final = self._layer("recon", h, cache)
        return ForwardTrace(final, tentatives, x, cache, self.state_token())

    def activations(self, x: np.ndarray, name: str) -> np.ndarray:
        """Output of layer ``name`` (after its PReLU, if any) for input ``x``."""
        if name not in self.convs:
            raise KeyError(name)
        trace = self.forward(x)
        if name == "recon":
            return trace.final
        if name.endswith("recon"):
            return trace.tentatives[int(name.split(".")[1])]
        return self.acts[name].forward(trace.cache[name + ".act"])

    # -- loss ------------------------------------------------------------

    def regularizer(self) -> float:
        total = 0.0
        for p in self.parameters():
            if p.decay:
                v = p.value.astype(np.float64).ravel()
                total += float(v @ v)
        return total

    def loss(self, trace: ForwardTrace, target: np.ndarray, beta: float = BETA, alpha: float = ALPHA,
             data_scale: float = 1.0) -> LossParts:
        return loss(trace, target, beta, alpha, self.regularizer(), data_scale)

    # -- backward --------------------------------------------------------

    def _layer_back(self, name, g, cache):
        if name in self.acts:
            g = self.acts[name].backward(cache[name + ".act"], g)
        return self.convs[name].backward(cache[name], g)

    def backward(self, trace: ForwardTrace, target: np.ndarray, beta: float = BETA, alpha: float = ALPHA,
                 data_scale: float = 1.0) -> np.ndarray:
        """Accumulate dL/dparam into every grad buffer; return dL/dinput.

        ``data_scale`` multiplies the two L2 data terms (the trainer passes
        1/batch to average them over a batch); the regularizer is unscaled.
        """
        if trace.state != self.state_token():
            raise StateError("forward trace is stale: parameters changed since it was produced")
        if target.shape != trace.final.shape:
            raise ShapeError(f"target shape {target.shape} != output shape {trace.final.shape}")
        cfg, cache = self.config, trace.cache
        dt = trace.final.dtype
        g = (2.0 * data_scale * (trace.final - target)).astype(dt)
        g = self._layer_back("recon", g, cache)
        for i in reversed(range(cfg.k)):
            g = self._layer_back(f"post.{i}", g, cache)
            g = self._layer_back(f"ebd.{i}.fuse", g, cache)
            g_a, g_t = concat_backward(g, cfg.channels)
            g_t = g_t + (2.0 * data_scale * beta * (trace.tentatives[i] - target)).astype(dt)
            g = self._layer_back(f"ebd.{i}.conv_a", g_a, cache)
            g = g + self._layer_back(f"ebd.{i}.recon", g_t, cache)
        for j in reversed(range(cfg.pre_layers)):
            g = self._layer_back(f"pre.{j}", g, cache)
        if alpha:
            for p in self.parameters():
                if p.decay:
                    p.accumulate((2.0 * alpha * p.value).astype(p.grad.dtype))
        return g


def _name_key(name: str) -> int:
    # stable across runs, unlike hash()
    return int.from_bytes(name.encode(), "little") % (2**63)


def build(config: ModelConfig, rng: Rng, dtype=DTYPE) -> DecnnModel:
    model = DecnnModel(config, dtype=dtype)
    model.init(rng)
    return model


def loss(trace: ForwardTrace, target: np.ndarray, beta: float, alpha: float, reg: float,
         data_scale: float = 1.0) -> LossParts:
    """Deep-supervision objective: final L2 + beta * sum of tentative L2 + alpha * reg.

    The returned ``final_l2`` and ``aux_l2`` are unscaled sums of squares;
    ``data_scale`` only enters ``total``.
    """
    if target.shape != trace.final.shape:
        raise ShapeError(f"target shape {target.shape} != output shape {trace.final.shape}")
    tgt = target.astype(np.float64)

    def l2(a):
        d = (a.astype(np.float64) - tgt).ravel()
        return float(d @ d)

    final_l2 = l2(trace.final)
    aux = [l2(t) for t in trace.tentatives]
    total = data_scale * (final_l2 + beta * sum(aux)) + alpha * reg
    return LossParts(total, final_l2, aux, reg)


def identity_model(config: ModelConfig, dtype=DTYPE) -> DecnnModel:
    """A model whose final output copies its input exactly.

    Every conv routes the first ``in_slices`` channels through its centre tap
    and all PReLU slopes are 1. Tentatives also equal the input. Needs
    ``channels >= in_slices``.
    """
    s, c = config.in_slices, config.channels
    if c < s:
        raise ConfigError(f"identity construction needs channels >= in_slices ({c} < {s})")
    model = DecnnModel(config, dtype=dtype)
    mid = config.kernel // 2
    for layer in model.convs.values():
        w = layer.weight.value
        w[...] = 0
        for ch in range(s):
            w[ch, ch, mid, mid] = 1
        layer.bias.value[...] = 0
    for act in model.acts.values():
        act.alpha.value[...] = 1
    return model
