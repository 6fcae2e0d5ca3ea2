"""Encoder-only Transformer emulator and the MLP baseline.

Parameters live in plain ordered dicts of leaf :class:`Tensor` objects; the
insertion order is the canonical order used by checkpoints. Forward passes
are pure functions of (params, inputs).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as tt
from .errors import ConfigError, ContractError
from .tensor import Tensor

MAX_LEN = 64
ACTIVATIONS = ("leaky_relu", "relu", "gelu")


@dataclass
class ModelConfig:
    d_model: int
    n_layers: int
    n_heads: int
    f_in: int
    f_out: int
    ffn_mult: int = 4
    dropout: float = 0.1
    window: int = 5
    max_len: int = MAX_LEN

    def __post_init__(self):
        for name in ("d_model", "n_layers", "n_heads", "f_in", "f_out", "ffn_mult", "window"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.d_model % 2:
            raise ConfigError(f"sinusoidal positions need an even d_model, got {self.d_model}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.window > self.max_len:
            raise ConfigError(f"window {self.window} exceeds the positional table ({self.max_len})")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


@dataclass
class MlpConfig:
    f_in: int
    f_out: int
    hidden_widths: list = field(default_factory=lambda: [512] * 5)
    activation: str = "leaky_relu"

    def __post_init__(self):
        self.hidden_widths = [int(w) for w in self.hidden_widths]
        if not self.hidden_widths or min(self.hidden_widths) < 1:
            raise ConfigError("hidden_widths must be a nonempty list of positive ints")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")


def positional_encoding(L: int, d_model: int) -> np.ndarray:
    """Fixed sinusoidal table: sin on even columns, cos on odd ones."""
    if L < 1:
        raise ConfigError("L must be >= 1")
    if d_model % 2:
        raise ConfigError(f"d_model must be even, got {d_model}")
    pos = np.arange(L, dtype=np.float64)[:, None]
    i = np.arange(d_model // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / d_model)
    pe = np.empty((L, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def _seeded_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def _dense(params, rng, name, fan_in, fan_out):
    params[f"{name}.weight"] = Tensor(xavier_uniform(rng, fan_in, fan_out), requires_grad=True)
    params[f"{name}.bias"] = Tensor(np.zeros(fan_out), requires_grad=True)


def _norm(params, name, d):
    params[f"{name}.gamma"] = Tensor(np.ones(d), requires_grad=True)
    params[f"{name}.beta"] = Tensor(np.zeros(d), requires_grad=True)


def init_params(config, seed: int) -> dict:
    """Xavier-uniform matrices, zero biases, unit layer-norm gains."""
    rng = _seeded_rng(seed)
    params: dict = {}
    if isinstance(config, MlpConfig):
        widths = [config.f_in] + config.hidden_widths + [config.f_out]
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            _dense(params, rng, f"fc{i}", a, b)
        return params
    d, dff = config.d_model, config.ffn_mult * config.d_model
    _dense(params, rng, "embed", config.f_in, d)
    for layer in range(config.n_layers):
        p = f"layers.{layer}"
        for proj in ("wq", "wk", "wv", "wo"):
            _dense(params, rng, f"{p}.attn.{proj}", d, d)
        _norm(params, f"{p}.norm1", d)
        _dense(params, rng, f"{p}.ffn.w1", d, dff)
        _dense(params, rng, f"{p}.ffn.w2", dff, d)
        _norm(params, f"{p}.norm2", d)
    _dense(params, rng, "head", d, config.f_out)
    return params


def parameter_count(params: dict) -> int:
    return sum(p.size for p in params.values())


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _lin(x, params, name):
    return tt.linear(x, params[f"{name}.weight"], params[f"{name}.bias"])


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor):
    """Unmasked attention over ``[B, h, L, d_h]`` inputs; returns (out, weights)."""
    if not (q.shape == k.shape == v.shape) or q.ndim != 4:
        raise ContractError(f"attention needs equal [B,h,L,d_h] shapes, got "
                            f"{q.shape}, {k.shape}, {v.shape}")
    scores = tt.matmul(q, tt.swap_last(k)) * (1.0 / math.sqrt(q.shape[-1]))
    weights = tt.softmax(scores)
    return tt.matmul(weights, v), weights


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    B, L, d = x.shape
    return x.reshape(B, L, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: Tensor) -> Tensor:
    B, h, L, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, L, h * dh)


def multi_head_attention(x: Tensor, params: dict, prefix: str, n_heads: int) -> Tensor:
    q = _split_heads(_lin(x, params, f"{prefix}.wq"), n_heads)
    k = _split_heads(_lin(x, params, f"{prefix}.wk"), n_heads)
    v = _split_heads(_lin(x, params, f"{prefix}.wv"), n_heads)
    out, _ = scaled_dot_product_attention(q, k, v)
    return _lin(_merge_heads(out), params, f"{prefix}.wo")


def encoder_layer_forward(x: Tensor, params: dict, prefix: str, n_heads: int,
                          dropout: float = 0.0, train: bool = False,
                          rng: Optional[np.random.Generator] = None) -> Tensor:
    """Post-norm layer: LN(x + MHA(x)), then LN(x1 + W2 gelu(W1 x1))."""
    attn = multi_head_attention(x, params, f"{prefix}.attn", n_heads)
    x1 = tt.layer_norm(x + tt.dropout(attn, dropout, rng, train),
                       params[f"{prefix}.norm1.gamma"], params[f"{prefix}.norm1.beta"])
    hidden = tt.gelu(_lin(x1, params, f"{prefix}.ffn.w1"))
    ffn = _lin(hidden, params, f"{prefix}.ffn.w2")
    return tt.layer_norm(x1 + tt.dropout(ffn, dropout, rng, train),
                         params[f"{prefix}.norm2.gamma"], params[f"{prefix}.norm2.beta"])


def paraformer_forward(x, params: dict, config: ModelConfig, train: bool = False,
                       rng: Optional[np.random.Generator] = None) -> Tensor:
    """``[B, L, f_in] -> [B, L, f_out]``; every position gets a prediction."""
    x = _as_tensor(x)
    if x.ndim != 3 or x.shape[2] != config.f_in:
        raise ContractError(f"expected [B, L, {config.f_in}] input, got {x.shape}")
    B, L, _ = x.shape
    if L > config.max_len:
        raise ContractError(f"sequence length {L} exceeds max_len {config.max_len}")
    pe = np.broadcast_to(positional_encoding(L, config.d_model), (B, L, config.d_model))
    h = _lin(x, params, "embed") + Tensor(np.ascontiguousarray(pe))
    h = tt.dropout(h, config.dropout, rng, train)
    for layer in range(config.n_layers):
        h = encoder_layer_forward(h, params, f"layers.{layer}", config.n_heads,
                                  config.dropout, train, rng)
    return _lin(h, params, "head")


_ACT = {
    "leaky_relu": lambda t: tt.leaky_relu(t, 0.01),
    "relu": tt.relu,
    "gelu": tt.gelu,
}


def mlp_forward(x, params: dict, config: MlpConfig) -> Tensor:
    """``[B, f_in] -> [B, f_out]``; samples are independent of one another."""
    x = _as_tensor(x)
    if x.ndim != 2 or x.shape[1] != config.f_in:
        raise ContractError(f"expected [B, {config.f_in}] input, got {x.shape}")
    act = _ACT[config.activation]
    n = len(config.hidden_widths)
    h = x
    for i in range(n + 1):
        w = params[f"fc{i}.weight"]
        if w.shape[0] != h.shape[1]:
            raise ContractError(f"layer fc{i} expects width {w.shape[0]}, got {h.shape[1]}")
        h = _lin(h, params, f"fc{i}")
        if i < n:
            h = act(h)
    return h


class Paraformer:
    kind = "paraformer"

    def __init__(self, config: ModelConfig):
        self.config = config

    @property
    def window(self) -> int:
        return self.config.window

    def init_params(self, seed: int) -> dict:
        return init_params(self.config, seed)

    def forward(self, params, x, train=False, rng=None) -> Tensor:
        return paraformer_forward(x, params, self.config, train, rng)


class Mlp:
    """Context-free baseline; consumes windows of length 1."""
    kind = "mlp"
    window = 1

    def __init__(self, config: MlpConfig):
        self.config = config

    def init_params(self, seed: int) -> dict:
        return init_params(self.config, seed)

    def forward(self, params, x, train=False, rng=None) -> Tensor:
        x = _as_tensor(x)
        if x.ndim == 2:
            return mlp_forward(x, params, self.config)
        B, L, F = x.shape
        out = mlp_forward(x.reshape(B * L, F), params, self.config)
        return out.reshape(B, L, self.config.f_out)


def infer_config(kind: str, params: dict, **hyper):
    """Rebuild a config from parameter shapes plus non-shape hyperparameters."""
    if kind == "mlp":
        n = sum(1 for k in params if k.endswith(".weight"))
        widths = [params[f"fc{i}.weight"].shape[1] for i in range(n - 1)]
        return MlpConfig(f_in=params["fc0.weight"].shape[0],
                         f_out=params[f"fc{n - 1}.weight"].shape[1],
                         hidden_widths=widths,
                         activation=hyper.get("activation", "leaky_relu"))
    n_layers = len({k.split(".")[1] for k in params if k.startswith("layers.")})
    d_model = params["embed.weight"].shape[1]
    dff = params["layers.0.ffn.w1.weight"].shape[1] if n_layers else 4 * d_model
    return ModelConfig(d_model=d_model, n_layers=n_layers, n_heads=hyper["n_heads"],
                       f_in=params["embed.weight"].shape[0], f_out=params["head.weight"].shape[1],
                       ffn_mult=dff // d_model, dropout=hyper.get("dropout", 0.0),
                       window=hyper.get("window", 5))


def build_model(config):
    return Mlp(config) if isinstance(config, MlpConfig) else Paraformer(config)
