"""End-to-end differentiable map from a graph to class logits.

Per forward pass the walk evolution tensor is computed once, then every
stacked layer fuses (a) attention over node embeddings biased by the
final-time slice and (b) a graph-level vector from the temporal encoder,
broadcast back to the nodes. Mean pooling and a two-layer classifier
produce the logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import attention, params as P, recurrent, tensor as T, walk
from .data import Graph
from .errors import ConfigError, ContractViolation, NumericError
from .tensor import CounterRng, Tensor


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 2
    time_steps: int = 4
    hidden: int = 64
    heads: int = 4
    dropout: float = 0.3
    num_classes: int = 2
    feature_dim: int = 1
    use_qwgt: bool = True          # walk-biased attention branch
    use_qwgr: bool = True          # temporal recurrent branch

    def validate(self) -> None:
        if self.layers < 1 or self.time_steps < 1 or self.hidden < 1:
            raise ConfigError("layers, time_steps and hidden must be positive")
        if self.heads < 1 or self.hidden % self.heads != 0:
            raise ConfigError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.num_classes < 2 or self.feature_dim < 1:
            raise ConfigError("need num_classes >= 2 and feature_dim >= 1")
        if not (self.use_qwgt or self.use_qwgr):
            raise ConfigError("at least one of the attention/recurrent branches "
                              "must stay enabled")
        if self.hidden % 2 != 0:
            raise ConfigError("hidden width must be even (recurrent state is hidden/2)")


def ablate(config: ModelConfig, which: str) -> ModelConfig:
    """Clear one branch flag; 'no_qwgt' or 'no_qwgr'."""
    if which == "no_qwgt":
        out = replace(config, use_qwgt=False)
    elif which == "no_qwgr":
        out = replace(config, use_qwgr=False)
    else:
        raise ConfigError(f"unknown ablation {which!r}")
    out.validate()
    return out


@dataclass
class FusionParams:
    w: Tensor               # 2h x h
    b: Tensor

    @classmethod
    def init(cls, rng, hidden):
        return cls(w=P.glorot(rng, (2 * hidden, hidden)), b=P.zeros((hidden,)))


@dataclass
class ClassifierParams:
    w1: Tensor              # h x h/2
    b1: Tensor
    w2: Tensor              # h/2 x C
    b2: Tensor

    @classmethod
    def init(cls, rng, hidden, num_classes):
        mid = hidden // 2
        return cls(w1=P.glorot(rng, (hidden, mid)), b1=P.zeros((mid,)),
                   w2=P.glorot(rng, (mid, num_classes)), b2=P.zeros((num_classes,)))


@dataclass
class ModelParams:
    encoder: walk.WalkEncoderParams
    attention_layers: list[attention.AttentionLayerParams]
    temporal_layers: list[recurrent.TemporalEncoderParams]
    fusion_layers: list[FusionParams]
    classifier: ClassifierParams

    def named(self) -> list[tuple[str, Tensor]]:
        return P.named_tensors(self)

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, t in self.named():
            src = values[name]
            if src.shape != t.data.shape:
                raise ContractViolation(
                    f"checkpoint shape {src.shape} != parameter {name} {t.data.shape}")
            t.data[...] = src

    def zero_grads(self) -> None:
        for _, t in self.named():
            t.zero_grad()


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    config.validate()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x6d0de1])))
    h = config.hidden
    return ModelParams(
        encoder=walk.WalkEncoderParams.init(rng, config.feature_dim, h),
        attention_layers=[attention.AttentionLayerParams.init(rng, h, config.heads)
                          for _ in range(config.layers)],
        temporal_layers=[recurrent.TemporalEncoderParams.init(rng, h // 2, h)
                         for _ in range(config.layers)],
        fusion_layers=[FusionParams.init(rng, h) for _ in range(config.layers)],
        classifier=ClassifierParams.init(rng, h, config.num_classes),
    )


def forward(graph: Graph, params: ModelParams, config: ModelConfig,
            train: bool = False, rng: CounterRng | None = None) -> Tensor:
    """Class logits for one graph, shape (1, num_classes)."""
    if graph.features.shape[1] != config.feature_dim:
        raise ContractViolation(
            f"graph feature dim {graph.features.shape[1]} != config {config.feature_dim}")
    if rng is None:
        rng = CounterRng(0)
    n = graph.num_nodes

    h_nodes, evolution = walk.encode(graph, params.encoder, config.time_steps)
    series = recurrent.extract_diagonals(evolution) if config.use_qwgr else None
    ones_col = Tensor(np.ones((n, 1)))

    for layer in range(config.layers):
        if config.use_qwgt:
            bias = attention.structural_bias(evolution.final())
            attended = attention.attention_layer(
                h_nodes, bias, params.attention_layers[layer],
                config.dropout, train, rng)
        else:
            attended = h_nodes

        if config.use_qwgr:
            tp = params.temporal_layers[layer]
            graph_vec = recurrent.graph_readout(
                recurrent.encode_temporal(series, tp), tp)
        else:
            graph_vec = Tensor(np.zeros((1, config.hidden)))

        fused_in = T.concat([attended, T.matmul(ones_col, graph_vec)], axis=1)
        fp = params.fusion_layers[layer]
        h_nodes = T.dropout(T.relu(T.linear(fused_in, fp.w, fp.b)),
                            config.dropout, train, rng)

    pooled = T.tmean(h_nodes, axis=0, keepdims=True)
    cp = params.classifier
    logits = T.linear(T.relu(T.linear(pooled, cp.w1, cp.b1)), cp.w2, cp.b2)
    if not np.all(np.isfinite(logits.data)):
        raise NumericError("non-finite logits at classifier stage")
    return logits


def loss(logits: Tensor, label: int) -> Tensor:
    return T.cross_entropy(logits, label)


def predict(graph: Graph, params: ModelParams, config: ModelConfig) -> int:
    with T.no_grad():
        logits = forward(graph, params, config, train=False)
    return int(np.argmax(logits.data.reshape(-1)))
