"""Transformer encoder layer with a walk-derived additive attention bias.

The final-time walk probability matrix is column-normalized (a numeric
safeguard; exact walk output is already column-stochastic), log-scaled
as log(1 + P), and added identically to every head's attention logits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import params as P, tensor as T
from .errors import ConfigError, ContractViolation
from .tensor import CounterRng, Tensor

FFN_EXPANSION = 4


@dataclass
class StructuralBias:
    matrix: Tensor

    def validate(self) -> None:
        b = self.matrix.data
        if b.min() < 0.0 or b.max() > math.log(2.0) + 1e-9:
            raise ContractViolation(
                f"bias entries outside [0, ln 2]: [{b.min()}, {b.max()}]")


@dataclass
class AttentionLayerParams:
    wq: Tensor              # h x h, no bias
    wk: Tensor
    wv: Tensor
    wo: Tensor
    ffn_w1: Tensor          # h x 4h
    ffn_b1: Tensor
    ffn_w2: Tensor          # 4h x h
    ffn_b2: Tensor
    norm1_scale: Tensor
    norm1_shift: Tensor
    norm2_scale: Tensor
    norm2_shift: Tensor
    heads: int = 4

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int, heads: int) -> "AttentionLayerParams":
        if heads < 1 or hidden % heads != 0:
            raise ConfigError(f"hidden width {hidden} not divisible by {heads} heads")
        wide = FFN_EXPANSION * hidden
        return cls(
            wq=P.glorot(rng, (hidden, hidden)),
            wk=P.glorot(rng, (hidden, hidden)),
            wv=P.glorot(rng, (hidden, hidden)),
            wo=P.glorot(rng, (hidden, hidden)),
            ffn_w1=P.glorot(rng, (hidden, wide)),
            ffn_b1=P.zeros((wide,)),
            ffn_w2=P.glorot(rng, (wide, hidden)),
            ffn_b2=P.zeros((hidden,)),
            norm1_scale=P.ones((hidden,)),
            norm1_shift=P.zeros((hidden,)),
            norm2_scale=P.ones((hidden,)),
            norm2_shift=P.zeros((hidden,)),
            heads=heads,
        )


def structural_bias(p_final: Tensor) -> StructuralBias:
    """Column-normalize the final walk slice and take log(1 + .); fused into
    one differentiable tape node."""
    sums = p_final.data.sum(axis=0, keepdims=True)
    if float(sums.min()) <= 1e-12:
        raise ContractViolation(
            "walk probability column sums to ~0; upstream evolution is corrupt")
    normalized = p_final.data / sums
    out = np.log1p(normalized)

    def bw(g):
        # dL/dP_kj = (q_kj - sum_i q_ij Phat_ij) / s_j with q = g / (1 + Phat)
        q = g / (1.0 + normalized)
        corr = (q * normalized).sum(axis=0, keepdims=True)
        p_final._accum_own((q - corr) / sums)

    return StructuralBias(T.custom(out, p_final.requires_grad, bw))


def _attention_head(q: Tensor, k: Tensor, v: Tensor, bias: Tensor,
                    scale: float) -> Tensor:
    """Fused softmax(q k^T scale + bias) v for one head; rows of the
    attention matrix sum to one."""
    needs = (q.requires_grad or k.requires_grad or v.requires_grad
             or bias.requires_grad)
    scores = q.data @ k.data.T * scale + bias.data
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    attn = e / e.sum(axis=1, keepdims=True)
    out = attn @ v.data

    def bw(g):
        if v.requires_grad:
            v._accum_own(attn.T @ g)
        d_attn = g @ v.data.T
        d_scores = attn * (d_attn - (d_attn * attn).sum(axis=1, keepdims=True))
        if bias.requires_grad:
            bias._accum(d_scores)
        if q.requires_grad:
            q._accum_own(d_scores @ k.data * scale)
        if k.requires_grad:
            k._accum_own(d_scores.T @ q.data * scale)

    return T.custom(out, needs, bw)


def attention_layer(hnode: Tensor, bias: StructuralBias, p: AttentionLayerParams,
                    dropout_rate: float, train: bool, rng: CounterRng) -> Tensor:
    """Multi-head self-attention with additive bias, then FFN; both
    sublayers carry residual connections and layer normalization."""
    n, h = hnode.shape
    if h % p.heads != 0:
        raise ConfigError(f"hidden width {h} not divisible by {p.heads} heads")
    if bias.matrix.shape != (n, n):
        raise ContractViolation(
            f"bias shape {bias.matrix.shape} does not match {n} nodes")
    dh = h // p.heads
    scale = 1.0 / math.sqrt(dh)

    q = T.matmul(hnode, p.wq)
    k = T.matmul(hnode, p.wk)
    v = T.matmul(hnode, p.wv)

    head_outputs = []
    for i in range(p.heads):
        lo, hi = i * dh, (i + 1) * dh
        qi = T.slice_axis(q, 1, lo, hi)
        ki = T.slice_axis(k, 1, lo, hi)
        vi = T.slice_axis(v, 1, lo, hi)
        head_outputs.append(_attention_head(qi, ki, vi, bias.matrix, scale))

    attended = T.matmul(T.concat(head_outputs, axis=1), p.wo)
    attended = T.dropout(attended, dropout_rate, train, rng)
    x = T.layer_norm(T.add(hnode, attended), p.norm1_scale, p.norm1_shift)

    inner = T.relu(T.linear(x, p.ffn_w1, p.ffn_b1))
    inner = T.dropout(inner, dropout_rate, train, rng)
    ffn_out = T.linear(inner, p.ffn_w2, p.ffn_b2)
    return T.layer_norm(T.add(x, ffn_out), p.norm2_scale, p.norm2_shift)
