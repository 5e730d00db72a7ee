"""Temporal encoder over per-node walk return-probability series.

Each node's diagonal sequence P(t)_{ii}, t = 1..T is projected to a
hidden width and run through a bidirectional gated recurrent network;
the two final states are concatenated per node and mean-pooled into one
graph-level vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import params as P, tensor as T
from .tensor import Tensor
from .walk import EvolutionTensor


@dataclass
class GruCellParams:
    """Update (z), reset (r) and candidate (c) gates, each with input,
    recurrent and bias terms."""
    wz: Tensor
    uz: Tensor
    bz: Tensor
    wr: Tensor
    ur: Tensor
    br: Tensor
    wc: Tensor
    uc: Tensor
    bc: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, dim: int) -> "GruCellParams":
        return cls(
            wz=P.glorot(rng, (dim, dim)), uz=P.glorot(rng, (dim, dim)), bz=P.zeros((dim,)),
            wr=P.glorot(rng, (dim, dim)), ur=P.glorot(rng, (dim, dim)), br=P.zeros((dim,)),
            wc=P.glorot(rng, (dim, dim)), uc=P.glorot(rng, (dim, dim)), bc=P.zeros((dim,)),
        )


@dataclass
class TemporalEncoderParams:
    in_w: Tensor            # 1 x h_g scalar projection
    in_b: Tensor
    forward_cell: GruCellParams
    backward_cell: GruCellParams
    out_w1: Tensor          # 2 h_g -> hidden readout FFN
    out_b1: Tensor
    out_w2: Tensor
    out_b2: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, state_dim: int, out_dim: int) -> "TemporalEncoderParams":
        return cls(
            in_w=P.glorot(rng, (1, state_dim)),
            in_b=P.zeros((state_dim,)),
            forward_cell=GruCellParams.init(rng, state_dim),
            backward_cell=GruCellParams.init(rng, state_dim),
            out_w1=P.glorot(rng, (2 * state_dim, out_dim)),
            out_b1=P.zeros((out_dim,)),
            out_w2=P.glorot(rng, (out_dim, out_dim)),
            out_b2=P.zeros((out_dim,)),
        )


def extract_diagonals(evolution: EvolutionTensor) -> Tensor:
    """Return series matrix, shape n x T: row i holds P(t)_{ii} over t."""
    n = evolution.num_nodes
    diag_idx = np.arange(n) * (n + 1)
    cols = [T.reshape(T.take(s, diag_idx), (n, 1)) for s in evolution.slices]
    return T.concat(cols, axis=1) if len(cols) > 1 else cols[0]


def gru_cell(x: Tensor, h_prev: Tensor, p: GruCellParams) -> Tensor:
    """One gated step: h = (1 - z) * h_prev + z * candidate."""
    z = T.sigmoid(T.add(T.add(T.matmul(x, p.wz), T.matmul(h_prev, p.uz)), p.bz))
    r = T.sigmoid(T.add(T.add(T.matmul(x, p.wr), T.matmul(h_prev, p.ur)), p.br))
    cand = T.tanh(T.add(T.add(T.matmul(x, p.wc),
                              T.matmul(T.mul(r, h_prev), p.uc)), p.bc))
    one_minus_z = T.sub(1.0, z)
    return T.add(T.mul(one_minus_z, h_prev), T.mul(z, cand))


def _gru_step_fused(pre: Tensor, h_prev: Tensor, u_zr: Tensor, u_c: Tensor,
                    state_dim: int) -> Tensor:
    """One fused tape node for a full gated step.

    pre holds the input-side gate preactivations [z | r | c] (n x 3 h_g);
    matches gru_cell exactly: h = (1 - z) * h_prev + z * candidate.
    """
    d = state_dim
    needs = (pre.requires_grad or h_prev.requires_grad
             or u_zr.requires_grad or u_c.requires_grad)
    s_pre = pre.data[:, :2 * d] + h_prev.data @ u_zr.data
    zr = 1.0 / (1.0 + np.exp(-np.clip(s_pre, -500.0, 500.0)))
    z = zr[:, :d]
    r = zr[:, d:]
    rh = r * h_prev.data
    cand = np.tanh(pre.data[:, 2 * d:] + rh @ u_c.data)
    out = h_prev.data + z * (cand - h_prev.data)

    def bw(g):
        dz = g * (cand - h_prev.data)
        dcand = g * z
        dh = g * (1.0 - z)
        dq = dcand * (1.0 - cand * cand)
        drh = dq @ u_c.data.T
        if u_c.requires_grad:
            u_c._accum_own(rh.T @ dq)
        dr = drh * h_prev.data
        dh += drh * r
        dzr = np.concatenate([dz, dr], axis=1) * (zr * (1.0 - zr))
        if u_zr.requires_grad:
            u_zr._accum_own(h_prev.data.T @ dzr)
        dh += dzr @ u_zr.data.T
        if h_prev.requires_grad:
            h_prev._accum_own(dh)
        if pre.requires_grad:
            pre._accum_own(np.concatenate([dzr, dq], axis=1))

    return T.custom(out, needs, bw)


def _run_direction(gate_pre: list[Tensor], cell: GruCellParams, n: int,
                   state_dim: int, reverse: bool) -> Tensor:
    """Run one GRU direction given per-step input-side gate preactivations
    (each n x 3 h_g, gate order z|r|c). Equivalent to iterating gru_cell."""
    u_zr = T.concat([cell.uz, cell.ur], axis=1)
    h = Tensor(np.zeros((n, state_dim)))
    order = range(len(gate_pre) - 1, -1, -1) if reverse else range(len(gate_pre))
    for t in order:
        h = _gru_step_fused(gate_pre[t], h, u_zr, cell.uc, state_dim)
    return h


def encode_temporal(series: Tensor, p: TemporalEncoderParams) -> Tensor:
    """BiGRU over the time axis for all nodes at once; output n x 2 h_g
    concatenating the forward and backward final states.

    Input-side projections for all steps and gates are batched into one
    matrix product per direction; the result matches step-by-step
    gru_cell application exactly.
    """
    n, steps = series.shape
    state_dim = p.in_w.shape[1]
    # rows [t*n : (t+1)*n] of the stacked input hold step t for all nodes
    stacked = T.reshape(T.transpose(series), (n * steps, 1))
    x_all = T.linear(stacked, p.in_w, p.in_b)

    halves = []
    for cell, reverse in ((p.forward_cell, False), (p.backward_cell, True)):
        w_cat = T.concat([cell.wz, cell.wr, cell.wc], axis=1)
        b_cat = T.concat([cell.bz, cell.br, cell.bc], axis=0)
        pre_all = T.linear(x_all, w_cat, b_cat)
        gate_pre = [T.slice_axis(pre_all, 0, t * n, (t + 1) * n)
                    for t in range(steps)]
        halves.append(_run_direction(gate_pre, cell, n, state_dim, reverse))

    return T.concat(halves, axis=1)


def graph_readout(h_nodes: Tensor, p: TemporalEncoderParams) -> Tensor:
    """Mean over nodes followed by a two-layer FFN; output shape 1 x h."""
    pooled = T.tmean(h_nodes, axis=0, keepdims=True)
    hidden = T.relu(T.linear(pooled, p.out_w1, p.out_b1))
    return T.linear(hidden, p.out_w2, p.out_b2)
