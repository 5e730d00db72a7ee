"""Trainable continuous-time quantum walk over a graph.

Node features are embedded once, an edge MLP turns embedded endpoint
pairs into sigmoid edge weights, the symmetrized weights define a
Laplacian-form Hamiltonian, and the walk evolves from every single-node
initial state (columns of the identity) over the integer time grid
1..T. The stacked measurement probabilities form the evolution tensor
consumed by the attention bias and the temporal encoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg, params as P, tensor as T
from .data import Graph
from .errors import ContractViolation
from .linalg import ComplexMatrix
from .tensor import Tensor

HAMILTONIAN_SYMMETRY_TOL = 1e-10
ROW_SUM_TOL = 1e-9
COLUMN_SUM_TOL = 1e-8
SLICE_SYMMETRY_TOL = 1e-8


@dataclass
class WalkEncoderParams:
    """Feature-embedding MLP (d -> h, one relu hidden layer) and the
    two-layer edge-weight perceptron (2h -> h_e -> 1, no biases)."""
    embed_w1: Tensor        # d x h_mid
    embed_b1: Tensor        # h_mid
    embed_w2: Tensor        # h_mid x h
    embed_b2: Tensor        # h
    edge_w1: Tensor         # 2h x h_e
    edge_w2: Tensor         # h_e x 1

    @classmethod
    def init(cls, rng: np.random.Generator, feature_dim: int, hidden: int,
             edge_hidden: int | None = None) -> "WalkEncoderParams":
        h_e = hidden if edge_hidden is None else edge_hidden
        return cls(
            embed_w1=P.glorot(rng, (feature_dim, hidden)),
            embed_b1=P.zeros((hidden,)),
            embed_w2=P.glorot(rng, (hidden, hidden)),
            embed_b2=P.zeros((hidden,)),
            edge_w1=P.glorot(rng, (2 * hidden, h_e)),
            edge_w2=P.glorot(rng, (h_e, 1)),
        )


@dataclass
class Hamiltonian:
    matrix: Tensor

    def validate(self, check_psd: bool = False) -> None:
        h = self.matrix.data
        linalg.check_symmetric(h, HAMILTONIAN_SYMMETRY_TOL, what="Hamiltonian")
        if h.size:
            row_dev = float(np.abs(h.sum(axis=1)).max())
            if row_dev > ROW_SUM_TOL:
                raise ContractViolation(f"Hamiltonian row sums deviate by {row_dev:.3e}")
            off = h - np.diag(np.diagonal(h))
            if off.size and (off.max() > 1e-12 or off.min() < -1.0 - 1e-12):
                raise ContractViolation("off-diagonal entries outside [-1, 0]")
        if check_psd and h.size:
            lam, _ = linalg.symmetric_eig(h)
            if lam[0] < -1e-8:
                raise ContractViolation(f"Hamiltonian not PSD: min eigenvalue {lam[0]:.3e}")


@dataclass
class EvolutionTensor:
    """Walk probabilities: slices[t][i, j] is the probability of measuring
    the walker at node i at time times[t], having started at node j."""
    slices: list[Tensor]
    times: list[float]

    @property
    def num_nodes(self) -> int:
        return self.slices[0].shape[0]

    def final(self) -> Tensor:
        return self.slices[-1]

    def to_numpy(self) -> np.ndarray:
        return np.stack([s.data for s in self.slices])

    def max_column_sum_deviation(self) -> float:
        return max(float(np.abs(s.data.sum(axis=0) - 1.0).max()) for s in self.slices)

    def max_symmetry_deviation(self) -> float:
        return max(float(np.abs(s.data - s.data.T).max()) for s in self.slices)

    def validate(self) -> None:
        for s, t in zip(self.slices, self.times):
            p = s.data
            if p.min() < -1e-12 or p.max() > 1.0 + 1e-12:
                raise ContractViolation(
                    f"probabilities at t={t} outside [0, 1]: [{p.min()}, {p.max()}]")
        dev = self.max_column_sum_deviation()
        if dev > COLUMN_SUM_TOL:
            raise ContractViolation(f"column sums deviate from 1 by {dev:.3e}")
        dev = self.max_symmetry_deviation()
        if dev > SLICE_SYMMETRY_TOL:
            raise ContractViolation(f"slice asymmetry {dev:.3e}")


def initial_embeddings(features: Tensor, p: WalkEncoderParams) -> Tensor:
    if features.shape[1] != p.embed_w1.shape[0]:
        raise ContractViolation(
            f"feature dim {features.shape[1]} != embedding input {p.embed_w1.shape[0]}")
    hidden = T.relu(T.linear(features, p.embed_w1, p.embed_b1))
    return T.linear(hidden, p.embed_w2, p.embed_b2)


def directed_edge_indices(edges: list[tuple[int, int]]) -> tuple[np.ndarray, np.ndarray]:
    """Both orientations of every undirected edge, in a fixed order."""
    src = np.array([i for i, _ in edges] + [j for _, j in edges], dtype=np.intp)
    dst = np.array([j for _, j in edges] + [i for i, _ in edges], dtype=np.intp)
    return src, dst


def edge_weights(h0: Tensor, edges: list[tuple[int, int]],
                 p: WalkEncoderParams) -> Tensor:
    """Sigmoid weight per directed edge orientation; shape (2m,)."""
    src, dst = directed_edge_indices(edges)
    pair = T.concat([T.take_rows(h0, src), T.take_rows(h0, dst)], axis=1)
    raw = T.matmul(T.relu(T.matmul(pair, p.edge_w1)), p.edge_w2)
    return T.reshape(T.sigmoid(raw), (len(src),))


def build_hamiltonian(weights: Tensor, edges: list[tuple[int, int]],
                      n: int) -> Hamiltonian:
    """H = D' - A_sym with A_sym = (W + W^T)/2 and D' the row sums of A_sym."""
    if not edges:
        return Hamiltonian(Tensor(np.zeros((n, n))))
    src, dst = directed_edge_indices(edges)
    w = T.scatter_matrix(weights, src, dst, n)
    a_sym = T.mul(T.add(w, T.transpose(w)), 0.5)
    degree = T.diag_matrix(T.tsum(a_sym, axis=1))
    return Hamiltonian(T.sub(degree, a_sym))


def unit_hamiltonian(graph: Graph) -> Hamiltonian:
    """Classical combinatorial Laplacian (all edge weights one)."""
    return build_hamiltonian(Tensor(np.ones(2 * len(graph.edges))),
                             graph.edges, graph.num_nodes)


def walk_probabilities(ham: Hamiltonian, t: float) -> Tensor:
    """Single-time probability matrix |U(t)|^2 for all basis initial states."""
    return _probabilities(linalg.cexpm_minus_iHt(ham.matrix, t))


def _probabilities(u: ComplexMatrix) -> Tensor:
    """Fused |u|^2 = re^2 + im^2 (measurement of every column state)."""
    re, im = u.re, u.im
    needs = re.requires_grad or im.requires_grad

    def bw(g):
        if re.requires_grad:
            re._accum_own(2.0 * g * re.data)
        if im.requires_grad:
            im._accum_own(2.0 * g * im.data)

    return T.custom(re.data * re.data + im.data * im.data, needs, bw)


def simulate_ctqw(ham: Hamiltonian, steps: int) -> EvolutionTensor:
    """Evolution tensor on the integer grid t = 1..steps.

    U(1) is exponentiated once; later slices reuse U(t+1) = U(1) U(t),
    which matches direct exponentiation by the semigroup property.
    """
    if steps < 1:
        raise ContractViolation(f"need at least one time step, got {steps}")
    ham.validate()
    u1 = linalg.cexpm_minus_iHt(ham.matrix, 1.0)
    slices = [_probabilities(u1)]
    u = u1
    for _ in range(1, steps):
        u = linalg.cmatmul(u1, u)
        slices.append(_probabilities(u))
    return EvolutionTensor(slices=slices, times=[float(t) for t in range(1, steps + 1)])


def encode(graph: Graph, p: WalkEncoderParams, steps: int) -> tuple[Tensor, EvolutionTensor]:
    """Initial embeddings plus the walk evolution tensor for one graph."""
    features = Tensor(graph.features)
    h0 = initial_embeddings(features, p)
    if graph.edges:
        w = edge_weights(h0, graph.edges, p)
        ham = build_hamiltonian(w, graph.edges, graph.num_nodes)
    else:
        ham = Hamiltonian(Tensor(np.zeros((graph.num_nodes, graph.num_nodes))))
    return h0, simulate_ctqw(ham, steps)
