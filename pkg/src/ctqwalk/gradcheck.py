"""Finite-difference verification of the full trainable pipeline.

Central differences (eval-mode forward, so the comparison is against a
deterministic function) against the tape gradients, coordinate by
coordinate. A coordinate passes when the relative error is within
tolerance or the absolute difference is below the noise floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model as M
from .data import Graph
from .tensor import backward, no_grad


@dataclass
class CoordinateResult:
    name: str
    index: int
    autodiff: float
    numeric: float
    rel_err: float


@dataclass
class GradCheckReport:
    checked: int
    failed: int
    threshold: float
    worst: list[CoordinateResult] = field(default_factory=list)

    @property
    def pass_fraction(self) -> float:
        return 1.0 if self.checked == 0 else 1.0 - self.failed / self.checked

    def passed(self, required_fraction: float = 0.99) -> bool:
        return self.pass_fraction >= required_fraction

    @property
    def worst_rel_err(self) -> float:
        return self.worst[0].rel_err if self.worst else 0.0


def random_graph(n: int, feature_dim: int, num_classes: int, seed: int,
                 edge_prob: float = 0.5) -> Graph:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x9e])))
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.uniform() < edge_prob]
    if not edges and n > 1:
        edges = [(0, 1)]
    return Graph(
        num_nodes=n,
        edges=edges,
        features=rng.normal(size=(n, feature_dim)),
        label=int(rng.integers(num_classes)),
    )


def model_gradcheck(graph: Graph, params: M.ModelParams, config: M.ModelConfig,
                    eps: float = 1e-5, rel_tol: float = 1e-4,
                    abs_floor: float = 1e-8, max_per_param: int | None = None,
                    sample_seed: int = 0) -> GradCheckReport:
    """Compare tape gradients of the eval-mode loss with central differences.

    max_per_param limits checked coordinates per parameter tensor
    (deterministic subsample); None checks every coordinate.
    """
    label = graph.label

    def loss_value() -> float:
        with no_grad():
            logits = M.forward(graph, params, config, train=False)
            return M.loss(logits, label).item()

    params.zero_grads()
    logits = M.forward(graph, params, config, train=False)
    backward(M.loss(logits, label))
    grads = {name: p.grad.copy() for name, p in params.named()}

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([sample_seed, 0x5d])))
    results: list[CoordinateResult] = []
    failed = 0
    checked = 0
    for name, p in params.named():
        flat = p.data.reshape(-1)
        size = flat.size
        if max_per_param is not None and size > max_per_param:
            coords = np.sort(rng.choice(size, size=max_per_param, replace=False))
        else:
            coords = np.arange(size)
        for c in coords:
            original = flat[c]
            flat[c] = original + eps
            up = loss_value()
            flat[c] = original - eps
            down = loss_value()
            flat[c] = original
            fd = (up - down) / (2.0 * eps)
            ad = float(grads[name].reshape(-1)[c])
            diff = abs(ad - fd)
            denom = max(abs(ad), abs(fd))
            rel = 0.0 if denom == 0.0 else diff / denom
            ok = rel <= rel_tol or diff <= abs_floor
            checked += 1
            if not ok:
                failed += 1
            results.append(CoordinateResult(name, int(c), ad, fd, rel))

    results.sort(key=lambda r: r.rel_err, reverse=True)
    return GradCheckReport(checked=checked, failed=failed,
                           threshold=rel_tol, worst=results[:5])
