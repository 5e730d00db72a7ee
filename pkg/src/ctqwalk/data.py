"""TU-collection dataset parsing, degree-feature augmentation and
stratified cross-validation folds.

TU layout: `<name>_A.txt` holds comma-separated 1-based global node id
pairs (both directions of each undirected edge), `<name>_graph_indicator.txt`
assigns each global node to a 1-based graph id, `<name>_graph_labels.txt`
one label per graph; `<name>_node_labels.txt` (integers, one-hot encoded
here) and `<name>_node_attributes.txt` (comma-separated reals, appended
after the one-hot block) are optional.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DatasetError

log = logging.getLogger(__name__)


@dataclass
class Graph:
    num_nodes: int
    edges: list[tuple[int, int]]          # undirected, deduplicated, i < j
    features: np.ndarray                  # num_nodes x feature_dim
    label: int

    def validate(self) -> None:
        if self.num_nodes < 1:
            raise DatasetError(f"graph must have at least one node, got {self.num_nodes}")
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise DatasetError(f"edge ({i}, {j}) out of range for {self.num_nodes} nodes")
            if i == j:
                raise DatasetError(f"self-loop at node {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise DatasetError(f"duplicate edge {key}")
            seen.add(key)
        if self.features.shape[0] != self.num_nodes:
            raise DatasetError(
                f"feature rows {self.features.shape[0]} != node count {self.num_nodes}")

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg


@dataclass
class Dataset:
    name: str
    graphs: list[Graph]
    num_classes: int
    feature_dim: int

    def validate(self) -> None:
        if self.num_classes < 2:
            raise DatasetError(f"need at least 2 classes, got {self.num_classes}")
        seen_labels = set()
        for g in self.graphs:
            g.validate()
            if g.features.shape[1] != self.feature_dim:
                raise DatasetError(
                    f"graph feature dim {g.features.shape[1]} != dataset {self.feature_dim}")
            if not (0 <= g.label < self.num_classes):
                raise DatasetError(f"label {g.label} outside [0, {self.num_classes})")
            seen_labels.add(g.label)
        if seen_labels != set(range(self.num_classes)):
            raise DatasetError(f"classes {sorted(seen_labels)} do not cover "
                               f"[0, {self.num_classes})")

    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)


@dataclass
class FoldPlan:
    seed: int
    folds: list[list[int]]                # k disjoint test-index lists
    inner_val: list[list[int]] = field(default_factory=list)

    def train_indices(self, fold: int, n: int) -> list[int]:
        held = set(self.folds[fold]) | set(self.inner_val[fold])
        return [i for i in range(n) if i not in held]

    def validate(self, labels: np.ndarray) -> None:
        n = len(labels)
        flat = sorted(i for f in self.folds for i in f)
        if flat != list(range(n)):
            raise ConfigError("test folds do not partition the index range")
        k = len(self.folds)
        classes = np.unique(labels)
        for c in classes:
            total = int((labels == c).sum())
            ideal = total / k
            for f in self.folds:
                got = sum(1 for i in f if labels[i] == c)
                if abs(got - ideal) > 1.0:
                    raise ConfigError(
                        f"fold class count {got} deviates from ideal {ideal:.2f} "
                        f"by more than one graph (class {c})")
        for fold, val in zip(self.folds, self.inner_val):
            if set(fold) & set(val):
                raise ConfigError("validation indices overlap the test fold")


# ---------------------------------------------------------------------------
# parsing

def _read_int(text: str, path: Path, line_no: int) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise DatasetError(
            f"{path.name}:{line_no}: expected integer, got {text.strip()!r}") from None


def _read_lines(path: Path) -> list[str]:
    lines = path.read_text().splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    return lines


def parse_tu_dataset(root_dir, name: str) -> Dataset:
    """Load a TU-format dataset from `root_dir/name`."""
    base = Path(root_dir) / name
    paths = {key: base / f"{name}_{key}.txt"
             for key in ("A", "graph_indicator", "graph_labels",
                         "node_labels", "node_attributes")}
    for key in ("A", "graph_indicator", "graph_labels"):
        if not paths[key].is_file():
            raise DatasetError(f"malformed dataset {name}: missing file {paths[key].name}")

    indicator_lines = _read_lines(paths["graph_indicator"])
    n_nodes = len(indicator_lines)
    label_lines = _read_lines(paths["graph_labels"])
    n_graphs = len(label_lines)

    node_graph = np.zeros(n_nodes, dtype=np.int64)
    for i, line in enumerate(indicator_lines):
        g = _read_int(line, paths["graph_indicator"], i + 1)
        if not (1 <= g <= n_graphs):
            raise DatasetError(
                f"{paths['graph_indicator'].name}:{i + 1}: graph id {g} outside [1, {n_graphs}]")
        node_graph[i] = g - 1

    # local 0-based node ids per graph, in global-id order
    counts = np.zeros(n_graphs, dtype=np.int64)
    local_id = np.zeros(n_nodes, dtype=np.int64)
    for i in range(n_nodes):
        local_id[i] = counts[node_graph[i]]
        counts[node_graph[i]] += 1
    if np.any(counts == 0):
        empty = int(np.argmax(counts == 0)) + 1
        raise DatasetError(f"malformed dataset {name}: graph {empty} has no nodes")

    edge_sets: list[set[tuple[int, int]]] = [set() for _ in range(n_graphs)]
    for i, line in enumerate(_read_lines(paths["A"])):
        parts = line.split(",")
        if len(parts) != 2:
            raise DatasetError(f"{paths['A'].name}:{i + 1}: expected 'i, j' pair")
        a = _read_int(parts[0], paths["A"], i + 1)
        b = _read_int(parts[1], paths["A"], i + 1)
        if not (1 <= a <= n_nodes and 1 <= b <= n_nodes):
            raise DatasetError(
                f"{paths['A'].name}:{i + 1}: node id outside [1, {n_nodes}]")
        ga, gb = node_graph[a - 1], node_graph[b - 1]
        if ga != gb:
            raise DatasetError(
                f"{paths['A'].name}:{i + 1}: edge joins graphs {ga + 1} and {gb + 1}")
        if a == b:
            continue  # TU files should not contain self-loops; drop defensively
        u, v = int(local_id[a - 1]), int(local_id[b - 1])
        edge_sets[ga].add((min(u, v), max(u, v)))

    raw_labels = [_read_int(line, paths["graph_labels"], i + 1)
                  for i, line in enumerate(label_lines)]
    classes = sorted(set(raw_labels))
    label_map = {c: i for i, c in enumerate(classes)}

    # node labels -> dataset-wide one-hot block
    onehot_dim = 0
    node_label_idx = None
    if paths["node_labels"].is_file():
        values = [_read_int(line, paths["node_labels"], i + 1)
                  for i, line in enumerate(_read_lines(paths["node_labels"]))]
        if len(values) != n_nodes:
            raise DatasetError(
                f"{paths['node_labels'].name}: {len(values)} lines for {n_nodes} nodes")
        uniq = sorted(set(values))
        value_idx = {v: i for i, v in enumerate(uniq)}
        node_label_idx = np.array([value_idx[v] for v in values], dtype=np.int64)
        onehot_dim = len(uniq)

    attrs = None
    attr_dim = 0
    if paths["node_attributes"].is_file():
        rows = []
        for i, line in enumerate(_read_lines(paths["node_attributes"])):
            try:
                rows.append([float(x) for x in line.split(",")])
            except ValueError:
                raise DatasetError(
                    f"{paths['node_attributes'].name}:{i + 1}: bad real value") from None
        if len(rows) != n_nodes:
            raise DatasetError(
                f"{paths['node_attributes'].name}: {len(rows)} lines for {n_nodes} nodes")
        attr_dim = len(rows[0]) if rows else 0
        if any(len(r) != attr_dim for r in rows):
            raise DatasetError(f"{paths['node_attributes'].name}: ragged attribute rows")
        attrs = np.asarray(rows, dtype=np.float64)

    d = onehot_dim + attr_dim
    features = np.zeros((n_nodes, d), dtype=np.float64)
    if node_label_idx is not None:
        features[np.arange(n_nodes), node_label_idx] = 1.0
    if attrs is not None:
        features[:, onehot_dim:] = attrs

    graphs = []
    node_order = [np.where(node_graph == g)[0] for g in range(n_graphs)]
    for g in range(n_graphs):
        graphs.append(Graph(
            num_nodes=int(counts[g]),
            edges=sorted(edge_sets[g]),
            features=features[node_order[g]].copy(),
            label=label_map[raw_labels[g]],
        ))

    ds = Dataset(name=name, graphs=graphs, num_classes=len(classes), feature_dim=d)
    ds.validate()
    return ds


# ---------------------------------------------------------------------------
# degree augmentation

def augment_degree_features(dataset: Dataset) -> Dataset:
    """Append ln(1 + deg(v)) / ln(1 + deg_max) per node, deg_max dataset-wide."""
    deg_max = 0
    for g in dataset.graphs:
        if g.edges:
            deg_max = max(deg_max, int(g.degrees().max()))
    if deg_max == 0:
        log.warning("dataset %s has no edges; degree feature is all zeros", dataset.name)
        denom = None
    else:
        denom = math.log1p(deg_max)

    graphs = []
    for g in dataset.graphs:
        deg = g.degrees().astype(np.float64)
        col = np.zeros_like(deg) if denom is None else np.log1p(deg) / denom
        graphs.append(Graph(
            num_nodes=g.num_nodes,
            edges=list(g.edges),
            features=np.concatenate([g.features, col[:, None]], axis=1),
            label=g.label,
        ))
    return Dataset(name=dataset.name, graphs=graphs,
                   num_classes=dataset.num_classes,
                   feature_dim=dataset.feature_dim + 1)


# ---------------------------------------------------------------------------
# folds

def make_folds(dataset: Dataset, k: int = 10, val_fraction: float = 0.1,
               seed: int = 0) -> FoldPlan:
    """Stratified k test folds plus a per-fold inner validation split.

    Deterministic for a fixed seed. Within each class the shuffled
    indices are dealt round-robin; consecutive classes start dealing
    where the previous one stopped, which keeps fold sizes within one
    of each other.
    """
    n = len(dataset.graphs)
    if k > n:
        raise ConfigError(f"cannot make {k} folds from {n} graphs")
    labels = dataset.labels()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, k])))

    folds: list[list[int]] = [[] for _ in range(k)]
    start = 0
    for c in np.unique(labels):
        idx = np.where(labels == c)[0]
        rng.shuffle(idx)
        for j, i in enumerate(idx):
            folds[(start + j) % k].append(int(i))
        start = (start + len(idx)) % k

    inner_val: list[list[int]] = []
    for f in range(k):
        test = set(folds[f])
        train = [i for i in range(n) if i not in test]
        val: list[int] = []
        vr = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, k, f])))
        for c in np.unique(labels):
            pool = np.array([i for i in train if labels[i] == c])
            take = min(len(pool), math.ceil(val_fraction * len(pool)))
            if take > 0:
                val.extend(int(i) for i in vr.choice(pool, size=take, replace=False))
        inner_val.append(sorted(val))

    plan = FoldPlan(seed=seed, folds=[sorted(f) for f in folds], inner_val=inner_val)
    plan.validate(labels)
    return plan


# ---------------------------------------------------------------------------
# line-oriented fixture format (tests only)

def write_fixture(path, dataset: Dataset) -> None:
    """Header 'N C d'; per graph 'n m label', n feature rows, m edge rows."""
    lines = [f"{len(dataset.graphs)} {dataset.num_classes} {dataset.feature_dim}"]
    for g in dataset.graphs:
        lines.append(f"{g.num_nodes} {len(g.edges)} {g.label}")
        for row in g.features:
            lines.append(" ".join(repr(float(x)) for x in row))
        for i, j in g.edges:
            lines.append(f"{i} {j}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_fixture(path, name: str = "fixture") -> Dataset:
    # keep blank lines: zero-dim feature rows are written as empty lines
    lines = Path(path).read_text().splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        if pos >= len(lines):
            raise DatasetError(f"{Path(path).name}: truncated fixture at line {pos + 1}")
        pos += 1
        return lines[pos - 1]

    n_graphs, n_classes, d = (int(x) for x in next_line().split())
    graphs = []
    for _ in range(n_graphs):
        n, m, label = (int(x) for x in next_line().split())
        feat = np.zeros((n, d))
        for r in range(n):
            row = next_line().split()
            feat[r] = [float(x) for x in row] if d else []
        edges = []
        for _ in range(m):
            i, j = (int(x) for x in next_line().split())
            edges.append((i, j))
        graphs.append(Graph(num_nodes=n, edges=edges, features=feat, label=label))
    ds = Dataset(name=name, graphs=graphs, num_classes=n_classes, feature_dim=d)
    ds.validate()
    return ds
