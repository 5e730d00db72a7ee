import numpy as np
import pytest

from ctqwalk.data import Dataset, Graph, augment_degree_features
from ctqwalk.tensor import reset_tape


@pytest.fixture(autouse=True)
def fresh_tape():
    reset_tape()
    yield
    reset_tape()


def numeric_grad(f, arr: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f w.r.t. every entry of arr
    (perturbs in place, restores afterwards)."""
    flat = arr.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f()
        flat[i] = orig - eps
        down = f()
        flat[i] = orig
        out[i] = (up - down) / (2.0 * eps)
    return out.reshape(arr.shape)


def assert_grads_close(ad: np.ndarray, fd: np.ndarray, rel_tol: float = 1e-4,
                       abs_floor: float = 1e-8, min_pass: float = 1.0):
    """Coordinatewise FD agreement; min_pass < 1 tolerates kink points."""
    ad = np.asarray(ad).reshape(-1)
    fd = np.asarray(fd).reshape(-1)
    diff = np.abs(ad - fd)
    denom = np.maximum(np.abs(ad), np.abs(fd))
    ok = (diff <= abs_floor) | (diff <= rel_tol * denom)
    frac = ok.mean() if ok.size else 1.0
    assert frac >= min_pass, (
        f"gradient mismatch: {int((~ok).sum())}/{ok.size} coordinates failed, "
        f"worst rel {np.max(diff / np.maximum(denom, 1e-300)):.3e}")


def path_graph(n: int, feature_dim: int = 0, label: int = 0) -> Graph:
    return Graph(num_nodes=n, edges=[(i, i + 1) for i in range(n - 1)],
                 features=np.zeros((n, feature_dim)), label=label)


def cycle_graph(n: int, feature_dim: int = 0, label: int = 1) -> Graph:
    edges = [(i, i + 1) for i in range(n - 1)] + [(0, n - 1)]
    return Graph(num_nodes=n, edges=edges, features=np.zeros((n, feature_dim)),
                 label=label)


def triangle_graph(feature_dim: int = 0, label: int = 0) -> Graph:
    return Graph(num_nodes=3, edges=[(0, 1), (0, 2), (1, 2)],
                 features=np.zeros((3, feature_dim)), label=label)


@pytest.fixture
def synthetic_dataset() -> Dataset:
    """20 graphs, two classes (paths vs cycles), degree feature appended."""
    rng = np.random.default_rng(11)
    graphs = []
    for i in range(20):
        n = int(rng.integers(4, 8))
        graphs.append(path_graph(n, 0, 0) if i % 2 == 0 else cycle_graph(n, 0, 1))
    ds = Dataset(name="paths-vs-cycles", graphs=graphs, num_classes=2, feature_dim=0)
    return augment_degree_features(ds)


def write_tu_files(root, name, a_rows, indicator, graph_labels,
                   node_labels=None, node_attributes=None):
    d = root / name
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{name}_A.txt").write_text("".join(f"{i}, {j}\n" for i, j in a_rows))
    (d / f"{name}_graph_indicator.txt").write_text("".join(f"{g}\n" for g in indicator))
    (d / f"{name}_graph_labels.txt").write_text("".join(f"{l}\n" for l in graph_labels))
    if node_labels is not None:
        (d / f"{name}_node_labels.txt").write_text("".join(f"{v}\n" for v in node_labels))
    if node_attributes is not None:
        (d / f"{name}_node_attributes.txt").write_text(
            "".join(", ".join(str(x) for x in row) + "\n" for row in node_attributes))
    return d
