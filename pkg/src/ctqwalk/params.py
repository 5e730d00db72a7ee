"""Parameter initialization and parameter-tree traversal helpers."""

from __future__ import annotations

import dataclasses

import numpy as np

from .tensor import Tensor


def glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> Tensor:
    fan_in = shape[0] if len(shape) > 1 else shape[0]
    fan_out = shape[1] if len(shape) > 1 else shape[0]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


def named_tensors(obj, prefix: str = "") -> list[tuple[str, Tensor]]:
    """Walk dataclasses / lists / dicts and yield (dotted_name, Tensor) pairs
    in a stable field order."""
    out: list[tuple[str, Tensor]] = []
    if isinstance(obj, Tensor):
        out.append((prefix, obj))
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            name = f"{prefix}.{f.name}" if prefix else f.name
            out.extend(named_tensors(getattr(obj, f.name), name))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            out.extend(named_tensors(item, f"{prefix}[{i}]"))
    elif isinstance(obj, dict):
        for key in obj:
            out.extend(named_tensors(obj[key], f"{prefix}.{key}"))
    return out
