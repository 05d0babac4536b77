from __future__ import annotations

from typing import Callable, Iterator

import numpy as np


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    elif len(shape) == 2:
        fan_in, fan_out = shape
    else:
        # temporal kernels (K, C_in, C_out)
        receptive = int(np.prod(shape[:-2]))
        fan_in, fan_out = receptive * shape[-2], receptive * shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ParamStore:
    """Named parameters with seeded, order-deterministic initialization."""

    def __init__(self, seed: int = 0, dtype=np.float64):
        self.seed = int(seed)
        self.dtype = dtype
        self.rng = np.random.default_rng(self.seed)
        self._values: dict[str, np.ndarray] = {}
        self.frozen: set[str] = set()

    def add(self, name: str, shape, init: str | float | Callable = "xavier") -> str:
        if name in self._values:
            raise KeyError(f"parameter {name!r} already exists")
        shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in shape):
            raise ValueError(f"parameter {name!r}: every dim must be >= 1, got {shape}")
        if init == "xavier":
            value = xavier_uniform(self.rng, shape)
        elif init == "zeros":
            value = np.zeros(shape)
        elif init == "normal":
            value = self.rng.normal(0.0, 1.0, size=shape)
        elif callable(init):
            value = np.asarray(init(self.rng, shape))
        else:
            value = np.full(shape, float(init))
        self._values[name] = np.asarray(value, dtype=self.dtype)
        return name

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if name not in self._values:
            raise KeyError(f"unknown parameter {name!r}")
        value = np.asarray(value, dtype=self.dtype)
        if value.shape != self._values[name].shape:
            raise ValueError(f"parameter {name!r}: shape {value.shape} != {self._values[name].shape}")
        self._values[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def items(self):
        return self._values.items()

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._values if n.startswith(prefix)]

    def size(self) -> int:
        return sum(v.size for v in self._values.values())

    def freeze(self, prefix: str = "") -> None:
        self.frozen.update(self.names(prefix))

    def trainable(self) -> list[str]:
        return [n for n in self._values if n not in self.frozen]

    def copy(self) -> "ParamStore":
        other = ParamStore(self.seed, self.dtype)
        other._values = {k: v.copy() for k, v in self._values.items()}
        other.frozen = set(self.frozen)
        other.rng = np.random.default_rng(self.seed)
        return other

    def state(self) -> dict[str, np.ndarray]:
        return dict(self._values)

    def load(self, values: dict[str, np.ndarray], strict: bool = True) -> None:
        if strict:
            missing = set(self._values) - set(values)
            extra = set(values) - set(self._values)
            if missing or extra:
                raise KeyError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, v in values.items():
            if k in self._values:
                self[k] = v
