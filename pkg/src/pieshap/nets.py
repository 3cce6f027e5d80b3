"""Shared numeric kernels: stable softmax, activations, the frozen classifier head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fileformat import NumericalError

LOG_CLAMP = 1e-12


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax along the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericalError("non-finite logits in softmax")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# name -> (f, derivative as a function of (pre-activation z, output a))
ACTIVATIONS = {
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "sigmoid": (_sigmoid, lambda z, a: a * (1.0 - a)),
    "relu": (_relu, lambda z, a: (z > 0).astype(np.float64)),
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
}


def activation_pair(name: str):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}")


@dataclass(frozen=True)
class FrozenHead:
    """The target classifier's final fully-connected layer; never trained."""

    W: np.ndarray  # (n_classes, d)
    b: np.ndarray  # (n_classes,)

    def __post_init__(self) -> None:
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
            raise ValueError(f"inconsistent head shapes W{W.shape} b{b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise NumericalError("non-finite weights in frozen head")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        self.W.setflags(write=False)
        self.b.setflags(write=False)

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.W.shape[1]


def apply_head(head: FrozenHead, features: np.ndarray) -> np.ndarray:
    """Logits for a feature vector (d,) or batch (batch, d)."""
    f = np.asarray(features, dtype=np.float64)
    if f.shape[-1] != head.feature_dim:
        raise ValueError(f"feature dim {f.shape[-1]} != head dim {head.feature_dim}")
    return f @ head.W.T + head.b


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Symmetric uniform init in +-1/sqrt(fan_in)."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)
