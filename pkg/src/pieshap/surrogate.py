"""Per-input surrogate f'(b) = f_FC(h(b)): forward, analytic gradients, Adam training.

``h`` maps coalition bits to the frozen head's feature space.  Two variants:
a single affine layer (the original scheme) and a 2-layer network with a
pointwise activation (tanh, sigmoid, relu, or identity).  Training distills
the oracle's soft class distributions with cross-entropy; the head is never
updated.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .coalitions import (
    Coalition,
    bits_matrix,
    empty_coalition,
    enumerate_coalitions,
    full_coalition,
    sample_coalition,
)
from .fileformat import (
    MissingEntryError,
    NumericalError,
    SchemaError,
    f2s,
    mat2s,
    read_record,
    require,
    s2mat,
    s2vec,
    vec2s,
    write_record,
)
from .nets import LOG_CLAMP, FrozenHead, activation_pair, apply_head, softmax, uniform_init
from .oracle import GameView, OracleCase, query

VARIANTS = ("linear", "tanh", "sigmoid", "relu", "identity")


class DivergenceError(NumericalError):
    """Training loss went non-finite; carries the epoch index."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")


@dataclass
class LinearSurrogate:
    W: np.ndarray  # (d, n)
    b: np.ndarray  # (d,)
    variant: str = "linear"

    def check(self) -> None:
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"inconsistent linear shapes W{self.W.shape} b{self.b.shape}")
        if not all(np.all(np.isfinite(p)) for _, p in self.params()):
            raise NumericalError("non-finite surrogate weights")

    @property
    def n(self) -> int:
        return self.W.shape[1]

    @property
    def d(self) -> int:
        return self.W.shape[0]

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def features(self, bits: np.ndarray) -> np.ndarray:
        return bits @ self.W.T + self.b


@dataclass
class NonlinearSurrogate:
    W1: np.ndarray  # (m, n)
    b1: np.ndarray
    W2: np.ndarray  # (d, m)
    b2: np.ndarray
    activation: str = "tanh"
    variant: str = "nonlinear"

    def check(self) -> None:
        m, n = self.W1.shape
        d = self.W2.shape[0]
        if self.b1.shape != (m,) or self.W2.shape != (d, m) or self.b2.shape != (d,):
            raise ValueError(
                f"inconsistent nonlinear shapes W1{self.W1.shape} b1{self.b1.shape} "
                f"W2{self.W2.shape} b2{self.b2.shape}"
            )
        activation_pair(self.activation)
        if not all(np.all(np.isfinite(p)) for _, p in self.params()):
            raise NumericalError("non-finite surrogate weights")

    @property
    def n(self) -> int:
        return self.W1.shape[1]

    @property
    def m(self) -> int:
        return self.W1.shape[0]

    @property
    def d(self) -> int:
        return self.W2.shape[0]

    def params(self):
        return [("W1", self.W1), ("b1", self.b1), ("W2", self.W2), ("b2", self.b2)]

    def features(self, bits: np.ndarray) -> np.ndarray:
        act, _ = activation_pair(self.activation)
        return act(bits @ self.W1.T + self.b1) @ self.W2.T + self.b2


SurrogateWeights = Union[LinearSurrogate, NonlinearSurrogate]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    n_train_samples: Optional[int] = None  # default: 3/4 of min(2^n, 1024)
    n_holdout_samples: Optional[int] = None  # default: 1/4 of min(2^n, 1024)
    hidden_width: Optional[int] = None  # default: feature_dim
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class TrainReport:
    final_train_ce: float
    final_holdout_kl: float
    loss_curve: list[float]
    pie_time: float  # wall-clock seconds around the optimization loop only
    n_train: int
    n_holdout: int


def init_surrogate(
    variant: str, n: int, d: int, m: Optional[int] = None, seed: int = 0
) -> SurrogateWeights:
    """Seeded symmetric-uniform initialization; ``variant`` is 'linear' or an
    activation name for the 2-layer form."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    rng = np.random.default_rng(seed)
    if variant == "linear":
        w = LinearSurrogate(W=uniform_init(rng, (d, n), n), b=uniform_init(rng, (d,), n))
    else:
        m = d if m is None else m
        w = NonlinearSurrogate(
            W1=uniform_init(rng, (m, n), n),
            b1=uniform_init(rng, (m,), n),
            W2=uniform_init(rng, (d, m), m),
            b2=uniform_init(rng, (d,), m),
            activation=variant,
        )
    w.check()
    return w


def forward(
    w: SurrogateWeights, head: FrozenHead, b: Coalition
) -> tuple[np.ndarray, np.ndarray]:
    """(logits, class distribution) of the surrogate on one coalition."""
    if b.n != w.n:
        raise ValueError(f"coalition length {b.n} != surrogate input width {w.n}")
    logits = apply_head(head, w.features(b.as_bits()))
    return logits, softmax(logits)


def forward_batch(w: SurrogateWeights, head: FrozenHead, bits: np.ndarray) -> np.ndarray:
    """Class distributions for a (batch, n) presence matrix."""
    return softmax(apply_head(head, w.features(bits)))


def surrogate_game(w: SurrogateWeights, head: FrozenHead, predicted_class: int) -> GameView:
    """The surrogate as a scalar coalition game (the PIE stand-in for u)."""
    return GameView(
        u=lambda s: float(forward(w, head, s)[1][predicted_class]),
        n=w.n,
        backing="surrogate",
    )


def cross_entropy(pred: np.ndarray, target: np.ndarray) -> float:
    """Soft-label cross entropy in nats, log clamped at 1e-12."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    return float(-(t * np.log(np.maximum(p, LOG_CLAMP))).sum())


def kl_divergence(target: np.ndarray, pred: np.ndarray) -> float:
    """KL(target || pred) in nats, 0 log 0 treated as 0."""
    t = np.asarray(target, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    nz = t > 0
    return float((t[nz] * (np.log(t[nz]) - np.log(np.maximum(p[nz], LOG_CLAMP)))).sum())


def gradients(
    w: SurrogateWeights,
    head: FrozenHead,
    bits: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and its analytic gradient.

    Backprop through softmax-CE (dlogits = dist - target), the frozen head
    (transpose product only; the head itself receives no gradient), the
    activation, and the trainable layers.
    """
    if bits.ndim != 2 or bits.shape[0] == 0:
        raise ValueError(f"expected a non-empty (batch, n) matrix, got shape {bits.shape}")
    batch = bits.shape[0]
    if w.variant == "linear":
        feats = bits @ w.W.T + w.b
        logits = apply_head(head, feats)
        dists = softmax(logits)
        loss = float(
            -(targets * np.log(np.maximum(dists, LOG_CLAMP))).sum() / batch
        )
        dlogits = (dists - targets) / batch
        dfeats = dlogits @ head.W
        grads = {"W": dfeats.T @ bits, "b": dfeats.sum(axis=0)}
    else:
        act, dact = activation_pair(w.activation)
        z = bits @ w.W1.T + w.b1
        a = act(z)
        feats = a @ w.W2.T + w.b2
        logits = apply_head(head, feats)
        dists = softmax(logits)
        loss = float(
            -(targets * np.log(np.maximum(dists, LOG_CLAMP))).sum() / batch
        )
        dlogits = (dists - targets) / batch
        dfeats = dlogits @ head.W
        da = dfeats @ w.W2
        dz = da * dact(z, a)
        grads = {
            "W1": dz.T @ bits,
            "b1": dz.sum(axis=0),
            "W2": dfeats.T @ a,
            "b2": dfeats.sum(axis=0),
        }
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in field {name!r}")
    if not np.isfinite(loss):
        raise NumericalError("non-finite loss")
    return loss, grads


def _resolve_split_sizes(n: int, cfg: TrainConfig) -> tuple[int, int]:
    total_default = min(1 << n, 1024)
    hold_default = max(total_default // 4, 1)
    train_default = max(total_default - hold_default, 2)
    n_train = cfg.n_train_samples if cfg.n_train_samples is not None else train_default
    n_hold = cfg.n_holdout_samples if cfg.n_holdout_samples is not None else hold_default
    if n_train < 2:
        raise ValueError(f"need at least 2 training coalitions, got {n_train}")
    return n_train, n_hold


def sample_training_split(
    n: int, cfg: TrainConfig, rng: np.random.Generator
) -> tuple[list[Coalition], list[Coalition]]:
    """Coalition sample for distillation: size drawn Uniform{0..n}, then a
    uniform coalition of that size; the empty and full coalitions are always
    in the training half.  Train and holdout are disjoint whenever 2^n admits
    enough distinct coalitions; for tiny n the whole lattice is used.
    """
    n_train, n_hold = _resolve_split_sizes(n, cfg)
    want = n_train + n_hold
    if (1 << n) <= want:
        rest = [c for c in enumerate_coalitions(n) if 0 < c.mask < (1 << n) - 1]
        order = rng.permutation(len(rest))
        shuffled = [rest[i] for i in order]
        pool = [empty_coalition(n), full_coalition(n)] + shuffled
        train = pool[: min(n_train, len(pool))]
        hold = pool[len(train) : len(train) + n_hold]
        if not hold:  # lattice exhausted; reuse training coalitions
            hold = train[: max(n_hold, 1)]
        return train, hold
    seen = {0, (1 << n) - 1}
    drawn: list[Coalition] = []
    while len(drawn) < want - 2:
        size = int(rng.integers(0, n + 1))
        c = sample_coalition(rng, n, size)
        if c.mask not in seen:
            seen.add(c.mask)
            drawn.append(c)
    train = [empty_coalition(n), full_coalition(n)] + drawn[: n_train - 2]
    hold = drawn[n_train - 2 :]
    return train, hold


def _oracle_targets(case: OracleCase, coalitions: Sequence[Coalition]) -> np.ndarray:
    targets = np.empty((len(coalitions), case.n_classes), dtype=np.float64)
    missing: list[str] = []
    for i, c in enumerate(coalitions):
        try:
            targets[i] = query(case, c)
        except MissingEntryError as e:
            missing.extend(e.coalitions)
    if missing:
        raise MissingEntryError(missing, case.case_id)
    return targets


def train(
    case: OracleCase, variant: str, cfg: TrainConfig = TrainConfig()
) -> tuple[SurrogateWeights, TrainReport]:
    """Adam distillation of the oracle onto the surrogate.

    Deterministic per ``cfg.seed``: the same seed drives the coalition
    sample, the weight init, and the per-epoch shuffles.  Raises
    MissingEntryError (with the full wanted-coalition list) if a pairs
    oracle cannot answer the sample, and DivergenceError on non-finite loss.
    """
    n, d = case.n_concepts, case.feature_dim
    rng = np.random.default_rng(cfg.seed)
    train_cs, hold_cs = sample_training_split(n, cfg, rng)
    wanted = train_cs + hold_cs
    targets_all = _oracle_targets(case, wanted)
    train_bits = bits_matrix(train_cs)
    hold_bits = bits_matrix(hold_cs)
    train_targets = targets_all[: len(train_cs)]
    hold_targets = targets_all[len(train_cs) :]

    w = init_surrogate(variant, n, d, m=cfg.hidden_width, seed=int(rng.integers(2**63)))
    head_before = (case.head.W.copy(), case.head.b.copy())

    moments = {
        name: (np.zeros_like(p), np.zeros_like(p)) for name, p in w.params()
    }
    step = 0
    loss_curve: list[float] = []
    n_train = train_bits.shape[0]

    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            try:
                loss, grads = gradients(w, case.head, train_bits[idx], train_targets[idx])
            except NumericalError as e:
                raise DivergenceError(epoch) from e
            epoch_loss += loss * len(idx)
            step += 1
            for name, p in w.params():
                m1, m2 = moments[name]
                g = grads[name]
                m1 *= cfg.beta1
                m1 += (1 - cfg.beta1) * g
                m2 *= cfg.beta2
                m2 += (1 - cfg.beta2) * g * g
                mhat = m1 / (1 - cfg.beta1**step)
                vhat = m2 / (1 - cfg.beta2**step)
                p -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)
        mean_loss = epoch_loss / n_train
        if not np.isfinite(mean_loss):
            raise DivergenceError(epoch)
        loss_curve.append(mean_loss)
    pie_time = time.perf_counter() - t0

    assert np.array_equal(case.head.W, head_before[0]) and np.array_equal(
        case.head.b, head_before[1]
    ), "frozen head was modified during training"

    train_pred = forward_batch(w, case.head, train_bits)
    final_ce = float(
        np.mean(
            [cross_entropy(train_pred[i], train_targets[i]) for i in range(n_train)]
        )
    )
    hold_pred = forward_batch(w, case.head, hold_bits)
    final_kl = float(
        np.mean(
            [kl_divergence(hold_targets[i], hold_pred[i]) for i in range(len(hold_cs))]
        )
    )
    report = TrainReport(
        final_train_ce=final_ce,
        final_holdout_kl=final_kl,
        loss_curve=loss_curve,
        pie_time=pie_time,
        n_train=n_train,
        n_holdout=len(hold_cs),
    )
    return w, report


def save_surrogate(
    w: SurrogateWeights, path: str | Path, cfg: Optional[TrainConfig] = None
) -> Path:
    payload: dict = {"variant": w.variant, "n": w.n, "d": w.d}
    if w.variant == "linear":
        payload["weights"] = {"W": mat2s(w.W), "b": vec2s(w.b)}
    else:
        payload["m"] = w.m
        payload["activation"] = w.activation
        payload["weights"] = {
            "W1": mat2s(w.W1),
            "b1": vec2s(w.b1),
            "W2": mat2s(w.W2),
            "b2": vec2s(w.b2),
        }
    if cfg is not None:
        payload["train_config"] = {
            "epochs": cfg.epochs,
            "learning_rate": f2s(cfg.learning_rate),
            "beta1": f2s(cfg.beta1),
            "beta2": f2s(cfg.beta2),
            "eps": f2s(cfg.eps),
            "batch_size": cfg.batch_size,
            "n_train_samples": cfg.n_train_samples,
            "n_holdout_samples": cfg.n_holdout_samples,
            "hidden_width": cfg.hidden_width,
            "seed": cfg.seed,
        }
    return write_record(path, "surrogate", payload)


def load_surrogate(path: str | Path) -> SurrogateWeights:
    payload = read_record(path, "surrogate")
    variant = require(payload, "variant", str)
    n = require(payload, "n", int)
    d = require(payload, "d", int)
    weights = require(payload, "weights", dict)
    if variant == "linear":
        w: SurrogateWeights = LinearSurrogate(
            W=s2mat(require(weights, "W", list), "weights.W", (d, n)),
            b=s2vec(require(weights, "b", list), "weights.b", d),
        )
    elif variant == "nonlinear":
        m = require(payload, "m", int)
        activation = require(payload, "activation", str)
        w = NonlinearSurrogate(
            W1=s2mat(require(weights, "W1", list), "weights.W1", (m, n)),
            b1=s2vec(require(weights, "b1", list), "weights.b1", m),
            W2=s2mat(require(weights, "W2", list), "weights.W2", (d, m)),
            b2=s2vec(require(weights, "b2", list), "weights.b2", d),
            activation=activation,
        )
    else:
        raise SchemaError(f"field 'variant': unknown variant {variant!r}")
    try:
        w.check()
    except (ValueError, NumericalError) as e:
        raise SchemaError(str(e)) from e
    return w
