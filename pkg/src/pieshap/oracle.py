"""The black-box target as a coalition -> class-distribution oracle.

Three backings: ``table`` (exhaustive entries, n <= 16), ``pairs`` (sparse
entries filled by an external bridge, with a request/response protocol for
unknown coalitions), and ``synthetic`` (a seeded ground-truth network
evaluated on demand).  The scalar game value u(S) is the probability the
oracle assigns to the full-coalition predicted class.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .coalitions import Coalition, all_bits_matrix, coalition_from_text
from .fileformat import (
    MissingEntryError,
    SchemaError,
    f2s,
    mat2s,
    read_record,
    require,
    s2f,
    s2mat,
    s2vec,
    vec2s,
    write_record,
)
from .nets import FrozenHead, apply_head, softmax, uniform_init

DIST_ATOL = 1e-9
TABLE_MAX_CONCEPTS = 16  # 65,536 entries; beyond this use pairs + requests

ORACLE_KINDS = ("table", "pairs", "synthetic")


def check_distribution(probs: np.ndarray, context: str = "distribution") -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise SchemaError(f"{context}: expected a non-empty vector, got shape {p.shape}")
    if np.any(p < 0):
        raise SchemaError(f"{context}: negative probability {p.min():.3g}")
    total = float(p.sum())
    if abs(total - 1.0) > DIST_ATOL:
        raise SchemaError(f"{context}: probabilities sum to {total!r}, not 1")
    return p


@dataclass(frozen=True)
class SyntheticOracleSpec:
    """Parameters of the seeded ground-truth network behind a synthetic case.

    ``nonlinearity`` scales the hidden pre-activation before tanh; 0 switches
    the hidden activation to identity, making the oracle affine in the
    coalition bits (exactly representable by the linear surrogate family).
    """

    n_concepts: int
    n_classes: int
    feature_dim: int
    hidden_width: int = 16
    nonlinearity: float = 1.0

    def __post_init__(self) -> None:
        if self.n_concepts < 1 or self.n_classes < 2:
            raise ValueError(
                f"need n_concepts >= 1 and n_classes >= 2, got "
                f"({self.n_concepts}, {self.n_classes})"
            )
        if self.feature_dim < 1 or self.hidden_width < 1:
            raise ValueError(
                f"need feature_dim >= 1 and hidden_width >= 1, got "
                f"({self.feature_dim}, {self.hidden_width})"
            )
        if self.nonlinearity < 0:
            raise ValueError(f"nonlinearity strength must be >= 0, got {self.nonlinearity}")


@dataclass(frozen=True)
class GeneratorNet:
    """Ground-truth 2-layer feature network of a synthetic case."""

    W1: np.ndarray  # (hidden, n)
    b1: np.ndarray
    W2: np.ndarray  # (d, hidden)
    b2: np.ndarray
    strength: float

    def features(self, bits: np.ndarray) -> np.ndarray:
        z = bits @ self.W1.T + self.b1
        a = z if self.strength == 0 else np.tanh(self.strength * z)
        return a @ self.W2.T + self.b2


@dataclass
class OracleCase:
    """One explainable input: frozen head, class count, and a queryable oracle."""

    case_id: str
    n_concepts: int
    n_classes: int
    feature_dim: int
    predicted_class: int
    head: FrozenHead
    oracle_kind: str
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    synth_spec: Optional[SyntheticOracleSpec] = None
    generator: Optional[GeneratorNet] = None

    def __post_init__(self) -> None:
        validate_case(self)

    def full_text(self) -> str:
        return "1" * self.n_concepts


def validate_case(case: OracleCase) -> None:
    if case.oracle_kind not in ORACLE_KINDS:
        raise SchemaError(f"field 'oracle_kind': unknown kind {case.oracle_kind!r}")
    if case.n_concepts < 1:
        raise SchemaError(f"field 'n_concepts': must be >= 1, got {case.n_concepts}")
    if case.n_classes < 2:
        raise SchemaError(f"field 'n_classes': must be >= 2, got {case.n_classes}")
    if case.head.n_classes != case.n_classes or case.head.feature_dim != case.feature_dim:
        raise SchemaError(
            f"field 'head': shape ({case.head.n_classes}, {case.head.feature_dim}) "
            f"inconsistent with (n_classes={case.n_classes}, feature_dim={case.feature_dim})"
        )
    if not 0 <= case.predicted_class < case.n_classes:
        raise SchemaError(f"field 'predicted_class': {case.predicted_class} out of range")
    for text in list(case.entries):
        coalition_from_text(text, case.n_concepts)
        case.entries[text] = check_distribution(case.entries[text], f"entry {text!r}")
    if case.oracle_kind == "table":
        if case.n_concepts > TABLE_MAX_CONCEPTS:
            raise SchemaError(
                f"field 'oracle_kind': table kind is capped at n <= {TABLE_MAX_CONCEPTS}"
            )
        expected = 1 << case.n_concepts
        if len(case.entries) != expected:
            raise SchemaError(
                f"field 'entries': table kind needs exactly {expected} entries, "
                f"got {len(case.entries)}"
            )
    if case.oracle_kind == "synthetic":
        if case.generator is None:
            raise SchemaError("field 'generator': required for synthetic kind")
    else:
        full = case.full_text()
        if full not in case.entries:
            raise SchemaError(f"field 'entries': full coalition {full!r} missing")
        full_probs = case.entries[full]
        if int(np.argmax(full_probs)) != case.predicted_class:
            raise SchemaError(
                f"field 'predicted_class': {case.predicted_class} is not the argmax "
                f"of the full-coalition distribution (argmax {int(np.argmax(full_probs))})"
            )


def query(case: OracleCase, s: Coalition) -> np.ndarray:
    """Class distribution of the target on coalition ``s``."""
    if s.n != case.n_concepts:
        raise ValueError(f"coalition length {s.n} != case n_concepts {case.n_concepts}")
    if case.oracle_kind == "synthetic":
        logits = apply_head(case.head, case.generator.features(s.as_bits()))
        return softmax(logits)
    text = s.to_text()
    probs = case.entries.get(text)
    if probs is None:
        if case.oracle_kind == "table":
            raise SchemaError(f"table case {case.case_id!r} lost entry {text!r}")
        raise MissingEntryError([text], case.case_id)
    return probs


def scalar_utility(case: OracleCase, s: Coalition) -> float:
    """u(S): probability of the full-coalition predicted class under coalition S."""
    return float(query(case, s)[case.predicted_class])


@dataclass(frozen=True)
class GameView:
    """A scalar coalition game u(S), oracle- or surrogate-backed."""

    u: Callable[[Coalition], float]
    n: int
    backing: str  # "direct-oracle" | "surrogate"


def oracle_game(case: OracleCase) -> GameView:
    return GameView(u=lambda s: scalar_utility(case, s), n=case.n_concepts, backing="direct-oracle")


def synth_case(
    spec: SyntheticOracleSpec, seed: int, case_id: Optional[str] = None
) -> OracleCase:
    """Deterministic synthetic case: ground-truth 2-layer network + frozen head.

    The generator lives in the same family as the nonlinear surrogate (tanh
    hidden layer when strength > 0, identity when 0), so representability by
    each surrogate variant is controlled by ``spec.nonlinearity`` alone.
    Emits table kind when n <= 16, otherwise an on-demand synthetic oracle.
    """
    n, d, m = spec.n_concepts, spec.feature_dim, spec.hidden_width
    rng = np.random.default_rng(seed)
    head = FrozenHead(
        W=uniform_init(rng, (spec.n_classes, d), d),
        b=uniform_init(rng, (spec.n_classes,), d),
    )
    gen = GeneratorNet(
        W1=uniform_init(rng, (m, n), n),
        b1=uniform_init(rng, (m,), n),
        W2=uniform_init(rng, (d, m), m),
        b2=uniform_init(rng, (d,), m),
        strength=float(spec.nonlinearity),
    )
    full_bits = np.ones(n, dtype=np.float64)
    full_dist = softmax(apply_head(head, gen.features(full_bits)))
    predicted = int(np.argmax(full_dist))
    if case_id is None:
        case_id = f"synth-n{n}-c{spec.n_classes}-d{d}-seed{seed}"

    if n <= TABLE_MAX_CONCEPTS:
        bits = all_bits_matrix(n)
        dists = softmax(apply_head(head, gen.features(bits)))
        entries = {
            Coalition(mask, n).to_text(): dists[mask] for mask in range(1 << n)
        }
        return OracleCase(
            case_id=case_id,
            n_concepts=n,
            n_classes=spec.n_classes,
            feature_dim=d,
            predicted_class=predicted,
            head=head,
            oracle_kind="table",
            entries=entries,
            synth_spec=spec,
            generator=gen,
        )
    return OracleCase(
        case_id=case_id,
        n_concepts=n,
        n_classes=spec.n_classes,
        feature_dim=d,
        predicted_class=predicted,
        head=head,
        oracle_kind="synthetic",
        entries={},
        synth_spec=spec,
        generator=gen,
    )


def _entries_payload(entries: dict[str, np.ndarray], n: int) -> list[dict]:
    ordered = sorted(entries, key=lambda t: coalition_from_text(t, n).mask)
    return [{"coalition": t, "probs": vec2s(entries[t])} for t in ordered]


def save_case(case: OracleCase, path: str | Path) -> Path:
    payload = {
        "case_id": case.case_id,
        "n_concepts": case.n_concepts,
        "n_classes": case.n_classes,
        "feature_dim": case.feature_dim,
        "predicted_class": case.predicted_class,
        "head": {"W": mat2s(case.head.W), "b": vec2s(case.head.b)},
        "oracle_kind": case.oracle_kind,
        "entries": _entries_payload(case.entries, case.n_concepts),
    }
    if case.synth_spec is not None:
        payload["synth_spec"] = {
            "n_concepts": case.synth_spec.n_concepts,
            "n_classes": case.synth_spec.n_classes,
            "feature_dim": case.synth_spec.feature_dim,
            "hidden_width": case.synth_spec.hidden_width,
            "nonlinearity": f2s(case.synth_spec.nonlinearity),
        }
    if case.generator is not None:
        payload["generator"] = {
            "W1": mat2s(case.generator.W1),
            "b1": vec2s(case.generator.b1),
            "W2": mat2s(case.generator.W2),
            "b2": vec2s(case.generator.b2),
            "strength": f2s(case.generator.strength),
        }
    return write_record(path, "case", payload)


def load_case(path: str | Path) -> OracleCase:
    payload = read_record(path, "case")
    n = require(payload, "n_concepts", int)
    n_classes = require(payload, "n_classes", int)
    d = require(payload, "feature_dim", int)
    head_p = require(payload, "head", dict)
    head = FrozenHead(
        W=s2mat(require(head_p, "W", list), "head.W", (n_classes, d)),
        b=s2vec(require(head_p, "b", list), "head.b", n_classes),
    )
    entries: dict[str, np.ndarray] = {}
    for idx, item in enumerate(require(payload, "entries", list)):
        if not isinstance(item, dict):
            raise SchemaError(f"field 'entries[{idx}]': expected an object")
        text = require(item, "coalition", str)
        try:
            coalition_from_text(text, n)
        except ValueError as e:
            raise SchemaError(f"field 'entries[{idx}].coalition': {e}") from e
        if text in entries:
            raise SchemaError(f"field 'entries[{idx}]': duplicate coalition {text!r}")
        entries[text] = s2vec(require(item, "probs", list), f"entries[{text}].probs", n_classes)

    spec = None
    if "synth_spec" in payload:
        sp = payload["synth_spec"]
        spec = SyntheticOracleSpec(
            n_concepts=require(sp, "n_concepts", int),
            n_classes=require(sp, "n_classes", int),
            feature_dim=require(sp, "feature_dim", int),
            hidden_width=require(sp, "hidden_width", int),
            nonlinearity=s2f(require(sp, "nonlinearity"), "synth_spec.nonlinearity"),
        )
    gen = None
    if "generator" in payload:
        gp = payload["generator"]
        W1 = s2mat(require(gp, "W1", list), "generator.W1")
        gen = GeneratorNet(
            W1=W1,
            b1=s2vec(require(gp, "b1", list), "generator.b1", W1.shape[0]),
            W2=s2mat(require(gp, "W2", list), "generator.W2", (d, W1.shape[0])),
            b2=s2vec(require(gp, "b2", list), "generator.b2", d),
            strength=s2f(require(gp, "strength"), "generator.strength"),
        )
    try:
        return OracleCase(
            case_id=require(payload, "case_id", str),
            n_concepts=n,
            n_classes=n_classes,
            feature_dim=d,
            predicted_class=require(payload, "predicted_class", int),
            head=head,
            oracle_kind=require(payload, "oracle_kind", str),
            entries=entries,
            synth_spec=spec,
            generator=gen,
        )
    except ValueError as e:
        raise SchemaError(str(e)) from e


def write_request(case_id: str, coalitions: list[str], path: str | Path) -> Path:
    """Emit a request file for coalitions a pairs oracle could not answer."""
    return write_record(path, "request", {"case_id": case_id, "coalitions": sorted(set(coalitions))})


def read_request(path: str | Path) -> tuple[str, list[str]]:
    payload = read_record(path, "request")
    return require(payload, "case_id", str), require(payload, "coalitions", list)


def write_response(case_id: str, entries: dict[str, np.ndarray], n: int, path: str | Path) -> Path:
    return write_record(
        path, "response", {"case_id": case_id, "entries": _entries_payload(entries, n)}
    )


def merge_response(case: OracleCase, path: str | Path) -> OracleCase:
    """Fold a response file into a pairs-kind case; duplicates deduplicated."""
    payload = read_record(path, "response")
    rid = require(payload, "case_id", str)
    if rid != case.case_id:
        raise SchemaError(f"field 'case_id': response for {rid!r}, case is {case.case_id!r}")
    merged = dict(case.entries)
    for idx, item in enumerate(require(payload, "entries", list)):
        text = require(item, "coalition", str)
        probs = s2vec(require(item, "probs", list), f"entries[{text}].probs", case.n_classes)
        merged[text] = check_distribution(probs, f"response entry {text!r}")
    return OracleCase(
        case_id=case.case_id,
        n_concepts=case.n_concepts,
        n_classes=case.n_classes,
        feature_dim=case.feature_dim,
        predicted_class=case.predicted_class,
        head=case.head,
        oracle_kind="pairs" if case.oracle_kind == "pairs" else case.oracle_kind,
        entries=merged,
        synth_spec=case.synth_spec,
        generator=case.generator,
    )
