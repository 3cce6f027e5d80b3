"""Binary concept coalitions: representation, enumeration, uniform-size sampling.

A coalition over n concepts is stored as an integer bitmask where bit i
(least significant first) marks concept i as present.  The canonical text
encoding is a '0'/'1' string with index 0 leftmost, so ``"101"`` means
concepts {0, 2} are present out of 3.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

MAX_CONCEPTS = 64
MAX_EXACT_ENUMERATION = 20


@dataclass(frozen=True)
class ConceptSet:
    """The indexed concept universe for one explainable input.

    ``mask_meta`` holds optional per-concept descriptors (mask file path,
    pixel area, ...) and is never consulted by any numeric code.
    """

    n: int
    mask_meta: Optional[tuple] = None

    def __post_init__(self) -> None:
        if not 1 <= self.n <= MAX_CONCEPTS:
            raise ValueError(f"concept count must be in [1, {MAX_CONCEPTS}], got {self.n}")
        if self.mask_meta is not None and len(self.mask_meta) != self.n:
            raise ValueError(
                f"mask_meta has {len(self.mask_meta)} entries for {self.n} concepts"
            )

    @property
    def concept_ids(self) -> range:
        return range(self.n)


@dataclass(frozen=True)
class Coalition:
    """An immutable subset of concepts 0..n-1, bit i of ``mask`` set iff present."""

    mask: int
    n: int

    def __post_init__(self) -> None:
        if self.n < 0 or self.n > MAX_CONCEPTS:
            raise ValueError(f"coalition length must be in [0, {MAX_CONCEPTS}], got {self.n}")
        if self.mask < 0 or self.mask >> self.n:
            raise ValueError(f"mask {self.mask:#x} does not fit in {self.n} bits")

    def contains(self, i: int) -> bool:
        _check_index(i, self.n)
        return bool((self.mask >> i) & 1)

    @property
    def size(self) -> int:
        return self.mask.bit_count()

    def to_text(self) -> str:
        return "".join("1" if (self.mask >> i) & 1 else "0" for i in range(self.n))

    def complement(self) -> "Coalition":
        return Coalition(self.mask ^ ((1 << self.n) - 1), self.n)

    def as_bits(self) -> np.ndarray:
        """Presence flags as a float64 vector, index i at position i."""
        return np.array([(self.mask >> i) & 1 for i in range(self.n)], dtype=np.float64)

    def members(self) -> list[int]:
        return [i for i in range(self.n) if (self.mask >> i) & 1]


def _check_index(i: int, n: int) -> None:
    if not 0 <= i < n:
        raise IndexError(f"concept index {i} out of range for n={n}")


def empty_coalition(n: int) -> Coalition:
    return Coalition(0, n)


def full_coalition(n: int) -> Coalition:
    return Coalition((1 << n) - 1, n)


def coalition_from_text(s: str, n: int) -> Coalition:
    if len(s) != n:
        raise ValueError(f"coalition text {s!r} has length {len(s)}, expected {n}")
    mask = 0
    for i, ch in enumerate(s):
        if ch == "1":
            mask |= 1 << i
        elif ch != "0":
            raise ValueError(f"coalition text {s!r} has invalid character {ch!r} at index {i}")
    return Coalition(mask, n)


def coalition_from_members(members: Sequence[int], n: int) -> Coalition:
    mask = 0
    for i in members:
        _check_index(i, n)
        mask |= 1 << i
    return Coalition(mask, n)


def with_concept(s: Coalition, i: int) -> Coalition:
    _check_index(i, s.n)
    return Coalition(s.mask | (1 << i), s.n)


def without_concept(s: Coalition, i: int) -> Coalition:
    _check_index(i, s.n)
    return Coalition(s.mask & ~(1 << i), s.n)


def enumerate_coalitions(n: int) -> Iterator[Coalition]:
    """All 2^n coalitions in ascending integer order of the bitmask."""
    if n > MAX_EXACT_ENUMERATION:
        raise ValueError(
            f"exact enumeration is guarded to n <= {MAX_EXACT_ENUMERATION}; got n={n}"
        )
    if n < 0:
        raise ValueError(f"negative concept count {n}")
    for mask in range(1 << n):
        yield Coalition(mask, n)


def sample_coalition(
    rng: np.random.Generator, n: int, size: int, exclude: Optional[int] = None
) -> Coalition:
    """Uniform draw over coalitions of exactly ``size`` concepts.

    ``exclude`` removes one concept from the candidate pool.  Uses a partial
    Fisher-Yates shuffle over candidate indices, O(n) per draw and exactly
    uniform.  Deterministic given the generator state and call order.
    """
    if exclude is not None:
        _check_index(exclude, n)
    candidates = [j for j in range(n) if j != exclude]
    if not 0 <= size <= len(candidates):
        raise ValueError(
            f"cannot draw {size} concepts from {len(candidates)} candidates "
            f"(n={n}, exclude={exclude})"
        )
    for t in range(size):
        r = t + int(rng.integers(len(candidates) - t))
        candidates[t], candidates[r] = candidates[r], candidates[t]
    mask = 0
    for j in candidates[:size]:
        mask |= 1 << j
    return Coalition(mask, n)


def bits_matrix(coalitions: Sequence[Coalition]) -> np.ndarray:
    """Stack coalitions into a (batch, n) float64 presence matrix."""
    if not coalitions:
        raise ValueError("empty coalition batch")
    n = coalitions[0].n
    out = np.zeros((len(coalitions), n), dtype=np.float64)
    for row, c in enumerate(coalitions):
        if c.n != n:
            raise ValueError("mixed coalition lengths in one batch")
        for i in range(n):
            if (c.mask >> i) & 1:
                out[row, i] = 1.0
    return out


def all_bits_matrix(n: int) -> np.ndarray:
    """(2^n, n) presence matrix for every coalition, row index == bitmask."""
    if n > MAX_EXACT_ENUMERATION:
        raise ValueError(
            f"exact enumeration is guarded to n <= {MAX_EXACT_ENUMERATION}; got n={n}"
        )
    masks = np.arange(1 << n, dtype=np.uint64)
    return ((masks[:, None] >> np.arange(n, dtype=np.uint64)[None, :]) & 1).astype(np.float64)
