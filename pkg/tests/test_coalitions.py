import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pieshap.coalitions import (
    Coalition,
    ConceptSet,
    all_bits_matrix,
    coalition_from_text,
    empty_coalition,
    enumerate_coalitions,
    full_coalition,
    sample_coalition,
    with_concept,
    without_concept,
)


def test_from_text_basic():
    c = coalition_from_text("101", 3)
    assert c.members() == [0, 2]
    assert coalition_from_text("000", 3).mask == 0
    assert c.to_text() == "101"


def test_from_text_rejections():
    with pytest.raises(ValueError, match="invalid character"):
        coalition_from_text("10a", 3)
    with pytest.raises(ValueError, match="length"):
        coalition_from_text("10", 3)


def test_with_without_concept():
    assert with_concept(coalition_from_text("010", 3), 0).to_text() == "110"
    assert with_concept(coalition_from_text("110", 3), 0).to_text() == "110"
    assert without_concept(coalition_from_text("110", 3), 1).to_text() == "100"
    with pytest.raises(IndexError):
        with_concept(coalition_from_text("010", 3), 3)


def test_inputs_are_immutable():
    s = coalition_from_text("010", 3)
    with_concept(s, 0)
    without_concept(s, 1)
    assert s.to_text() == "010"


def test_enumerate_small():
    cs = list(enumerate_coalitions(2))
    assert [c.mask for c in cs] == [0, 1, 2, 3]
    assert len(set(cs)) == 4
    assert list(enumerate_coalitions(0)) == [Coalition(0, 0)]


def test_enumerate_guard():
    with pytest.raises(ValueError, match="20"):
        list(enumerate_coalitions(21))


@pytest.mark.parametrize("n", range(1, 9))
def test_enumerate_counts(n):
    cs = list(enumerate_coalitions(n))
    assert len(cs) == 2**n == len(set(cs))


@given(st.integers(min_value=1, max_value=10), st.data())
def test_text_roundtrip(n, data):
    mask = data.draw(st.integers(min_value=0, max_value=2**n - 1))
    c = Coalition(mask, n)
    assert coalition_from_text(c.to_text(), n) == c


@given(st.integers(min_value=1, max_value=12), st.data())
def test_with_then_without_clears_only_bit_i(n, data):
    mask = data.draw(st.integers(min_value=0, max_value=2**n - 1))
    i = data.draw(st.integers(min_value=0, max_value=n - 1))
    s = Coalition(mask, n)
    t = without_concept(with_concept(s, i), i)
    assert not t.contains(i)
    assert t.mask == s.mask & ~(1 << i)


def test_sample_forced_cases():
    rng = np.random.default_rng(0)
    assert sample_coalition(rng, 5, 0, exclude=2).mask == 0
    only = sample_coalition(rng, 3, 2, exclude=0)
    assert only.members() == [1, 2]


def test_sample_respects_exclude_and_size():
    rng = np.random.default_rng(1)
    for _ in range(500):
        n = int(rng.integers(1, 12))
        exclude = int(rng.integers(n))
        k = int(rng.integers(0, n))
        c = sample_coalition(rng, n, k, exclude=exclude)
        assert not c.contains(exclude)
        assert c.size == k


def test_sample_infeasible_size():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="cannot draw"):
        sample_coalition(rng, 3, 3, exclude=0)


def test_sample_determinism():
    a = [sample_coalition(np.random.default_rng(42), 8, k).mask for k in range(9)]
    b = [sample_coalition(np.random.default_rng(42), 8, k).mask for k in range(9)]
    assert a == b


def test_sample_uniform_frequency():
    # 60,000 draws of size-2 subsets of 4 concepts: each of the 6 within 1/6 +- 0.01
    rng = np.random.default_rng(2024)
    counts = {}
    draws = 60_000
    for _ in range(draws):
        c = sample_coalition(rng, 4, 2)
        counts[c.mask] = counts.get(c.mask, 0) + 1
    assert len(counts) == 6
    for mask, cnt in counts.items():
        assert abs(cnt / draws - 1 / 6) < 0.01, f"subset {mask:04b} freq {cnt / draws:.4f}"


def test_concept_set_invariants():
    cs = ConceptSet(3)
    assert list(cs.concept_ids) == [0, 1, 2]
    with pytest.raises(ValueError):
        ConceptSet(0)
    with pytest.raises(ValueError):
        ConceptSet(65)
    with pytest.raises(ValueError):
        ConceptSet(2, mask_meta=("a",))


def test_bits_matrix_matches_masks():
    m = all_bits_matrix(4)
    assert m.shape == (16, 4)
    for mask in range(16):
        np.testing.assert_array_equal(m[mask], Coalition(mask, 4).as_bits())


def test_full_and_empty():
    assert full_coalition(5).size == 5
    assert empty_coalition(5).size == 0
    assert full_coalition(5).complement() == empty_coalition(5)
