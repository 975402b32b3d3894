import math
from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import arccosh_length
from modshadow.lattice import DeckElement
from modshadow.oracle import (
    brute_force_classes,
    canonical_word,
    canonical_word_certified,
    class_length,
    enumerate_classes,
    least_rotation,
    match_orbit,
    spectrum_csv,
    word_matrix,
)


def test_smallest_classes():
    classes = enumerate_classes(4)
    assert [(k.trace, k.word) for k in classes] == [(3, "LR"), (4, "LLR"), (4, "LRR")]
    assert classes[0].length == pytest.approx(1.9248473002384139, abs=1e-15)
    assert classes[1].length == pytest.approx(arccosh_length(4), abs=1e-14)


def test_enumeration_matches_brute_force():
    classes = enumerate_classes(12)
    by_trace = {}
    for k in classes:
        by_trace.setdefault(k.trace, set()).add(k.word)
    assert by_trace == brute_force_classes(12)


def test_enumeration_properties():
    classes = enumerate_classes(30)
    assert len({k.word for k in classes}) == len(classes)
    for k in classes:
        assert k.word == least_rotation(k.word)
        a, b, c, d = word_matrix(k.word)
        assert a + d == k.trace and a * d - b * c == 1
        assert k.length == pytest.approx(arccosh_length(k.trace), rel=1e-14)


def test_trace_range_is_checked():
    with pytest.raises(ValueError):
        enumerate_classes(2)
    with pytest.raises(ValueError):
        enumerate_classes(10_001)


def test_canonical_word_examples():
    assert canonical_word(DeckElement(2, 1, 1, 1)) == "LR"
    assert canonical_word(DeckElement(-2, -1, -1, -1)) == "LR"
    assert canonical_word(DeckElement(1, 1, 1, 2)) == "LR"
    with pytest.raises(ValueError):
        canonical_word(DeckElement(1, 1, 0, 1))


word_strategy = st.text(alphabet="LR", min_size=2, max_size=14).filter(lambda w: "L" in w and "R" in w)
conjugator_strategy = st.lists(st.sampled_from(["T", "t", "S"]), max_size=10)

STEPS = {"T": (1, 1, 0, 1), "t": (1, -1, 0, 1), "S": (0, -1, 1, 0)}


def _mul(m, n):
    a, b, c, d = m
    p, q, r, s = n
    return (a * p + b * r, a * q + b * s, c * p + d * r, c * q + d * s)


@settings(max_examples=300, deadline=None)
@given(word_strategy, conjugator_strategy)
def test_canonical_word_is_conjugation_invariant(word, steps):
    g = (1, 0, 0, 1)
    for s in steps:
        g = _mul(g, STEPS[s])
    a, b, c, d = g
    conj = _mul(_mul(g, word_matrix(word)), (d, -b, -c, a))
    cert = canonical_word_certified(DeckElement(*conj))
    assert cert.word == least_rotation(word)
    w, x, y, z = cert.conjugator
    assert _mul(_mul(cert.conjugator, word_matrix(cert.word)), (z, -x, -y, w)) == conj


def test_match_orbit():
    classes = enumerate_classes(12)
    hit = SimpleNamespace(gamma=DeckElement(3, 1, 2, 1), period=class_length(4))
    assert match_orbit(hit, classes, 1e-8).word == "LLR"
    miss = SimpleNamespace(gamma=DeckElement(3, 1, 2, 1), period=class_length(4) + 1e-3)
    assert match_orbit(miss, classes, 1e-8) is None
    big = SimpleNamespace(gamma=DeckElement(*word_matrix("LLLLLLLLLLLLLR")), period=0.0)
    assert match_orbit(big, classes, 1e-8) is None
    golden = SimpleNamespace(gamma=DeckElement(2, 1, 1, 1), period=class_length(3))
    with pytest.raises(ValueError, match="ambiguous"):
        match_orbit(golden, classes + [classes[0]], 1e-8)


def test_spectrum_csv():
    text = spectrum_csv(enumerate_classes(6))
    lines = text.splitlines()
    assert lines[0] == "trace,word,length"
    assert lines[1].startswith("3,LR,1.9248473")
    assert len(lines) == 1 + 8
    assert all(float(row.split(",")[2]) == pytest.approx(arccosh_length(int(row.split(",")[0])), rel=1e-14)
               for row in lines[1:])


def test_class_length_growth():
    assert class_length(3) == pytest.approx(2 * math.log((3 + math.sqrt(5)) / 2))
