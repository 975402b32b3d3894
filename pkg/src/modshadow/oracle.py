"""Hyperbolic conjugacy classes of the modular group as cyclic R/L words.

Every hyperbolic class of PSL(2, Z) contains products of

    R = [[1, 1], [0, 1]]   and   L = [[1, 0], [1, 1]]

involving both letters, and two such words are conjugate exactly when they
are cyclic rotations of each other. Classes are keyed by the
lexicographically least rotation of the word (``'L' < 'R'``).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from math import isqrt

from .lattice import DeckElement, classify

LETTERS = {"R": (1, 1, 0, 1), "L": (1, 0, 1, 1)}
MAX_CF_STEPS = 100_000


@dataclass(frozen=True)
class ConjClass:
    representative: DeckElement
    trace: int
    length: float
    word: str


def _mul(m, n):
    a, b, c, d = m
    p, q, r, s = n
    return (a * p + b * r, a * q + b * s, c * p + d * r, c * q + d * s)


def word_matrix(word: str) -> tuple[int, int, int, int]:
    m = (1, 0, 0, 1)
    for letter in word:
        m = _mul(m, LETTERS[letter])
    return m


def least_rotation(word: str) -> str:
    return min(word[i:] + word[:i] for i in range(len(word))) if word else word


def class_length(trace: int) -> float:
    t = abs(trace)
    return 2.0 * math.log((t + math.sqrt(t * t - 4)) / 2.0)


def _make_class(word: str) -> ConjClass:
    m = word_matrix(word)
    trace = m[0] + m[3]
    return ConjClass(DeckElement(*m), trace, class_length(trace), word)


def enumerate_classes(trace_max: int) -> list[ConjClass]:
    """All hyperbolic classes (primitive or not) with trace <= ``trace_max``."""
    if not 3 <= trace_max <= 10_000:
        raise ValueError("trace_max must lie in [3, 10^4]")
    words: set[str] = set()

    def trace(m):
        return m[0] + m[3]

    def close_with_l(prefix: str, m):
        # m ends in an R block; append L^b for every admissible b
        b = 1
        mm = _mul(m, LETTERS["L"])
        while trace(mm) <= trace_max:
            word = prefix + "L" * b
            words.add(least_rotation(word))
            extend(word, mm)
            b += 1
            mm = _mul(mm, LETTERS["L"])

    def extend(prefix: str, m):
        # append R^a, requiring at least one more L afterwards
        a = 1
        mm = _mul(m, LETTERS["R"])
        while trace(_mul(mm, LETTERS["L"])) <= trace_max:
            close_with_l(prefix + "R" * a, mm)
            a += 1
            mm = _mul(mm, LETTERS["R"])

    extend("", (1, 0, 0, 1))
    classes = [_make_class(w) for w in words]
    classes.sort(key=lambda k: (k.trace, k.word))
    return classes


def _floor_quadratic(p: int, d: int, q: int) -> int:
    """floor((p + sqrt(d)) / q) for non-square ``d``."""
    r = isqrt(d)
    if q > 0:
        return (p + r) // q
    # (p + sqrt d)/q = -(p + sqrt d)/|q|; sqrt d is irrational
    return -((p + r) // (-q) + 1)


def _factor_positive(m) -> str | None:
    a, b, c, d = m
    letters = []
    while (a, b, c, d) != (1, 0, 0, 1):
        if a >= c and b >= d and (c, d) != (0, 0):
            a, b = a - c, b - d
            letters.append("R")
        elif c >= a and d >= b:
            c, d = c - a, d - b
            letters.append("L")
        else:
            return None
        if min(a, b, c, d) < 0:
            return None
    return "".join(letters)


@dataclass(frozen=True)
class WordCertificate:
    """``word`` is the canonical class word and ``conjugator @ W @ conjugator^-1 = +/- gamma``."""

    word: str
    conjugator: tuple[int, int, int, int]


def canonical_word_certified(gamma: DeckElement) -> WordCertificate:
    """Canonical R/L word of a hyperbolic class, with an explicit conjugator.

    The attracting fixed point ``(a - d + sqrt D) / 2c`` is expanded as a
    continued fraction in exact integer arithmetic until the complete
    quotient is reduced (``x > 1``, ``-1 < x' < 0``) at an even step; the
    conjugate of ``gamma`` fixing that quotient is then a positive R/L word.
    """
    if classify(gamma) != "hyperbolic":
        raise ValueError(f"{gamma.entries} is not hyperbolic")
    a, b, c, d = gamma.entries
    if a + d < 0:
        a, b, c, d = -a, -b, -c, -d
    disc = (a + d) ** 2 - 4
    p, q = a - d, 2 * c
    # x+ = Qn(x_n), Qn the product of [[a_k, 1], [1, 0]]
    conj = (1, 0, 0, 1)
    for step in range(MAX_CF_STEPS):
        reduced = (
            p > 0
            and q > 0
            and p * p < disc
            and (q + p) ** 2 > disc
            and (q - p <= 0 or (q - p) ** 2 < disc)
        )
        if reduced and step % 2 == 0:
            break
        ak = _floor_quadratic(p, disc, q)
        conj = _mul(conj, (ak, 1, 1, 0))
        p = ak * q - p
        q = (disc - p * p) // q
    else:
        raise RuntimeError("continued fraction did not become reduced")
    w, x, y, z = conj
    inv = (z, -x, -y, w)
    reduced_gamma = _mul(_mul(inv, (a, b, c, d)), conj)
    word = _factor_positive(reduced_gamma)
    if word is None:
        raise RuntimeError(f"reduced conjugate {reduced_gamma} is not a positive word")
    canon = least_rotation(word)
    shift = next(i for i in range(len(word)) if word[i:] + word[:i] == canon)
    # word = u v with canon = v u, hence W = U canon U^-1
    conjugator = _mul(conj, word_matrix(word[:shift]))
    w, x, y, z = conjugator
    check = _mul(_mul(conjugator, word_matrix(canon)), (z, -x, -y, w))
    if check != (a, b, c, d):
        raise RuntimeError("conjugation certificate failed")
    return WordCertificate(canon, conjugator)


def canonical_word(gamma: DeckElement) -> str:
    return canonical_word_certified(gamma).word


def match_orbit(result, classes: list[ConjClass], tol: float) -> ConjClass | None:
    """The class of ``result.gamma`` if its length agrees with ``result.period`` within ``tol``."""
    if not classes:
        return None
    trace = abs(result.gamma.trace)
    if trace > max(k.trace for k in classes):
        return None
    word = canonical_word(result.gamma)
    hits = [k for k in classes if k.word == word and abs(k.length - result.period) <= tol]
    if len(hits) > 1:
        raise ValueError(f"ambiguous match for {word}: tolerance {tol} too loose")
    return hits[0] if hits else None


def brute_force_classes(trace_max: int, entry_bound: int = 200) -> dict[int, set[str]]:
    """Canonical words of every matrix with entries bounded by ``entry_bound``, by trace."""
    found: dict[int, set[str]] = {}
    for t in range(3, trace_max + 1):
        words = found.setdefault(t, set())
        for a in range(-entry_bound, entry_bound + 1):
            d = t - a
            if abs(d) > entry_bound:
                continue
            bc = a * d - 1
            for b in range(1, entry_bound + 1):
                if bc % b:
                    continue
                c = bc // b
                if abs(c) <= entry_bound:
                    words.add(canonical_word(DeckElement(a, b, c, d)))
                    words.add(canonical_word(DeckElement(a, -b, -c, d)))
    return found


def spectrum_csv(classes: list[ConjClass]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["trace", "word", "length"])
    for k in classes:
        writer.writerow([k.trace, k.word, format(k.length, ".15g")])
    return buf.getvalue()
