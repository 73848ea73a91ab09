"""Finite bit strings used as node addresses in the complete binary tree.

A word is stored bit-packed: ``value`` holds the bits with the first bit in
the most significant position, ``length`` the number of bits. The empty word
is the root.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

MAX_DEPTH = 4096


class DepthOverflowError(OverflowError):
    """Raised when a word would exceed ``MAX_DEPTH`` bits."""


@dataclass(frozen=True, slots=True)
class Word:
    value: int = 0
    length: int = 0

    def __post_init__(self):
        if self.length < 0 or self.value < 0 or self.value >> self.length:
            raise ValueError(f"invalid packed word value={self.value} length={self.length}")
        if self.length > MAX_DEPTH:
            raise DepthOverflowError(f"word length {self.length} exceeds MAX_DEPTH={MAX_DEPTH}")

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> Word:
        value = 0
        length = 0
        for b in bits:
            if b not in (0, 1):
                raise ValueError(f"bit must be 0 or 1, got {b!r}")
            value = (value << 1) | b
            length += 1
        return cls(value, length)

    @classmethod
    def parse(cls, text: str) -> Word:
        """Parse the canonical textual form, e.g. ``"01"``; ``""`` is the root."""
        text = text.strip()
        if text and set(text) - {"0", "1"}:
            raise ValueError(f"malformed word {text!r}")
        return cls(int(text, 2) if text else 0, len(text))

    def __str__(self) -> str:
        return format(self.value, f"0{self.length}b") if self.length else ""

    def __repr__(self) -> str:
        return f"Word({str(self)!r})"

    def __len__(self) -> int:
        return self.length

    def __iter__(self) -> Iterator[int]:
        v, n = self.value, self.length
        for i in range(n - 1, -1, -1):
            yield (v >> i) & 1

    def __getitem__(self, i: int) -> int:
        if i < 0:
            i += self.length
        if not 0 <= i < self.length:
            raise IndexError(i)
        return (self.value >> (self.length - 1 - i)) & 1

    def __add__(self, other: Word) -> Word:
        if not isinstance(other, Word):
            return NotImplemented
        return Word((self.value << other.length) | other.value, self.length + other.length)

    def child(self, bit: int) -> Word:
        return Word((self.value << 1) | bit, self.length + 1)

    @property
    def parent(self) -> Word:
        if not self.length:
            raise ValueError("the root has no parent")
        return Word(self.value >> 1, self.length - 1)

    @property
    def last(self) -> int:
        return self.value & 1

    def prefix(self, k: int) -> Word:
        if not 0 <= k <= self.length:
            raise ValueError(f"prefix length {k} out of range for {self!r}")
        return Word(self.value >> (self.length - k), k)

    def prefixes(self, strict: bool = False) -> Iterator[Word]:
        """Prefixes from the root downwards; ``strict`` omits the word itself."""
        for k in range(self.length + (0 if strict else 1)):
            yield self.prefix(k)

    def ones(self) -> int:
        return bin(self.value).count("1")

    @property
    def heap_index(self) -> int:
        """Position in breadth-first (heap) order: root 0, children of h at 2h+1, 2h+2."""
        return (1 << self.length) - 1 + self.value


ROOT = Word()


def as_word(u) -> Word:
    """Coerce a Word, a bit string or a bit sequence to a Word."""
    if isinstance(u, Word):
        return u
    if isinstance(u, str):
        return Word.parse(u)
    return Word.from_bits(u)


def is_prefix(u: Word, v: Word, strict: bool = True) -> bool:
    """``u`` precedes ``v`` in prefix order (``strict=False`` also allows equality)."""
    if u.length > v.length or (strict and u.length == v.length):
        return False
    return v.value >> (v.length - u.length) == u.value


def longest_common_prefix(v: Word, w: Word) -> Word:
    k = min(v.length, w.length)
    a = v.value >> (v.length - k)
    b = w.value >> (w.length - k)
    diff = a ^ b
    # bits below the highest differing position are irrelevant
    keep = k - diff.bit_length()
    return Word(a >> (k - keep), keep)


def words_of_length(k: int) -> Iterator[Word]:
    """All words of length ``k`` in lexicographic order."""
    for value in range(1 << k):
        yield Word(value, k)


def words_up_to(k: int) -> Iterator[Word]:
    for d in range(k + 1):
        yield from words_of_length(d)
