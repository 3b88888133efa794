"""Byte-pair subword units: learning, greedy segmentation, detokenization.

A word is rendered as its characters followed by the boundary symbol `_`.
Learning repeatedly merges the most frequent adjacent unit pair (weighted by
word count, ties broken lexicographically) until the requested number of
merges is reached or no pair occurs at least twice. Segmentation greedily
takes the longest unit that prefixes the remaining string, which always
succeeds because every alphabet character stays in the unit set.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

from .errors import AlphabetError, ConfigError, ContractError

log = logging.getLogger(__name__)

BOUNDARY = "_"
DEFAULT_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ'"

BLANK_SYMBOL = "<blank>"
SOS_SYMBOL = "<sos>"
EOS_SYMBOL = "<eos>"


@dataclass(frozen=True)
class MergeRule:
    left: str
    right: str
    rank: int


@dataclass(frozen=True)
class SubwordVocab:
    """Learned unit inventory plus the ordered merge list that produced it."""

    units: frozenset
    merges: tuple
    alphabet: str
    boundary: str = BOUNDARY

    def __post_init__(self):
        missing = [ch for ch in self.alphabet if ch not in self.units]
        if missing or self.boundary not in self.units:
            raise ContractError(f"vocabulary is missing base characters: {missing}")

    @cached_property
    def max_unit_len(self) -> int:
        return max(len(u) for u in self.units)

    @cached_property
    def ordered_units(self) -> tuple:
        """Deterministic unit order: boundary, alphabet, then novel merges by rank."""
        out = [self.boundary]
        out.extend(sorted(set(self.alphabet)))
        seen = set(out)
        for rule in self.merges:
            unit = rule.left + rule.right
            if unit not in seen:
                seen.add(unit)
                out.append(unit)
        return tuple(out)


def _validate_word(word: str, alphabet: str, policy: str = "reject") -> str:
    bad = [ch for ch in word if ch not in alphabet]
    if not bad:
        return word
    if policy == "reject":
        raise AlphabetError(f"character {bad[0]!r} in word {word!r} is outside the alphabet")
    if policy == "skip":
        log.warning("dropping out-of-alphabet characters %r from %r", "".join(bad), word)
        return "".join(ch for ch in word if ch in alphabet)
    raise ConfigError(f"unknown out-of-alphabet policy {policy!r}")


def _apply_merge(seq: list, left: str, right: str) -> list:
    out = []
    i = 0
    n = len(seq)
    while i < n:
        if i + 1 < n and seq[i] == left and seq[i + 1] == right:
            out.append(left + right)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out


def learn_bpe(corpus: Mapping[str, int], num_merges: int,
              alphabet: str = DEFAULT_ALPHABET) -> SubwordVocab:
    """Learn subword units from a word -> count map.

    Performs exactly ``num_merges`` merges, stopping early when no adjacent
    pair occurs at least twice. Each adjacent occurrence counts, weighted by
    the word's corpus count.
    """
    if num_merges < 0:
        raise ContractError(f"num_merges must be >= 0, got {num_merges}")
    words = []
    for word, count in corpus.items():
        _validate_word(word, alphabet)
        if word:
            words.append((list(word) + [BOUNDARY], int(count)))
    units = set(alphabet) | {BOUNDARY}
    merges = []
    for rank in range(num_merges):
        pair_counts = Counter()
        for seq, count in words:
            for pair in zip(seq, seq[1:]):
                pair_counts[pair] += count
        if not pair_counts:
            break
        (left, right), best = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if best < 2:
            break
        merges.append(MergeRule(left, right, rank))
        units.add(left + right)
        words = [(_apply_merge(seq, left, right), count) for seq, count in words]
    return SubwordVocab(units=frozenset(units), merges=tuple(merges), alphabet=alphabet)


def segment(word: str, vocab: SubwordVocab, on_oov: str = "reject") -> list:
    """Greedy longest-match segmentation of one word (boundary appended)."""
    word = _validate_word(word, vocab.alphabet, on_oov)
    if not word:
        return []
    s = word + vocab.boundary
    units = vocab.units
    max_len = vocab.max_unit_len
    out = []
    i = 0
    n = len(s)
    while i < n:
        for length in range(min(max_len, n - i), 0, -1):
            piece = s[i:i + length]
            if piece in units:
                out.append(piece)
                i += length
                break
        else:  # unreachable: single characters are always present
            raise ContractError(f"no unit matches {s[i:]!r}")
    return out


def segment_sentence(text: str, vocab: SubwordVocab, on_oov: str = "reject") -> list:
    """Concatenated per-word segmentation of a whitespace-separated sentence."""
    out = []
    for index, word in enumerate(text.split()):
        try:
            out.extend(segment(word, vocab, on_oov))
        except AlphabetError as exc:
            raise AlphabetError(f"word {index}: {exc}") from exc
    return out


class Detokenized(NamedTuple):
    text: str
    complete: bool


def detokenize(units: Iterable[str]) -> Detokenized:
    """Join units and split at boundaries to restore the word sequence.

    A trailing fragment with no final boundary is emitted as a final partial
    word, with complete=False.
    """
    joined = "".join(units)
    complete = joined == "" or joined.endswith(BOUNDARY)
    words = joined.split(BOUNDARY)
    if words and words[-1] == "":
        words.pop()
    return Detokenized(" ".join(words), complete)


@dataclass(frozen=True)
class UnitInventory:
    """Subword units with the reserved label-id layout.

    id 0 is the blank (CTC only), ids 1..n are the subword units, then the
    start and end sentinels. The attention decoder's output space excludes
    the blank, so its index for any non-blank label is the global id minus 1.
    """

    units: tuple
    _unit_to_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mapping = {u: i + 1 for i, u in enumerate(self.units)}
        if len(mapping) != len(self.units):
            raise ContractError("duplicate units in inventory")
        object.__setattr__(self, "_unit_to_id", mapping)

    @property
    def blank_id(self) -> int:
        return 0

    @property
    def num_units(self) -> int:
        return len(self.units)

    @property
    def sos_id(self) -> int:
        return len(self.units) + 1

    @property
    def eos_id(self) -> int:
        return len(self.units) + 2

    @property
    def num_ctc_labels(self) -> int:
        """Blank plus units."""
        return len(self.units) + 1

    @property
    def num_att_labels(self) -> int:
        """Units plus sos/eos."""
        return len(self.units) + 2

    def unit_id(self, unit: str) -> int:
        try:
            return self._unit_to_id[unit]
        except KeyError:
            raise ContractError(f"unknown unit {unit!r}") from None

    def unit_of(self, label_id: int) -> str:
        if 1 <= label_id <= len(self.units):
            return self.units[label_id - 1]
        raise ContractError(f"label id {label_id} is not a subword unit")

    def ids_for(self, units: Iterable[str]) -> list:
        return [self.unit_id(u) for u in units]

    def att_index(self, label_id: int) -> int:
        if not 1 <= label_id <= self.eos_id:
            raise ContractError(f"label id {label_id} outside attention output space")
        return label_id - 1

    @classmethod
    def from_vocab(cls, vocab: SubwordVocab) -> "UnitInventory":
        return cls(units=vocab.ordered_units)


def write_merges_file(vocab: SubwordVocab, path) -> None:
    lines = ["#version 1"]
    lines.extend(f"{rule.left} {rule.right}" for rule in vocab.merges)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_merges_file(path) -> tuple:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != "#version 1":
        raise ConfigError(f"{path}: missing '#version 1' header")
    merges = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(" ")
        if len(parts) != 2:
            raise ConfigError(f"{path}:{lineno}: expected 'left right'")
        merges.append(MergeRule(parts[0], parts[1], len(merges)))
    return tuple(merges)


def write_units_file(inventory: UnitInventory, path) -> None:
    lines = [f"{BLANK_SYMBOL}\t0"]
    lines.extend(f"{unit}\t{i + 1}" for i, unit in enumerate(inventory.units))
    lines.append(f"{SOS_SYMBOL}\t{inventory.sos_id}")
    lines.append(f"{EOS_SYMBOL}\t{inventory.eos_id}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_units_file(path) -> UnitInventory:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"units file not found: {path}")
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ConfigError(f"{path}:{lineno}: expected 'unit<TAB>id'")
        try:
            rows.append((parts[0], int(parts[1])))
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: id {parts[1]!r} is not an integer") from None
    rows.sort(key=lambda r: r[1])
    ids = [i for _, i in rows]
    if ids != list(range(len(rows))) or len(rows) < 3:
        raise ConfigError(f"{path}: ids must be contiguous from 0 and include the reserved symbols")
    if rows[0][0] != BLANK_SYMBOL or rows[-2][0] != SOS_SYMBOL or rows[-1][0] != EOS_SYMBOL:
        raise ConfigError(f"{path}: reserved symbols must be blank first, sos/eos last")
    return UnitInventory(units=tuple(name for name, _ in rows[1:-2]))


def corpus_from_lines(lines: Iterable[str]) -> Counter:
    """Word counts from transcript lines (uppercased, whitespace-tokenized)."""
    counts = Counter()
    for line in lines:
        counts.update(line.upper().split())
    return counts
