"""Grapheme vocabulary: a dense, ordered symbol table with a diacritic subset."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

RESERVED = ("<pad>", "<bos>", "<eos>")


@dataclass(frozen=True)
class Vocab:
    """Bidirectional grapheme <-> id map.

    ``symbols[i]`` is the grapheme with id ``i``; ids 0-2 are the reserved
    pad/bos/eos markers. Symbols may span several codepoints (aspirate
    digraphs, consonant+vowel-sign clusters); every codepoint of such a
    symbol is also a symbol on its own.
    """

    symbols: tuple[str, ...]
    diacritics: frozenset[str] = frozenset()
    pad_id: int = 0
    bos_id: int = 1
    eos_id: int = 2
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {s: i for i, s in enumerate(self.symbols)}
        if len(index) != len(self.symbols):
            raise ValueError("duplicate symbols in vocabulary")
        missing = self.diacritics - index.keys()
        if missing:
            raise ValueError(f"diacritics not in symbols: {sorted(missing)}")
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.index

    @property
    def graphemes(self) -> tuple[str, ...]:
        """Non-reserved symbols, in id order."""
        return self.symbols[len(RESERVED):]

    @property
    def max_symbol_len(self) -> int:
        return max((len(s) for s in self.graphemes), default=1)

    @property
    def codepoints(self) -> frozenset[str]:
        """Single-codepoint symbols; the alphabet ``filter_chars`` keeps."""
        return frozenset(s for s in self.graphemes if len(s) == 1)

    def digest(self) -> bytes:
        """SHA-256 over symbols and diacritic flags (32 bytes)."""
        h = hashlib.sha256()
        for s in self.symbols:
            h.update(s.encode("utf-8"))
            h.update(b"\x01" if s in self.diacritics else b"\x00")
        return h.digest()


def build_vocab(
    corpus_texts: Iterable[str],
    diacritic_list: Iterable[str],
    graphemes: Iterable[str] = (),
) -> Vocab:
    """Build a deterministic vocabulary from corpus text.

    Every codepoint seen in ``corpus_texts`` becomes a symbol, as does every
    entry of ``diacritic_list`` and ``graphemes`` (multi-codepoint units that
    cannot be recovered from raw text). Symbols are sorted by codepoint
    sequence and placed after the reserved markers.
    """
    diacritics = set(diacritic_list)
    found = set(diacritics)
    for text in corpus_texts:
        found.update(text)
    for g in graphemes:
        found.add(g)
        found.update(g)
    found.difference_update(RESERVED)
    return Vocab(RESERVED + tuple(sorted(found)), frozenset(diacritics))


def _read_inventory(lines: Iterable[str]) -> tuple[list[str], set[str]]:
    symbols, diacritics = [], set()
    for raw in lines:
        line = raw.rstrip("\r\n")
        if not line or line.startswith("#"):
            continue
        symbol, _, flag = line.partition("\t")
        if flag.strip() == "D":
            diacritics.add(symbol)
        symbols.append(symbol)
    return symbols, diacritics


def load_vocab(path: str | Path | None = None) -> Vocab:
    """Load a vocabulary file (one symbol per line, ``<TAB>D`` marks diacritics)."""
    if path is None:
        return default_vocab()
    with open(path, encoding="utf-8") as fh:
        symbols, diacritics = _read_inventory(fh)
    return build_vocab([], diacritics, graphemes=symbols)


def save_vocab(vocab: Vocab, path: str | Path) -> None:
    lines = ["# kashtts vocabulary"]
    for s in vocab.graphemes:
        lines.append(s + ("\tD" if s in vocab.diacritics else ""))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def inventory_lines() -> Sequence[str]:
    return resources.files("kashtts.data").joinpath("kashmiri_symbols.txt").read_text("utf-8").splitlines()


@lru_cache(maxsize=1)
def default_vocab() -> Vocab:
    """The shipped 272-symbol Kashmiri inventory."""
    symbols, diacritics = _read_inventory(inventory_lines())
    return build_vocab([], diacritics, graphemes=symbols)
