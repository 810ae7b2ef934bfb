"""Text normalization for Kashmiri Perso-Arabic input.

The front end is a fixed chain: ``canonicalize`` -> ``expand_numbers`` ->
``filter_chars`` -> ``tokenize``. Each step is a pure function of its input
and the (immutable) rules or vocabulary.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .vocab import Vocab, default_vocab

DIGIT_RUN = re.compile("[0-9٠-٩۰-۹]+")
_MAX_CANON_PASSES = 16


class UnmappedNumber(ValueError):
    def __init__(self, digits: str, span: tuple[int, int]):
        super().__init__(f"no lexicon expansion for {digits!r} at {span[0]}:{span[1]}")
        self.digits = digits
        self.span = span


class UnknownSymbol(ValueError):
    def __init__(self, char: str, position: int):
        super().__init__(f"symbol {char!r} (U+{ord(char):04X}) at {position} not in vocabulary")
        self.char = char
        self.position = position


class InvalidId(ValueError):
    pass


@dataclass(frozen=True)
class NormRules:
    canon_map: Mapping[str, str]
    allowed: frozenset[str]
    number_lexicon: Mapping[int, str]
    connector: str = " "
    _pattern: re.Pattern | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        keys = sorted(self.canon_map, key=len, reverse=True)
        if keys:
            pattern = re.compile("|".join(re.escape(k) for k in keys))
            object.__setattr__(self, "_pattern", pattern)


@dataclass(frozen=True)
class TokenSeq:
    ids: tuple[int, ...]
    text: str

    def __len__(self) -> int:
        return len(self.ids)


# -- rule files -------------------------------------------------------------

def _decode_field(value: str) -> str:
    value = value.strip("\r\n")
    if value == "-":
        return ""
    parts = value.split()
    if parts and all(p.upper().startswith("U+") for p in parts):
        return "".join(chr(int(p[2:], 16)) for p in parts)
    return value


def _data_lines(path: str | Path | None, default: str) -> list[str]:
    if path is None:
        text = resources.files("kashtts.data").joinpath(default).read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return [ln for ln in text.splitlines() if ln and not ln.startswith("#")]


def load_canon_map(path: str | Path | None = None) -> dict[str, str]:
    """``source<TAB>target`` lines; fields are literal text or ``U+XXXX`` lists, ``-`` is empty."""
    table = {}
    for n, line in enumerate(_data_lines(path, "canon_rules.tsv"), 1):
        src, sep, tgt = line.partition("\t")
        if not sep:
            raise ValueError(f"canonicalization rule {n}: expected source<TAB>target")
        table[_decode_field(src)] = _decode_field(tgt)
    return table


def load_number_lexicon(path: str | Path | None = None) -> dict[int, str]:
    lexicon = {}
    for n, line in enumerate(_data_lines(path, "number_lexicon.tsv"), 1):
        num, sep, words = line.partition("\t")
        if not sep:
            raise ValueError(f"number lexicon line {n}: expected integer<TAB>words")
        lexicon[int(num)] = words.strip()
    return lexicon


def load_rules(
    canon_path: str | Path | None = None,
    lexicon_path: str | Path | None = None,
    vocab: Vocab | None = None,
    connector: str = " ",
) -> NormRules:
    vocab = vocab or default_vocab()
    return NormRules(
        canon_map=load_canon_map(canon_path),
        allowed=vocab.codepoints,
        number_lexicon=load_number_lexicon(lexicon_path),
        connector=connector,
    )


@lru_cache(maxsize=1)
def default_rules() -> NormRules:
    return load_rules()


# -- operations -------------------------------------------------------------

def _canon_pass(text: str, rules: NormRules) -> str:
    if rules._pattern is None:
        return text
    return rules._pattern.sub(lambda m: rules.canon_map[m.group(0)], text)


def canonicalize(text: str, rules: NormRules) -> str:
    """Rewrite Unicode variants to their canonical form.

    Passes repeat until nothing changes, so a rewrite that exposes a new
    match (e.g. a presentation form next to another one) is also resolved
    and the result is idempotent. Unknown codepoints pass through.
    """
    for _ in range(_MAX_CANON_PASSES):
        out = _canon_pass(text, rules)
        if out == text:
            return out
        text = out
    raise RuntimeError("canonicalization table does not converge")


def number_words(n: int, lexicon: Mapping[int, str], connector: str = " ") -> str:
    """Spell ``n`` from the lexicon: direct entry, else decade+unit, hundreds, thousands."""
    if n in lexicon:
        return lexicon[n]
    if n < 0:
        raise KeyError(n)
    if n < 100:
        tens, unit = divmod(n, 10)
        return lexicon[tens * 10] + connector + lexicon[unit]
    if n < 1000:
        base, rest = divmod(n, 100)
        words = number_words(base, lexicon, connector) + " " + lexicon[100]
    elif n < 1_000_000:
        base, rest = divmod(n, 1000)
        words = number_words(base, lexicon, connector) + " " + lexicon[1000]
    else:
        raise KeyError(n)
    if rest:
        words += connector + number_words(rest, lexicon, connector)
    return words


def _digit_value(run: str) -> int:
    return int("".join(str(unicodedata.digit(c)) for c in run))


def expand_numbers(text: str, rules: NormRules) -> str:
    """Replace each maximal ASCII/Eastern-Arabic digit run with lexicon words."""

    def spell(m: re.Match) -> str:
        try:
            return number_words(_digit_value(m.group(0)), rules.number_lexicon, rules.connector)
        except KeyError:
            raise UnmappedNumber(m.group(0), m.span()) from None

    return DIGIT_RUN.sub(spell, text)


def filter_chars(text: str, vocab: Vocab) -> str:
    """Drop codepoints outside the vocabulary and collapse whitespace.

    Diacritics are vocabulary symbols and therefore always survive.
    """
    keep = vocab.codepoints
    out = []
    for ch in text:
        if ch.isspace():
            out.append(" ")
        elif ch in keep:
            out.append(ch)
    return _squeeze("".join(out))


def _squeeze(text: str) -> str:
    return " ".join(part for part in text.split(" ") if part)


def strip_diacritics(text: str, vocab: Vocab) -> str:
    return "".join(ch for ch in text if ch not in vocab.diacritics)


def tokenize(text: str, vocab: Vocab) -> TokenSeq:
    """Greedy longest-match segmentation over the vocabulary graphemes."""
    ids = []
    pos = 0
    longest = vocab.max_symbol_len
    n_reserved = len(vocab.symbols) - len(vocab.graphemes)
    while pos < len(text):
        for width in range(min(longest, len(text) - pos), 0, -1):
            sid = vocab.index.get(text[pos:pos + width])
            if sid is not None and sid >= n_reserved:
                ids.append(sid)
                pos += width
                break
        else:
            raise UnknownSymbol(text[pos], pos)
    return TokenSeq(tuple(ids), text)


def detokenize(seq: TokenSeq | Sequence[int], vocab: Vocab) -> str:
    ids = seq.ids if isinstance(seq, TokenSeq) else seq
    out = []
    for i in ids:
        if not 0 <= i < len(vocab):
            raise InvalidId(f"id {i} outside vocabulary of size {len(vocab)}")
        out.append(vocab.symbols[i])
    return "".join(out)


def normalize_text(text: str, rules: NormRules | None = None, vocab: Vocab | None = None) -> str:
    """canonicalize -> expand_numbers -> filter_chars."""
    rules = rules or default_rules()
    vocab = vocab or default_vocab()
    return filter_chars(expand_numbers(canonicalize(text, rules), rules), vocab)


def text_to_ids(text: str, rules: NormRules | None = None, vocab: Vocab | None = None) -> TokenSeq:
    vocab = vocab or default_vocab()
    return tokenize(normalize_text(text, rules, vocab), vocab)


def diacritic_counts(text: str, diacritics: Iterable[str]) -> dict[str, int]:
    marks = set(diacritics)
    counts: dict[str, int] = {}
    for ch in text:
        if ch in marks:
            counts[ch] = counts.get(ch, 0) + 1
    return counts
