from .normalize import (
    InvalidId,
    NormRules,
    TokenSeq,
    UnknownSymbol,
    UnmappedNumber,
    canonicalize,
    default_rules,
    detokenize,
    expand_numbers,
    filter_chars,
    load_rules,
    normalize_text,
    number_words,
    strip_diacritics,
    text_to_ids,
    tokenize,
)
from .vocab import RESERVED, Vocab, build_vocab, default_vocab, load_vocab, save_vocab

__all__ = [
    "InvalidId", "NormRules", "RESERVED", "TokenSeq", "UnknownSymbol", "UnmappedNumber", "Vocab",
    "build_vocab", "canonicalize", "default_rules", "default_vocab", "detokenize", "expand_numbers",
    "filter_chars", "load_rules", "load_vocab", "normalize_text", "number_words", "save_vocab",
    "strip_diacritics", "text_to_ids", "tokenize",
]
