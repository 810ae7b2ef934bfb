"""Walk a few raw Kashmiri strings through the text front end.

Run: python3 demos/text_frontend.py
"""

from kashtts.text import canonicalize, default_rules, default_vocab, detokenize, strip_diacritics, text_to_ids

SAMPLES = [
    "کٲشُر زَبان",            # diacritized
    "كاشر ۔ 12 کتاب",         # Arabic kaf/yeh variants plus a number
    "ﻛﺸﻤﻴﺮ hello",            # presentation forms and Latin noise
]

vocab = default_vocab()
print(f"vocabulary: {len(vocab)} symbols")
for raw in SAMPLES:
    seq = text_to_ids(raw)
    print()
    print(f"raw         {raw!r}")
    print(f"canonical   {canonicalize(raw, default_rules())!r}")
    print(f"normalized  {seq.text!r}")
    print(f"ids         {list(seq.ids)}")
    print(f"round trip  {detokenize(seq.ids, vocab)!r}")
    print(f"bare        {strip_diacritics(seq.text, vocab)!r}")
