"""Deterministic synthetic corpus for tests, demos and smoke runs.

Every grapheme maps to a steady harmonic sound with its own spectral
envelope; spaces and punctuation map to silence. Recordings carry silent
margins and run at 44.1 kHz so that trimming and resampling have work to
do, and the IVR-style entries are quieter and noisier than the studio ones.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, write_wav
from .text import default_rules, default_vocab, normalize_text, tokenize

SOURCE_RATE = 44100
FRAME_SAMPLES = 512  # one 22.05 kHz mel hop at the source rate


@dataclass(frozen=True)
class FixtureUtterance:
    id: str
    text: str
    speaker: str
    source: str
    split: str
    asr_gt: str  # simulated recognizer output on the recording
    asr_tts: str  # simulated recognizer output on synthesized audio


SPEAKER_F0 = {"rasa_f": 210.0, "rasa_m": 120.0, "ivr_01": 160.0}

UTTERANCES = (
    FixtureUtterance("km_0001", "کٲشُر زَبان چھےٚ مٲنۍ", "rasa_f", "RASA", "train",
                     "کٲشُر زَبان چھےٚ مٲنۍ", "کٲشُر زَبان چھےٚ مٲنۍ"),
    FixtureUtterance("km_0002", "بہٕ چھُس 3 وَرۍ یتھ شہرس منٛز", "rasa_m", "RASA", "train",
                     "بہٕ چھُس ترٛے وَرۍ یتھ شہرس منٛز", "بہٕ چھُس ترٛے ورۍ یتھ شہرس منز"),
    FixtureUtterance("km_0003", "تۄہہ کیاہ چھِو کران؟", "ivr_01", "IVR", "train",
                     "تۄہہ کیاہ چھِو کران", "تۄہہ کیاہ چھو کران"),
    FixtureUtterance("km_0004", "اَز چھُ موسم جان۔", "rasa_f", "RASA", "valid",
                     "اَز چھُ موسم جان", "اَز چھُ موسم جان"),
    FixtureUtterance("km_0005", "سُہ گٔو بازر 12 بجے", "rasa_m", "RASA", "test",
                     "سُہ گٔو بازر دَہ زٕ بجے", "سُہ گو بازر دَہ زٕ بجے"),
)


def _seed(*parts: str) -> int:
    return int.from_bytes(hashlib.sha256("|".join(parts).encode("utf-8")).digest()[:8], "little")


def grapheme_frames(symbol: str) -> int:
    return 8 + _seed("dur", symbol) % 6


def is_voiced(symbol: str) -> bool:
    return symbol.strip() != "" and not any(ch in " ؟۔،!?.,:;" for ch in symbol)


def grapheme_sound(symbol: str, speaker_f0: float, n: int, rate: int = SOURCE_RATE) -> np.ndarray:
    """A steady harmonic complex shaped by three symbol-specific formants."""
    if not is_voiced(symbol):
        return np.zeros(n)
    rng = np.random.default_rng(_seed("snd", symbol))
    f0 = speaker_f0 * rng.uniform(0.92, 1.08)
    formants = [rng.uniform(300, 900), rng.uniform(1000, 2400), rng.uniform(2600, 4200)]
    gains = [1.0, rng.uniform(0.3, 0.8), rng.uniform(0.1, 0.4)]
    widths = [rng.uniform(80, 160), rng.uniform(120, 250), rng.uniform(200, 400)]
    t = np.arange(n) / rate
    out = np.zeros(n)
    phases = rng.uniform(0, 2 * np.pi, 64)
    for k in range(1, 64):
        f = k * f0
        if f > 7000:
            break
        amp = 0.02 + sum(g * np.exp(-0.5 * ((f - c) / w) ** 2) for g, c, w in zip(gains, formants, widths))
        out += amp * np.sin(2 * np.pi * f * t + phases[k])
    return out


def render(text: str, speaker: str, noisy: bool = False, rate: int = SOURCE_RATE) -> tuple[np.ndarray, list[int]]:
    """Waveform and per-grapheme frame counts for a normalized text."""
    vocab = default_vocab()
    seq = tokenize(normalize_text(text, default_rules(), vocab), vocab)
    symbols = [vocab.symbols[i] for i in seq.ids]
    durations = [grapheme_frames(s) for s in symbols]
    fade = int(0.004 * rate)
    ramp = 0.5 - 0.5 * np.cos(np.linspace(0, np.pi, fade))
    pieces = []
    for sym, d in zip(symbols, durations):
        n = d * FRAME_SAMPLES
        seg = grapheme_sound(sym, SPEAKER_F0[speaker], n, rate)
        seg[:fade] *= ramp
        seg[-fade:] *= ramp[::-1]
        pieces.append(seg)
    body = np.concatenate(pieces)
    body *= 0.3 / np.max(np.abs(body))
    lead, tail = np.zeros(int(0.25 * rate)), np.zeros(int(0.3 * rate))
    x = np.concatenate([lead, body, tail])
    if noisy:
        rng = np.random.default_rng(_seed("noise", text))
        x = 0.4 * x + 0.002 * rng.standard_normal(len(x))
    return x, durations


def write_corpus(root: str | Path) -> Path:
    """Write wavs, manifest, transcripts and a pipeline config under ``root``."""
    root = Path(root)
    (root / "wavs").mkdir(parents=True, exist_ok=True)
    rows = ["id\taudio_path\ttext\tspeaker\tsource\tsplit"]
    gt, tts = [], []
    for u in UTTERANCES:
        x, _ = render(u.text, u.speaker, noisy=u.source == "IVR")
        write_wav(root / "wavs" / f"{u.id}.wav", AudioBuffer(x, SOURCE_RATE))
        rows.append(f"{u.id}\twavs/{u.id}.wav\t{u.text}\t{u.speaker}\t{u.source}\t{u.split}")
        gt.append(f"{u.id}\t{u.asr_gt}")
        tts.append(f"{u.id}\t{u.asr_tts}")
    (root / "manifest.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    (root / "asr_gt.tsv").write_text("\n".join(gt) + "\n", encoding="utf-8")
    (root / "asr_tts.tsv").write_text("\n".join(tts) + "\n", encoding="utf-8")
    return root
