"""Enhance one noisy synthetic recording and look at what each step did.

Run: python3 demos/enhance_and_features.py
"""

import tempfile
from pathlib import Path

import numpy as np

from kashtts.audio import read_wav
from kashtts.enhance import enhance_pipeline, measure_lufs
from kashtts.evaluate import mcep
from kashtts.features import mel_spectrogram
from kashtts.fixtures import UTTERANCES, write_corpus

with tempfile.TemporaryDirectory() as tmp:
    root = write_corpus(Path(tmp))
    for utt in UTTERANCES:
        raw = read_wav(root / "wavs" / f"{utt.id}.wav")
        res = enhance_pipeline(raw)
        print(f"{utt.id} ({utt.speaker}, {utt.source}, {utt.split})")
        print(f"  {raw.sample_rate} Hz, {res.original_duration_s:.2f}s -> trimmed {res.trimmed_duration_s:.2f}s")
        print(f"  loudness {res.measured_lufs:.2f} LUFS, gain {res.applied_gain_db:+.2f} dB, "
              f"now {measure_lufs(res.buf).integrated_lufs:.2f} LUFS at {res.buf.sample_rate} Hz")
        mel = mel_spectrogram(res.buf)
        cep = mcep(mel)
        print(f"  mel {mel.data.shape}, range [{mel.data.min():.1f}, {mel.data.max():.1f}], "
              f"c0 mean {np.mean(cep[:, 0]):.2f}")
