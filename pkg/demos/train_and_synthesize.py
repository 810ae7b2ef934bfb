"""Overfit a small acoustic model on the five fixture utterances, then synthesize.

Takes about a minute on one core. The loss falls quickly, while the sampled
mels stay noisy at this budget; pass a larger step count to see them sharpen.
Run: python3 demos/train_and_synthesize.py [steps]
"""

import sys
import tempfile
from pathlib import Path

import torch

from kashtts.audio import read_wav
from kashtts.corpus import build_utterance, speaker_table, with_warm_start
from kashtts.enhance import enhance_pipeline
from kashtts.evaluate import mcd, mcep
from kashtts.features import mel_spectrogram
from kashtts.fixtures import UTTERANCES, write_corpus
from kashtts.flow import SamplerConfig
from kashtts.model import AcousticModel, ModelConfig, TrainConfig, fit_prosody_stats, make_optimizer, synthesize, train
from kashtts.text import text_to_ids

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 150
speakers = speaker_table(UTTERANCES)

with tempfile.TemporaryDirectory() as tmp:
    root = write_corpus(Path(tmp))
    bufs = {u.id: enhance_pipeline(read_wav(root / "wavs" / f"{u.id}.wav")).buf for u in UTTERANCES}

utts = with_warm_start([build_utterance(u.id, text_to_ids(u.text).ids, speakers[u.speaker], bufs[u.id])
                        for u in UTTERANCES])

torch.manual_seed(0)
model = AcousticModel(ModelConfig(n_speakers=len(speakers), decoder_hidden=128, decoder_layers=4, flow_samples=2))
fit_prosody_stats(model, utts)
cfg = TrainConfig(learning_rate=1e-3, batch_size=len(utts), seed=0)
outcome = train(model, make_optimizer(model, cfg), utts, cfg, steps, align_warmup=min(100, steps // 2))
losses = [h["l_total"] for h in outcome.history]
print(f"l_total: step 1 {losses[0]:.3f} -> step {len(losses)} {losses[-1]:.3f}")

model.eval()
for u in UTTERANCES[:2]:
    with torch.no_grad():
        out = synthesize(u.text, speakers[u.speaker], model, SamplerConfig(n_steps=10), seed=0)
    ref = mel_spectrogram(bufs[u.id])
    print(f"{u.id}: {out.n_frames} frames synthesized vs {ref.n_frames} recorded, "
          f"DTW-MCD {mcd(mcep(ref), mcep(out)):.2f} dB")
