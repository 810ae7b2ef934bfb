"""Turning enhanced audio and token ids into training utterances."""

from __future__ import annotations

from dataclasses import replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .align import flat_start_align
from .audio import AudioBuffer
from .features import NormStats, StftParams, mel_spectrogram
from .model.prosody import frame_prosody
from .model.training import Utterance


def speaker_table(entries: Iterable) -> dict[str, int]:
    """Speaker name -> embedding row, studio (RASA) speakers first so row 0 is a studio voice."""
    rasa, other = set(), set()
    for e in entries:
        (rasa if e.source == "RASA" else other).add(e.speaker)
    ordered = sorted(rasa) + sorted(other - rasa)
    return {name: i for i, name in enumerate(ordered)}


def build_utterance(uid: str, ids: Sequence[int], speaker: int, buf: AudioBuffer,
                    params: StftParams = StftParams(), stats: NormStats = NormStats()) -> Utterance:
    mel = mel_spectrogram(buf, params, stats, normalize=True)
    return Utterance(uid, np.asarray(ids, dtype=np.int64), speaker, mel.data.astype(np.float32),
                     frame_prosody(buf, params))


def with_warm_start(utterances: Sequence[Utterance],
                    durations: Mapping[str, np.ndarray] | None = None) -> list[Utterance]:
    """Attach flat-start durations (computed here unless given) used while alignment warms up."""
    if durations is None:
        found = flat_start_align([(u.ids, u.mel) for u in utterances])
        durations = {u.uid: d for u, d in zip(utterances, found)}
    return [replace(u, warm_durations=np.asarray(durations[u.uid])) for u in utterances]
