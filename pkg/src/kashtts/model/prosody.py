"""Frame and grapheme level pitch/energy targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..audio import AudioBuffer
from ..features import SampleRateMismatch, StftParams, frame_signal, mel_filterbank, stft

F0_MIN = 50.0
F0_MAX = 500.0
VOICING_THRESHOLD = 0.5
SILENCE_RMS = 1e-4


class DurationMismatch(ValueError):
    pass


@dataclass(frozen=True)
class FrameProsody:
    f0: np.ndarray  # Hz, 0 where unvoiced
    energy: np.ndarray

    def __len__(self) -> int:
        return len(self.f0)


@dataclass(frozen=True)
class ProsodyTargets:
    pitch: np.ndarray
    energy: np.ndarray

    def __post_init__(self):
        if len(self.pitch) != len(self.energy):
            raise ValueError("pitch and energy lengths differ")
        if np.any(self.pitch < 0) or np.any(self.energy < 0):
            raise ValueError("prosody targets must be non-negative")

    @property
    def voiced(self) -> np.ndarray:
        return self.pitch > 0


def frame_f0(frame: np.ndarray, sample_rate: int) -> float:
    """Autocorrelation pitch of one frame, 0.0 when unvoiced.

    Picks the smallest lag in the search range whose normalized
    autocorrelation is a local peak within 10% of the best one, which
    avoids octave-down errors on strongly periodic input.
    """
    x = frame - frame.mean()
    if np.sqrt(np.mean(x * x)) < SILENCE_RMS:
        return 0.0
    n = len(x)
    lo = int(np.floor(sample_rate / F0_MAX))
    hi = min(int(np.ceil(sample_rate / F0_MIN)), n // 2)
    spec = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(spec * np.conj(spec))[: hi + 2]
    # energy of the overlapping segments for each lag
    csum = np.concatenate([[0.0], np.cumsum(x * x)])
    lags = np.arange(hi + 2)
    head = csum[n - lags]
    tail = csum[n] - csum[lags]
    r = acf / np.sqrt(np.maximum(head * tail, 1e-20))
    seg = r[lo: hi + 1]
    best = seg.max()
    if best < VOICING_THRESHOLD:
        return 0.0
    for k in range(lo, hi + 1):
        if k == 0:
            continue
        if r[k] >= 0.9 * best and r[k] >= r[k - 1] and r[k] >= r[k + 1]:
            break
    else:
        k = lo + int(np.argmax(seg))
    a, b, c = r[k - 1], r[k], r[k + 1]
    denom = a - 2 * b + c
    shift = 0.5 * (a - c) / denom if denom < 0 else 0.0
    return float(sample_rate / (k + shift))


def frame_prosody(buf: AudioBuffer, params: StftParams = StftParams()) -> FrameProsody:
    """Per mel frame F0 (Hz) and energy (L2 norm of the linear mel magnitude)."""
    if buf.sample_rate != params.sample_rate:
        raise SampleRateMismatch(f"audio at {buf.sample_rate} Hz, features expect {params.sample_rate} Hz")
    frames = frame_signal(buf.samples, params)
    f0 = np.array([frame_f0(fr, buf.sample_rate) for fr in frames])
    power = (np.abs(stft(buf, params)) ** 2) @ mel_filterbank(params).T
    energy = np.linalg.norm(np.sqrt(power), axis=1)
    return FrameProsody(f0, energy)


def aggregate_prosody(frames: FrameProsody, durations) -> ProsodyTargets:
    """Average frame values per grapheme; unvoiced frames are left out of pitch means."""
    durations = np.asarray(durations, dtype=np.int64)
    if durations.sum() != len(frames) or np.any(durations < 0):
        raise DurationMismatch(f"durations sum to {durations.sum()}, audio has {len(frames)} frames")
    idx = np.repeat(np.arange(len(durations)), durations)
    n = len(durations)
    counts = np.maximum(np.bincount(idx, minlength=n), 1)
    energy = np.bincount(idx, weights=frames.energy, minlength=n) / counts
    voiced = frames.f0 > 0
    v_counts = np.bincount(idx, weights=voiced.astype(float), minlength=n)
    v_sums = np.bincount(idx, weights=np.where(voiced, frames.f0, 0.0), minlength=n)
    pitch = np.divide(v_sums, v_counts, out=np.zeros(n), where=v_counts > 0)
    return ProsodyTargets(pitch, energy)


def extract_prosody_targets(buf: AudioBuffer, durations, params: StftParams = StftParams()) -> ProsodyTargets:
    return aggregate_prosody(frame_prosody(buf, params), durations)
