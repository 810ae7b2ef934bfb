"""Corpus enhancement: edge silence trimming and BS.1770-4 loudness normalization.

The pipeline order is fixed: denoise hook -> trim -> loudness -> resample.
The denoise hook defaults to the identity; an external dereverberation or
denoising model can be passed in as any ``AudioBuffer -> AudioBuffer`` callable.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.signal import lfilter

from .audio import TARGET_RATE, AudioBuffer, resample

TARGET_LUFS = -23.0
ABSOLUTE_GATE = -70.0
RELATIVE_GATE = -10.0
BLOCK_S = 0.4
OVERLAP = 0.75
SUPPORTED_RATES = frozenset({16000, 22050, 24000, 32000, 44100, 48000})

# Analog prototype of the K-weighting pre-filter (high shelf) and RLB high-pass,
# fitted so that the bilinear transform at 48 kHz reproduces the tabulated
# BS.1770 coefficients.
_SHELF_F0 = 1681.974450955533
_SHELF_GAIN_DB = 3.999843853973347
_SHELF_Q = 0.7071752369554196
_SHELF_VB_EXP = 0.4996667741545416
_HP_F0 = 38.13547087602444
_HP_Q = 0.5003270373238773


class AllSilent(ValueError):
    pass


class TooShort(ValueError):
    pass


class Unmeasurable(ValueError):
    pass


class UnsupportedRate(ValueError):
    pass


class EnhanceError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class TrimSpec:
    threshold_db: float = 40.0
    frame_ms: float = 25.0
    keep_pad_ms: float = 10.0

    def __post_init__(self):
        if self.threshold_db <= 0 or self.frame_ms <= 0 or self.keep_pad_ms < 0:
            raise ValueError("threshold_db and frame_ms must be positive, keep_pad_ms non-negative")


@dataclass(frozen=True)
class LoudnessReading:
    integrated_lufs: float
    gated_blocks: int


def k_weighting_coefficients(sample_rate: int) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Biquad (b, a) pairs for the shelf and high-pass stages at ``sample_rate``."""
    if sample_rate not in SUPPORTED_RATES:
        raise UnsupportedRate(f"no K-weighting design for {sample_rate} Hz")
    k = math.tan(math.pi * _SHELF_F0 / sample_rate)
    vh = 10.0 ** (_SHELF_GAIN_DB / 20.0)
    vb = vh ** _SHELF_VB_EXP
    a0 = 1.0 + k / _SHELF_Q + k * k
    shelf_b = np.array([vh + vb * k / _SHELF_Q + k * k, 2.0 * (k * k - vh), vh - vb * k / _SHELF_Q + k * k]) / a0
    shelf_a = np.array([1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / _SHELF_Q + k * k) / a0])

    k = math.tan(math.pi * _HP_F0 / sample_rate)
    a0 = 1.0 + k / _HP_Q + k * k
    hp_b = np.array([1.0, -2.0, 1.0])
    hp_a = np.array([1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / _HP_Q + k * k) / a0])
    return (shelf_b, shelf_a), (hp_b, hp_a)


def k_weight(buf: AudioBuffer) -> np.ndarray:
    (b1, a1), (b2, a2) = k_weighting_coefficients(buf.sample_rate)
    return lfilter(b2, a2, lfilter(b1, a1, buf.samples))


def _block_powers(buf: AudioBuffer) -> np.ndarray:
    block = int(round(BLOCK_S * buf.sample_rate))
    step = int(round(BLOCK_S * (1.0 - OVERLAP) * buf.sample_rate))
    if len(buf) < block:
        raise TooShort(f"{buf.duration:.3f} s is shorter than one {BLOCK_S} s gating block")
    y2 = k_weight(buf) ** 2
    csum = np.concatenate([[0.0], np.cumsum(y2)])
    starts = np.arange(0, len(buf) - block + 1, step)
    return (csum[starts + block] - csum[starts]) / block


def _lufs(power):
    with np.errstate(divide="ignore"):
        return -0.691 + 10.0 * np.log10(power)


def measure_lufs(buf: AudioBuffer) -> LoudnessReading:
    """Gated integrated loudness of a mono buffer (400 ms blocks, 75 % overlap)."""
    z = np.maximum(_block_powers(buf), 0.0)
    loud = _lufs(z)
    above_abs = loud > ABSOLUTE_GATE
    if not above_abs.any():
        return LoudnessReading(-math.inf, 0)
    rel_gate = _lufs(z[above_abs].mean()) + RELATIVE_GATE
    gated = above_abs & (loud > rel_gate)
    return LoudnessReading(float(_lufs(z[gated].mean())), int(gated.sum()))


@dataclass(frozen=True)
class LoudnessResult:
    buf: AudioBuffer
    measured_lufs: float
    gain_db: float
    clipped_samples: int


def normalize_loudness(buf: AudioBuffer, target_lufs: float = TARGET_LUFS) -> LoudnessResult:
    """Apply one uniform gain so the buffer measures ``target_lufs``.

    Samples are clipped to full scale only when the gain pushes them past it;
    the number of clipped samples is reported.
    """
    reading = measure_lufs(buf)
    if not math.isfinite(reading.integrated_lufs):
        raise Unmeasurable("no block passes the absolute gate")
    gain_db = target_lufs - reading.integrated_lufs
    y = buf.samples * 10.0 ** (gain_db / 20.0)
    clipped = int(np.count_nonzero(np.abs(y) > 1.0))
    if clipped:
        y = np.clip(y, -1.0, 1.0)
    return LoudnessResult(buf.with_samples(y), reading.integrated_lufs, gain_db, clipped)


def frame_rms_db(buf: AudioBuffer, frame_ms: float) -> tuple[np.ndarray, int]:
    """Per-frame RMS in dB over non-overlapping frames (last frame may be short)."""
    hop = max(1, int(round(frame_ms * 1e-3 * buf.sample_rate)))
    n = -(-len(buf) // hop)
    padded = np.zeros(n * hop)
    padded[: len(buf)] = buf.samples
    counts = np.full(n, hop)
    counts[-1] = len(buf) - (n - 1) * hop
    ms = (padded.reshape(n, hop) ** 2).sum(axis=1) / counts
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(ms), hop


def trim_bounds(buf: AudioBuffer, spec: TrimSpec = TrimSpec()) -> tuple[int, int]:
    """Sample range ``[start, end)`` kept by :func:`trim_silence`."""
    if len(buf) == 0:
        raise AllSilent("empty buffer")
    db, hop = frame_rms_db(buf, spec.frame_ms)
    peak = db.max()
    if not np.isfinite(peak):
        raise AllSilent("no frame has energy")
    active = np.flatnonzero(np.isfinite(db) & (db >= peak - spec.threshold_db))
    pad = int(round(spec.keep_pad_ms * 1e-3 * buf.sample_rate))
    start = max(0, active[0] * hop - pad)
    end = min(len(buf), (active[-1] + 1) * hop + pad)
    return start, end


def trim_silence(buf: AudioBuffer, spec: TrimSpec = TrimSpec()) -> AudioBuffer:
    """Remove leading/trailing frames more than ``threshold_db`` below the loudest frame.

    Interior pauses are kept; the result is a contiguous slice of the input.
    """
    start, end = trim_bounds(buf, spec)
    return buf.with_samples(buf.samples[start:end])


def identity_denoise(buf: AudioBuffer) -> AudioBuffer:
    return buf


@dataclass
class EnhanceResult:
    buf: AudioBuffer | None
    dropped: bool
    original_duration_s: float
    trimmed_duration_s: float
    measured_lufs: float | None = None
    applied_gain_db: float | None = None
    clipped_samples: int = 0

    def log_record(self, utt_id: str) -> dict:
        rec = {"id": utt_id}
        rec.update({k: v for k, v in asdict(self).items() if k != "buf"})
        return rec


def enhance_pipeline(
    buf: AudioBuffer,
    spec: TrimSpec = TrimSpec(),
    target_lufs: float = TARGET_LUFS,
    denoise: Callable[[AudioBuffer], AudioBuffer] = identity_denoise,
    target_rate: int = TARGET_RATE,
) -> EnhanceResult:
    """denoise -> trim_silence -> normalize_loudness -> resample.

    An all-silent utterance comes back with ``dropped=True``; any other stage
    failure is raised as :class:`EnhanceError` naming the stage.
    """
    original = buf.duration
    try:
        buf = denoise(buf)
    except Exception as exc:
        raise EnhanceError("denoise", exc) from exc
    try:
        buf = trim_silence(buf, spec)
    except AllSilent:
        return EnhanceResult(None, True, original, 0.0)
    trimmed = buf.duration
    try:
        loud = normalize_loudness(buf, target_lufs)
    except (TooShort, Unmeasurable, UnsupportedRate) as exc:
        raise EnhanceError("loudness", exc) from exc
    try:
        out = resample(loud.buf, target_rate)
    except ValueError as exc:
        raise EnhanceError("resample", exc) from exc
    out = out.with_samples(np.clip(out.samples, -1.0, 1.0))
    return EnhanceResult(out, False, original, trimmed, loud.measured_lufs, loud.gain_db, loud.clipped_samples)
