"""STFT, mel filterbank and log-mel features with fixed analysis constants.

Framing is non-centered: frame ``t`` covers samples ``[t*hop, t*hop + win)``,
so a signal of ``n`` samples yields ``(n - win) // hop + 1`` frames.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.signal import get_window

from .audio import AudioBuffer

LOG_FLOOR = 1e-5
MEL_MAGIC = b"BBMEL1"


class InputTooShort(ValueError):
    pass


class SampleRateMismatch(ValueError):
    pass


@dataclass(frozen=True)
class StftParams:
    n_fft: int = 1024
    win_length: int = 1024
    hop_length: int = 256
    n_mels: int = 80
    f_min: float = 0.0
    f_max: float = 8000.0
    sample_rate: int = 22050
    window: str = "hann"

    def __post_init__(self):
        if not (0 < self.win_length <= self.n_fft):
            raise ValueError("need 0 < win_length <= n_fft")
        if not (0 < self.hop_length <= self.win_length):
            raise ValueError("need 0 < hop_length <= win_length")
        if not (0 <= self.f_min < self.f_max <= self.sample_rate / 2):
            raise ValueError("need 0 <= f_min < f_max <= sample_rate / 2")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.win_length:
            return 0
        return (n_samples - self.win_length) // self.hop_length + 1


@dataclass(frozen=True)
class NormStats:
    mean: float = -5.603
    std: float = 2.571

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("std must be positive")


@dataclass(frozen=True)
class MelSpectrogram:
    data: np.ndarray  # frames x n_mels
    normalized: bool = False
    params: StftParams = StftParams()

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    def normalize(self, stats: NormStats) -> "MelSpectrogram":
        if self.normalized:
            return self
        return replace(self, data=(self.data - stats.mean) / stats.std, normalized=True)

    def denormalize(self, stats: NormStats) -> "MelSpectrogram":
        if not self.normalized:
            return self
        return replace(self, data=self.data * stats.std + stats.mean, normalized=False)


@lru_cache(maxsize=8)
def analysis_window(params: StftParams) -> np.ndarray:
    win = get_window(params.window, params.win_length, fftbins=True)
    pad = params.n_fft - params.win_length
    return np.pad(win, (pad // 2, pad - pad // 2))


def frame_signal(x: np.ndarray, params: StftParams) -> np.ndarray:
    """Non-centered frames of length n_fft, shape (frames, n_fft)."""
    n = params.n_frames(len(x))
    if n == 0:
        raise InputTooShort(f"{len(x)} samples < window of {params.win_length}")
    if params.n_fft > params.win_length:
        # window is zero-padded to n_fft; frames must still start at t*hop
        x = np.pad(x, (0, params.n_fft - params.win_length))
    frames = np.lib.stride_tricks.sliding_window_view(x, params.n_fft)[:: params.hop_length]
    return frames[:n]


def stft(buf: AudioBuffer | np.ndarray, params: StftParams = StftParams()) -> np.ndarray:
    """One-sided complex STFT, shape (frames, n_fft // 2 + 1), Hann window, no centering."""
    x = buf.samples if isinstance(buf, AudioBuffer) else np.asarray(buf, dtype=np.float64)
    frames = frame_signal(x, params) * analysis_window(params)
    return np.fft.rfft(frames, n=params.n_fft, axis=-1)


def istft(spec: np.ndarray, params: StftParams = StftParams()) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`."""
    n_frames = spec.shape[0]
    win = analysis_window(params)
    frames = np.fft.irfft(spec, n=params.n_fft, axis=-1) * win
    length = (n_frames - 1) * params.hop_length + params.n_fft
    out = np.zeros(length)
    norm = np.zeros(length)
    for t in range(n_frames):
        s = t * params.hop_length
        out[s:s + params.n_fft] += frames[t]
        norm[s:s + params.n_fft] += win ** 2
    nz = norm > 1e-8
    out[nz] /= norm[nz]
    return out


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(params: StftParams = StftParams()) -> np.ndarray:
    """``n_mels + 2`` corner frequencies (Hz), equally spaced on the HTK mel scale."""
    mels = np.linspace(hz_to_mel(params.f_min), hz_to_mel(params.f_max), params.n_mels + 2)
    edges = mel_to_hz(mels)
    edges[0], edges[-1] = params.f_min, params.f_max
    return edges


@lru_cache(maxsize=8)
def mel_filterbank(params: StftParams = StftParams()) -> np.ndarray:
    """Peak-normalized triangular filters, shape (n_mels, n_fft // 2 + 1)."""
    edges = mel_band_edges(params)
    freqs = np.arange(params.n_bins) * params.sample_rate / params.n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def mel_power(buf: AudioBuffer, params: StftParams = StftParams()) -> np.ndarray:
    if buf.sample_rate != params.sample_rate:
        raise SampleRateMismatch(f"audio at {buf.sample_rate} Hz, features expect {params.sample_rate} Hz")
    spec = stft(buf, params)
    return (np.abs(spec) ** 2) @ mel_filterbank(params).T


def mel_spectrogram(
    buf: AudioBuffer,
    params: StftParams = StftParams(),
    stats: NormStats = NormStats(),
    normalize: bool = False,
) -> MelSpectrogram:
    """Natural-log mel power, floored at ``LOG_FLOOR``, optionally standardized."""
    data = np.log(np.maximum(mel_power(buf, params), LOG_FLOOR))
    mel = MelSpectrogram(data, normalized=False, params=params)
    return mel.normalize(stats) if normalize else mel


def griffin_lim(
    mel: MelSpectrogram,
    iters: int = 60,
    stats: NormStats = NormStats(),
    seed: int = 0,
) -> AudioBuffer:
    """Phase reconstruction from a log-mel spectrogram (audibility fallback only)."""
    params = mel.params
    log_mel = mel.denormalize(stats).data
    power = np.exp(log_mel)
    power[log_mel <= np.log(LOG_FLOOR) + 1e-9] = 0.0
    inv = np.linalg.pinv(mel_filterbank(params))
    mag = np.sqrt(np.maximum(power @ inv.T, 0.0))
    rng = np.random.default_rng(seed)
    spec = mag * np.exp(2j * np.pi * rng.random(mag.shape))
    x = istft(spec, params)
    for _ in range(iters):
        phase = np.angle(stft(x, params))
        x = istft(mag * np.exp(1j * phase), params)
    return AudioBuffer(np.clip(x, -1.0, 1.0), params.sample_rate)


def mel_reanalysis_error(buf: AudioBuffer, mel: MelSpectrogram, stats: NormStats = NormStats()) -> float:
    """Mean L1 distance between mel magnitudes of ``buf`` and ``mel`` (linear scale)."""
    target = np.exp(0.5 * mel.denormalize(stats).data)
    got = np.sqrt(np.maximum(mel_power(buf, mel.params), LOG_FLOOR))
    n = min(len(target), len(got))
    return float(np.mean(np.abs(got[:n] - target[:n])))


# -- persisted mel matrices --------------------------------------------------

def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".txt")


def write_mel(path: str | Path, mel: MelSpectrogram, stats: NormStats = NormStats()) -> None:
    """``BBMEL1`` + u32 frames + u32 n_mels + row-major f32, plus a ``key = value`` sidecar."""
    path = Path(path)
    data = np.ascontiguousarray(mel.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MEL_MAGIC)
        fh.write(struct.pack("<II", data.shape[0], data.shape[1]))
        fh.write(data.tobytes())
    lines = [f"{k} = {v}" for k, v in asdict(mel.params).items()]
    lines += [f"norm_mean = {stats.mean!r}", f"norm_std = {stats.std!r}", f"normalized = {mel.normalized}"]
    _sidecar(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_mel(path: str | Path) -> tuple[MelSpectrogram, NormStats]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:6] != MEL_MAGIC or len(raw) < 14:
        raise ValueError(f"{path}: not a BBMEL1 file")
    frames, n_mels = struct.unpack("<II", raw[6:14])
    if len(raw) != 14 + 4 * frames * n_mels:
        raise ValueError(f"{path}: truncated mel payload")
    data = np.frombuffer(raw, dtype="<f4", offset=14).reshape(frames, n_mels).astype(np.float64)
    fields = {}
    side = _sidecar(path)
    if side.exists():
        for line in side.read_text(encoding="utf-8").splitlines():
            key, sep, value = line.partition("=")
            if sep:
                fields[key.strip()] = value.strip()
    types = {f: type(v) for f, v in asdict(StftParams()).items()}
    params = StftParams(**{k: types[k](fields[k]) for k in types if k in fields})
    stats = NormStats(float(fields.get("norm_mean", NormStats.mean)), float(fields.get("norm_std", NormStats.std)))
    normalized = fields.get("normalized", "False") == "True"
    return MelSpectrogram(data, normalized=normalized, params=params), stats
