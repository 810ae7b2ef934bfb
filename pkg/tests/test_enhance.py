import math

import numpy as np
import pytest
from scipy.signal import freqz

from kashtts.audio import AudioBuffer
from kashtts.enhance import (
    AllSilent,
    EnhanceError,
    TooShort,
    TrimSpec,
    Unmeasurable,
    UnsupportedRate,
    enhance_pipeline,
    k_weighting_coefficients,
    measure_lufs,
    normalize_loudness,
    trim_silence,
)

# ITU-R BS.1770-4 tables 1 and 2 (48 kHz)
TABLE_SHELF_B = [1.53512485958697, -2.69169618940638, 1.19839281085285]
TABLE_SHELF_A = [1.0, -1.69065929318241, 0.73248077421585]
TABLE_HP_B = [1.0, -2.0, 1.0]
TABLE_HP_A = [1.0, -1.99004745483398, 0.99007225036621]


def sine(freq, seconds, rate, amp=1.0):
    t = np.arange(int(round(seconds * rate))) / rate
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t), rate)


def speechlike(rate, seconds=3.0, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(int(seconds * rate)) / rate
    env = 0.5 + 0.5 * np.sin(2 * np.pi * 2.5 * t) ** 2
    x = sum(np.sin(2 * np.pi * 150 * h * t) / h for h in range(1, 15))
    return AudioBuffer(0.1 * env * x + 0.005 * rng.standard_normal(len(t)), rate)


def test_redesign_reproduces_48k_table():
    (sb, sa), (hb, ha) = k_weighting_coefficients(48000)
    np.testing.assert_allclose(sb, TABLE_SHELF_B, atol=1e-10)
    np.testing.assert_allclose(sa, TABLE_SHELF_A, atol=1e-10)
    np.testing.assert_allclose(hb, TABLE_HP_B, atol=1e-10)
    np.testing.assert_allclose(ha, TABLE_HP_A, atol=1e-10)


@pytest.mark.parametrize("rate", [22050, 44100])
def test_redesign_tracks_48k_response(rate):
    freqs = np.array([20.0, 50, 100, 500, 997, 2000, 4000, 6000])

    def response(fs):
        (sb, sa), (hb, ha) = k_weighting_coefficients(fs)
        _, h1 = freqz(sb, sa, freqs, fs=fs)
        _, h2 = freqz(hb, ha, freqs, fs=fs)
        return 20 * np.log10(np.abs(h1 * h2))

    assert np.max(np.abs(response(rate) - response(48000))) < 0.25


def test_unsupported_rate():
    with pytest.raises(UnsupportedRate):
        k_weighting_coefficients(8000)


def test_silence_reads_minus_infinity():
    reading = measure_lufs(AudioBuffer(np.zeros(48000), 48000))
    assert reading.integrated_lufs == -math.inf and reading.gated_blocks == 0


def test_too_short():
    with pytest.raises(TooShort):
        measure_lufs(AudioBuffer(np.zeros(1000), 48000))


@pytest.mark.parametrize("rate", [48000, 44100, 22050])
def test_full_scale_997hz_sine(rate):
    # K-weighting adds +0.69 dB at 997 Hz, cancelling the -0.691 offset:
    # a 0 dBFS mono sine reads 10*log10(0.5) = -3.01 LUFS.
    reading = measure_lufs(sine(997, 5.0, rate))
    assert reading.integrated_lufs == pytest.approx(-3.01, abs=0.05)
    assert reading.gated_blocks == 47


def test_block_count_and_gating_of_quiet_tail():
    loud = sine(997, 2.0, 48000, amp=0.5).samples
    quiet = sine(997, 2.0, 48000, amp=0.5 * 10 ** (-30 / 20)).samples
    reading = measure_lufs(AudioBuffer(np.concatenate([loud, quiet]), 48000))
    only_loud = measure_lufs(AudioBuffer(loud, 48000))
    # 17 all-loud blocks + 3 straddling blocks pass; the 17 blocks 30 dB down are gated
    assert reading.gated_blocks == 20
    assert only_loud.gated_blocks == 17
    assert abs(reading.integrated_lufs - only_loud.integrated_lufs) < 0.5


@pytest.mark.parametrize("gain_db", [-20.0, -6.0, 6.0])
def test_gain_covariance(gain_db):
    buf = speechlike(22050)
    base = measure_lufs(buf).integrated_lufs
    scaled = buf.with_samples(buf.samples * 10 ** (gain_db / 20))
    assert measure_lufs(scaled).integrated_lufs - base == pytest.approx(gain_db, abs=0.1)


def test_normalize_to_target():
    res = normalize_loudness(sine(997, 5.0, 48000), -23.0)
    assert res.gain_db == pytest.approx(-23.0 - res.measured_lufs)
    assert measure_lufs(res.buf).integrated_lufs == pytest.approx(-23.0, abs=0.2)
    assert res.clipped_samples == 0


def test_normalize_fixed_point_and_idempotence():
    first = normalize_loudness(speechlike(22050), -23.0)
    second = normalize_loudness(first.buf, -23.0)
    assert abs(second.gain_db) < 0.2
    assert measure_lufs(second.buf).integrated_lufs == pytest.approx(-23.0, abs=0.2)


def test_normalize_reports_clipping():
    quiet = speechlike(22050)
    res = normalize_loudness(quiet, -1.0)
    assert res.clipped_samples > 0
    assert np.max(np.abs(res.buf.samples)) <= 1.0


def test_normalize_silence_is_unmeasurable():
    with pytest.raises(Unmeasurable):
        normalize_loudness(AudioBuffer(np.zeros(22050), 22050))


# -- trimming -------------------------------------------------------------

def test_trim_exact_burst_between_zeros():
    rate = 16000
    hop = 400  # 25 ms
    burst = np.ones(6 * hop)
    x = np.concatenate([np.zeros(3 * hop), burst, np.zeros(5 * hop)])
    out = trim_silence(AudioBuffer(x, rate), TrimSpec(keep_pad_ms=0))
    np.testing.assert_array_equal(out.samples, burst)


def test_trim_keeps_padding():
    rate = 16000
    x = np.concatenate([np.zeros(4000), np.ones(4000), np.zeros(4000)])
    out = trim_silence(AudioBuffer(x, rate), TrimSpec(keep_pad_ms=10))
    assert len(out) == 4000 + 2 * 160


def test_trim_all_loud_unchanged():
    buf = sine(440, 1.0, 22050, amp=0.5)
    assert trim_silence(buf).samples.tobytes() == buf.samples.tobytes()


def test_trim_flanks_below_threshold():
    rate = 22050
    burst = sine(300, 0.5, rate, amp=10 ** (-20 / 20) * math.sqrt(2)).samples  # RMS -20 dBFS
    flank = sine(300, 0.3, rate, amp=10 ** (-70 / 20) * math.sqrt(2)).samples  # RMS -70 dBFS
    x = np.concatenate([flank, burst, flank])
    out = trim_silence(AudioBuffer(x, rate), TrimSpec(keep_pad_ms=0))
    assert len(out) < len(burst) + 2 * 552
    assert len(out) >= len(burst) - 2 * 552
    # a flank only 30 dB down survives
    flank_hi = flank * 10 ** (40 / 20)
    kept = trim_silence(AudioBuffer(np.concatenate([flank_hi, burst, flank_hi]), rate))
    assert len(kept) == len(x)


def test_trim_keeps_interior_pause_and_is_contiguous():
    rate = 16000
    x = np.concatenate([np.zeros(800), np.ones(800), np.zeros(3200), np.ones(800), np.zeros(800)])
    out = trim_silence(AudioBuffer(x, rate), TrimSpec(keep_pad_ms=0))
    np.testing.assert_array_equal(out.samples, x[800:800 + 4800])


def test_trim_all_silent():
    with pytest.raises(AllSilent):
        trim_silence(AudioBuffer(np.zeros(1000), 16000))


# -- pipeline -------------------------------------------------------------

def test_pipeline_fixed_point():
    buf = normalize_loudness(speechlike(22050), -23.0).buf
    res = enhance_pipeline(buf)
    assert not res.dropped
    assert len(res.buf) == len(buf)
    assert res.trimmed_duration_s == res.original_duration_s
    assert abs(res.applied_gain_db) < 0.2
    assert np.max(np.abs(res.buf.samples - buf.samples)) < 0.03 * np.max(np.abs(buf.samples))


def test_pipeline_noisy_padded_fixture():
    rng = np.random.default_rng(3)
    rate = 44100
    speech = speechlike(rate, 2.0).samples
    pad = 1e-4 * rng.standard_normal(rate // 2)
    buf = AudioBuffer(np.concatenate([pad, speech, pad]), rate)
    res = enhance_pipeline(buf)
    assert res.buf.sample_rate == 22050
    assert res.buf.duration < buf.duration
    assert res.trimmed_duration_s < res.original_duration_s
    assert measure_lufs(res.buf).integrated_lufs == pytest.approx(-23.0, abs=0.2)
    rec = res.log_record("u1")
    assert set(rec) == {"id", "original_duration_s", "trimmed_duration_s", "measured_lufs",
                        "applied_gain_db", "clipped_samples", "dropped"}


def test_pipeline_drops_silence():
    res = enhance_pipeline(AudioBuffer(np.zeros(22050), 22050))
    assert res.dropped and res.buf is None


def test_pipeline_denoise_hook_and_stage_errors():
    calls = []

    def hook(buf):
        calls.append(len(buf))
        return buf

    enhance_pipeline(speechlike(22050), denoise=hook)
    assert calls
    with pytest.raises(EnhanceError) as exc:
        enhance_pipeline(AudioBuffer(np.ones(100), 22050))
    assert exc.value.stage == "loudness"

    def broken(buf):
        raise RuntimeError("model missing")

    with pytest.raises(EnhanceError) as exc:
        enhance_pipeline(speechlike(22050), denoise=broken)
    assert exc.value.stage == "denoise"
