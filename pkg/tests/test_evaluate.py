import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.fft import idct

from kashtts.audio import AudioBuffer, write_wav
from kashtts.evaluate import (
    MCD_SCALE,
    DimensionMismatch,
    EmptyInput,
    EvalReport,
    IdMismatch,
    OrderTooLarge,
    aggregate_rows,
    dtw,
    evaluate_corpus,
    mcd,
    mcep,
    read_transcripts,
    rwer,
    wer,
)
from kashtts.features import MelSpectrogram, NormStats, mel_spectrogram, write_mel


def all_paths(n, m):
    """Every warping path from (0,0) to (n-1,m-1) with unit steps."""
    out = []

    def walk(i, j, acc):
        if (i, j) == (n - 1, m - 1):
            out.append(acc)
            return
        for di, dj in ((1, 1), (0, 1), (1, 0)):
            if i + di < n and j + dj < m:
                walk(i + di, j + dj, acc + [(i + di, j + dj)])

    walk(0, 0, [(0, 0)])
    return out


def brute_dtw(a, b):
    best = math.inf
    for p in all_paths(len(a), len(b)):
        cost = sum(float(np.sqrt(((a[i] - b[j]) ** 2).sum())) for i, j in p)
        best = min(best, cost)
    return best


def test_mcep_constant_frame():
    c = mcep(np.full((3, 80), -4.2))
    assert c.shape == (3, 13)
    assert np.max(np.abs(c)) < 1e-12


def test_mcep_single_basis_vector():
    k = 5
    coeffs = np.zeros(80)
    coeffs[k] = 2.5
    frame = idct(coeffs, type=2, norm="ortho")
    c = mcep(frame[None, :])
    expected = np.zeros(13)
    expected[k - 1] = 2.5
    np.testing.assert_allclose(c[0], expected, atol=1e-12)


def test_mcep_full_round_trip(rng):
    from scipy.fft import dct

    frames = rng.standard_normal((4, 80))
    full = dct(frames, type=2, norm="ortho", axis=1)
    np.testing.assert_allclose(mcep(frames, order=79), full[:, 1:])
    np.testing.assert_allclose(idct(full, type=2, norm="ortho", axis=1), frames, atol=1e-6)


def test_mcep_order_and_normalization_guards(rng):
    with pytest.raises(OrderTooLarge):
        mcep(rng.standard_normal((2, 80)), order=80)
    m = MelSpectrogram(rng.standard_normal((2, 80)), normalized=True)
    with pytest.raises(ValueError):
        mcep(m)
    np.testing.assert_allclose(mcep(m, stats=NormStats()), mcep(m.denormalize(NormStats())))


def test_dtw_identical_is_diagonal(rng):
    a = rng.standard_normal((6, 13))
    res = dtw(a, a)
    assert res.total_cost == 0.0
    assert res.path == [(i, i) for i in range(6)]


def test_dtw_absorbs_duplicated_frame(rng):
    a = rng.standard_normal((5, 13))
    b = np.insert(a, 3, a[2], axis=0)
    res = dtw(a, b)
    assert res.total_cost == 0.0
    steps = [(i2 - i1, j2 - j1) for (i1, j1), (i2, j2) in zip(res.path, res.path[1:])]
    assert steps.count((0, 1)) == 1 and steps.count((1, 0)) == 0


def test_dtw_matches_enumeration(rng):
    for _ in range(60):
        n, m = rng.integers(1, 7, 2)
        a, b = rng.standard_normal((n, 3)), rng.standard_normal((m, 3))
        assert abs(dtw(a, b).total_cost - brute_dtw(a, b)) < 1e-9


def test_dtw_path_shape(rng):
    res = dtw(rng.standard_normal((7, 4)), rng.standard_normal((4, 4)))
    assert res.path[0] == (0, 0) and res.path[-1] == (6, 3)
    for (i1, j1), (i2, j2) in zip(res.path, res.path[1:]):
        assert (i2 - i1, j2 - j1) in {(1, 1), (0, 1), (1, 0)}


def test_dtw_shared_tail_never_costs_more(rng):
    a, b = rng.standard_normal((5, 4)), rng.standard_normal((7, 4))
    tail = rng.standard_normal((1, 4))
    # a shared final frame can only open cheaper alignments
    assert dtw(np.vstack([a, tail]), np.vstack([b, tail])).total_cost <= dtw(a, b).total_cost + 1e-12


def test_dtw_errors():
    with pytest.raises(EmptyInput):
        dtw(np.zeros((0, 3)), np.zeros((2, 3)))


def test_mcd_constant_and_offsets(rng):
    assert MCD_SCALE == pytest.approx(6.1415, abs=1e-3)
    x = rng.standard_normal((20, 13))
    assert mcd(x, x) == 0.0
    for delta in (0.1, 0.5, 1.0):
        y = x.copy()
        y[:, 4] += delta
        assert mcd(x, y) == pytest.approx(MCD_SCALE * delta, abs=1e-3)


def test_mcd_symmetric(rng):
    for _ in range(20):
        a, b = rng.standard_normal((8, 13)), rng.standard_normal((8, 13))
        assert mcd(a, b) == pytest.approx(mcd(b, a), abs=1e-12)


def test_mcd_dimension_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        mcd(rng.standard_normal((3, 13)), rng.standard_normal((3, 12)))


# -- WER --------------------------------------------------------------------

def lev(a, b):
    """Textbook recursion, no tabulation shortcuts."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(lev(a[1:], b) + 1, lev(a, b[1:]) + 1, lev(a[1:], b[1:]) + (a[0] != b[0]))


def test_wer_examples():
    assert wer("a b c", "a b c").rate == 0
    r = wer("a b c", "a x c")
    assert (r.edits, r.n_ref_words) == (1, 3) and r.rate == pytest.approx(1 / 3)
    r = wer("a", "")
    assert (r.edits, r.rate) == (1, 1.0)
    r = wer("", "x y")
    assert (r.edits, r.rate) == (2, 2.0)


@settings(max_examples=200)
@given(st.lists(st.sampled_from("abcd"), max_size=6), st.lists(st.sampled_from("abcd"), max_size=6))
def test_wer_matches_recursive_oracle(a, b):
    assert wer(" ".join(a), " ".join(b)).edits == lev(a, b)


@settings(max_examples=200)
@given(*[st.lists(st.sampled_from("abc"), max_size=5)] * 3)
def test_wer_triangle(a, b, c):
    e = lambda x, y: wer(" ".join(x), " ".join(y)).edits
    assert e(a, c) <= e(a, b) + e(b, c)


def test_rwer_modes():
    gt = {"1": "a b c d", "2": "e f g", "3": "h i j"}
    assert rwer(gt, gt) == 0.0
    tts = dict(gt, **{"2": "e x g"})
    assert rwer(tts, gt) == pytest.approx(10.0)
    refs = {"1": "a b c d", "2": "e f g", "3": "h i k"}
    # WER_gt = 1/10, WER_tts = 2/10
    assert rwer(tts, gt, refs, mode="ratio") == pytest.approx(100.0)
    with pytest.raises(IdMismatch):
        rwer({"1": "a"}, {"2": "a"})


def test_transcript_file(tmp_path):
    (tmp_path / "t.tsv").write_text("u2\tb c\nu1\ta\n", encoding="utf-8")
    assert read_transcripts(tmp_path / "t.tsv") == {"u1": "a", "u2": "b c"}


def test_report_table_formatting():
    rep = EvalReport(model="reference", aggregates=[
        {"condition": "with_diacritics", "mean_mcd": 3.73, "rwer": 4.14, "corpus_wer": 0.6935},
        {"condition": "no_diacritics", "mean_mcd": None, "rwer": 13.23, "corpus_wer": 0.4665},
    ])
    lines = rep.table().splitlines()
    assert lines[0].split(" | ")[0].strip() == "Model"
    assert [c.strip() for c in lines[2].split("|")] == ["reference", "with_diacritics", "3.73", "4.14", "0.6935"]
    assert [c.strip() for c in lines[3].split("|")] == ["reference", "no_diacritics", "--", "13.23", "0.4665"]


# -- corpus -----------------------------------------------------------------

def _corpus(tmp_path, vocab, rng):
    ref_dir, syn_dir = tmp_path / "ref", tmp_path / "syn"
    ref_dir.mkdir(), syn_dir.mkdir()
    entries = []
    texts = ["سَتھ نَو دَہ", "کٲشُر زَبان", "اَکھ زٕ"]
    for k, text in enumerate(texts):
        uid = f"u{k}"
        t = np.arange(15000) / 22050
        buf = AudioBuffer(0.2 * np.sin(2 * np.pi * (150 + 40 * k) * t) * (1 + rng.random(len(t)) * 0.1), 22050)
        write_wav(ref_dir / f"{uid}.wav", buf)
        from kashtts.audio import read_wav

        write_mel(syn_dir / f"{uid}.mel", mel_spectrogram(read_wav(ref_dir / f"{uid}.wav")).normalize(NormStats()))
        entries.append(SimpleNamespace(id=uid, text=text))
    return entries, syn_dir, ref_dir


def test_corpus_self_evaluation(tmp_path, vocab, rng):
    entries, syn, ref = _corpus(tmp_path, vocab, rng)
    texts = {e.id: e.text for e in entries}
    rep = evaluate_corpus(entries, syn, ref, {"tts": texts, "gt": texts}, vocab)
    agg = {a["condition"]: a for a in rep.aggregates}
    assert agg["with_diacritics"]["mean_mcd"] < 1e-3
    assert agg["with_diacritics"]["corpus_wer"] == 0 and agg["no_diacritics"]["corpus_wer"] == 0
    assert agg["no_diacritics"]["mean_mcd"] is None
    assert not rep.missing


def test_corpus_partial_failure_and_recombination(tmp_path, vocab, rng):
    entries, syn, ref = _corpus(tmp_path, vocab, rng)
    (syn / "u1.mel").unlink()
    texts = {e.id: e.text for e in entries}
    tts = dict(texts, u2="اَکھ زِ")  # diacritic-only error
    rep = evaluate_corpus(entries, syn, ref, {"tts": tts, "gt": texts}, vocab)
    assert sorted({r["id"] for r in rep.utterances}) == ["u0", "u2"]
    assert [m["id"] for m in rep.missing] == ["u1"]
    again = aggregate_rows(rep.utterances)
    for a, b in zip(again, rep.aggregates):
        for key in a:
            if isinstance(a[key], float):
                assert abs(a[key] - b[key]) < 1e-9
    agg = {a["condition"]: a for a in rep.aggregates}
    assert agg["no_diacritics"]["corpus_wer"] <= agg["with_diacritics"]["corpus_wer"]
    assert agg["with_diacritics"]["corpus_wer"] > 0 and agg["no_diacritics"]["corpus_wer"] == 0
    import json

    doc = json.loads(rep.to_json())
    assert set(doc) >= {"utterances", "aggregates"}
