"""Objective evaluation: DTW-aligned mel-cepstral distortion, WER and relative WER."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.fft import dct

from .audio import read_wav
from .features import MelSpectrogram, NormStats, StftParams, mel_spectrogram, read_mel
from .text import Vocab, strip_diacritics

MCD_SCALE = 10.0 * math.sqrt(2.0) / math.log(10.0)
DEFAULT_ORDER = 13
CONDITIONS = ("with_diacritics", "no_diacritics")


class OrderTooLarge(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class IdMismatch(ValueError):
    pass


@dataclass
class DtwResult:
    path: list[tuple[int, int]]
    total_cost: float


def mcep(mel: MelSpectrogram | np.ndarray, order: int = DEFAULT_ORDER, stats: NormStats | None = None) -> np.ndarray:
    """Cepstra of log-mel frames: orthonormal DCT-II, coefficients ``1..order``.

    The 0th (energy) coefficient is dropped. Normalized spectrograms need
    ``stats`` so they can be mapped back to raw log-mel first.
    """
    if isinstance(mel, MelSpectrogram):
        if mel.normalized:
            if stats is None:
                raise ValueError("normalized mel needs NormStats to denormalize")
            mel = mel.denormalize(stats)
        data = mel.data
    else:
        data = np.asarray(mel, dtype=np.float64)
    if order >= data.shape[1]:
        raise OrderTooLarge(f"order {order} must be below n_mels={data.shape[1]}")
    return dct(data, type=2, norm="ortho", axis=1)[:, 1:order + 1]


def _pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1), 0.0))


def dtw(a: np.ndarray, b: np.ndarray) -> DtwResult:
    """Minimum-cost warping path with steps (1,1), (0,1), (1,0).

    Cost is the sum of Euclidean frame distances along the path. On ties the
    backtrack prefers the diagonal, then the (0,1) step, then (1,0).
    """
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    if len(a) == 0 or len(b) == 0:
        raise EmptyInput("dtw needs non-empty sequences")
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"{a.shape[1]} vs {b.shape[1]} coefficients")
    d = _pairwise(a, b)
    n, m = d.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row, prev = acc[i], acc[i - 1]
        di = d[i - 1]
        for j in range(1, m + 1):
            best = prev[j - 1]
            if row[j - 1] < best:
                best = row[j - 1]
            if prev[j] < best:
                best = prev[j]
            row[j] = di[j - 1] + best
    path = [(n - 1, m - 1)]
    i, j = n, m
    while (i, j) != (1, 1):
        diag, left, up = acc[i - 1, j - 1], acc[i, j - 1], acc[i - 1, j]
        if diag <= left and diag <= up:
            i, j = i - 1, j - 1
        elif left <= up:
            j -= 1
        else:
            i -= 1
        path.append((i - 1, j - 1))
    path.reverse()
    return DtwResult(path, float(acc[n, m]))


def mcd(ref: np.ndarray, syn: np.ndarray) -> float:
    """Mel-cepstral distortion in dB, averaged along the DTW path."""
    ref, syn = np.atleast_2d(ref), np.atleast_2d(syn)
    if ref.shape[1] != syn.shape[1]:
        raise DimensionMismatch(f"{ref.shape[1]} vs {syn.shape[1]} coefficients")
    res = dtw(ref, syn)
    idx = np.array(res.path)
    dists = np.sqrt(((ref[idx[:, 0]] - syn[idx[:, 1]]) ** 2).sum(-1))
    return float(MCD_SCALE * dists.mean())


@dataclass(frozen=True)
class WerResult:
    edits: int
    n_ref_words: int
    rate: float


def edit_distance(ref: Sequence, hyp: Sequence) -> int:
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return prev[-1]


def wer(ref_text: str, hyp_text: str) -> WerResult:
    ref, hyp = ref_text.split(), hyp_text.split()
    edits = edit_distance(ref, hyp)
    rate = edits / len(ref) if ref else float(edits)
    return WerResult(edits, len(ref), rate)


def corpus_wer(pairs: Iterable[tuple[str, str]]) -> float:
    edits = words = 0
    for ref, hyp in pairs:
        r = wer(ref, hyp)
        edits += r.edits
        words += r.n_ref_words
    return edits / words if words else float(edits)


def _check_ids(*maps: Mapping[str, str]) -> list[str]:
    keys = set(maps[0])
    for m in maps[1:]:
        if set(m) != keys:
            raise IdMismatch(f"utterance ids differ: {sorted(keys ^ set(m))}")
    return sorted(keys)


def rwer(
    tts_transcripts: Mapping[str, str],
    gt_transcripts: Mapping[str, str],
    ref_texts: Mapping[str, str] | None = None,
    mode: str = "transcript",
) -> float:
    """Relative WER in percent.

    ``transcript``: corpus WER of ASR(synthesized) against ASR(ground truth).
    ``ratio``: relative increase of WER_tts over WER_gt, both against the text.
    """
    if mode == "transcript":
        ids = _check_ids(tts_transcripts, gt_transcripts, *([ref_texts] if ref_texts is not None else []))
        return 100.0 * corpus_wer((gt_transcripts[i], tts_transcripts[i]) for i in ids)
    if mode == "ratio":
        if ref_texts is None:
            raise ValueError("ratio mode needs reference texts")
        ids = _check_ids(tts_transcripts, gt_transcripts, ref_texts)
        w_tts = corpus_wer((ref_texts[i], tts_transcripts[i]) for i in ids)
        w_gt = corpus_wer((ref_texts[i], gt_transcripts[i]) for i in ids)
        if w_gt == 0:
            return 0.0 if w_tts == 0 else math.inf
        return 100.0 * (w_tts - w_gt) / w_gt
    raise ValueError(f"unknown rWER mode {mode!r}")


def read_transcripts(path: str | Path) -> dict[str, str]:
    """``id<TAB>text`` per line."""
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            uid, _, text = line.partition("\t")
            out[uid] = text
    return out


# -- corpus report ----------------------------------------------------------

@dataclass
class EvalReport:
    model: str = "kashtts"
    utterances: list[dict] = field(default_factory=list)
    aggregates: list[dict] = field(default_factory=list)
    missing: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, indent=2, sort_keys=True)

    def table(self) -> str:
        """Plain-text table with columns Model, Condition, MCD, rWER, WER."""
        rows = [("Model", "Condition", "MCD", "rWER (%)", "WER")]
        for agg in self.aggregates:
            rows.append((
                self.model,
                agg["condition"],
                _fmt(agg.get("mean_mcd"), "{:.2f}"),
                _fmt(agg.get("rwer"), "{:.2f}"),
                _fmt(agg.get("corpus_wer"), "{:.4f}"),
            ))
        widths = [max(len(r[c]) for r in rows) for c in range(5)]
        lines = [" | ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "-+-".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def _fmt(value, spec):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "--"
    return spec.format(value)


def aggregate_rows(rows: Sequence[dict]) -> list[dict]:
    """Per-condition aggregates; a pure function of the per-utterance rows."""
    out = []
    for cond in CONDITIONS:
        sel = [r for r in rows if r["condition"] == cond]
        if not sel:
            continue
        mcds = [r["mcd"] for r in sel if r.get("mcd") is not None]
        agg = {"condition": cond, "n_utterances": len(sel),
               "mean_mcd": float(np.mean(mcds)) if mcds else None,
               "corpus_wer": None, "rwer": None, "rwer_ratio": None}
        scored = [r for r in sel if r.get("edits") is not None]
        if scored:
            words = sum(r["n_ref_words"] for r in scored)
            agg["corpus_wer"] = sum(r["edits"] for r in scored) / words if words else None
            gt_words = sum(r["gt_ref_words"] for r in scored)
            if gt_words:
                agg["rwer"] = 100.0 * sum(r["rwer_edits"] for r in scored) / gt_words
            gt_wer = sum(r["gt_edits"] for r in scored) / words if words else 0.0
            if agg["corpus_wer"] is not None and gt_wer > 0:
                agg["rwer_ratio"] = 100.0 * (agg["corpus_wer"] - gt_wer) / gt_wer
        out.append(agg)
    return out


def evaluate_corpus(
    manifest,
    syn_mels_dir: str | Path,
    ref_wavs_dir: str | Path,
    transcripts: Mapping[str, Mapping[str, str]] | None,
    vocab: Vocab,
    params: StftParams = StftParams(),
    order: int = DEFAULT_ORDER,
    model: str = "kashtts",
) -> EvalReport:
    """Score every manifest entry; missing artifacts are listed, not fatal.

    ``manifest`` items need ``id`` and ``text`` (the normalized reference text).
    ``transcripts`` maps ``"tts"`` and ``"gt"`` to ``{id: ASR transcript}``.
    """
    syn_dir, ref_dir = Path(syn_mels_dir), Path(ref_wavs_dir)
    tts = (transcripts or {}).get("tts", {})
    gt = (transcripts or {}).get("gt", {})
    report = EvalReport(model=model)
    for entry in sorted(manifest, key=lambda e: e.id):
        syn_path, ref_path = syn_dir / f"{entry.id}.mel", ref_dir / f"{entry.id}.wav"
        absent = [str(p) for p in (syn_path, ref_path) if not p.exists()]
        if absent:
            report.missing.extend({"id": entry.id, "artifact": p} for p in absent)
            continue
        syn_mel, syn_stats = read_mel(syn_path)
        ref_mel = mel_spectrogram(read_wav(ref_path), params)
        distortion = mcd(mcep(ref_mel, order), mcep(syn_mel, order, syn_stats))
        for cond in CONDITIONS:
            row = {"id": entry.id, "condition": cond, "mcd": distortion if cond == CONDITIONS[0] else None,
                   "wer": None, "edits": None, "n_ref_words": None,
                   "gt_edits": None, "rwer_edits": None, "gt_ref_words": None}
            if entry.id in tts and entry.id in gt:
                prep = (lambda s: s) if cond == CONDITIONS[0] else (lambda s: strip_diacritics(s, vocab))
                ref_text, hyp, gt_hyp = prep(entry.text), prep(tts[entry.id]), prep(gt[entry.id])
                w = wer(ref_text, hyp)
                rel = wer(gt_hyp, hyp)
                row.update(wer=w.rate, edits=w.edits, n_ref_words=w.n_ref_words,
                           gt_edits=wer(ref_text, gt_hyp).edits, rwer_edits=rel.edits,
                           gt_ref_words=rel.n_ref_words)
            report.utterances.append(row)
    report.aggregates = aggregate_rows(report.utterances)
    return report
