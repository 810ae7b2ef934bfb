"""Pipeline stages with content-hash caching and completion records.

Every stage writes into its own directory under the work dir and, when it
finishes, a record ``stages/<stage>.json`` holding the cache key and the
SHA-256 of every output file. A stage whose key (stage name, relevant
config, input file hashes, upstream keys) and outputs are unchanged is
skipped.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import SimpleNamespace
from typing import Callable

import numpy as np
import torch

from .align import read_alignment_grid, write_alignment_grid
from .audio import read_wav, write_wav
from .config import ConfigError, PipelineConfig
from .corpus import speaker_table, with_warm_start
from .enhance import enhance_pipeline
from .evaluate import evaluate_corpus, read_transcripts
from .features import mel_spectrogram, read_mel, write_mel
from .manifest import ManifestEntry, audio_durations, load_manifest, manifest_stats
from .model import (AcousticModel, FrameProsody, Utterance, fit_prosody_stats, load_checkpoint,
                    make_optimizer, save_checkpoint, synthesize_ids, train)
from .model.prosody import frame_prosody
from .text import default_vocab, load_rules, load_vocab, text_to_ids

log = logging.getLogger("kashtts")

STAGES = ("normalize-text", "enhance-audio", "extract-features", "align", "train", "synthesize", "evaluate",
          "stats")
UPSTREAM = {
    "normalize-text": (),
    "enhance-audio": (),
    "extract-features": ("enhance-audio",),
    "align": ("normalize-text", "extract-features"),
    "train": ("normalize-text", "extract-features", "align"),
    "synthesize": ("normalize-text", "train"),
    "evaluate": ("normalize-text", "enhance-audio", "synthesize"),
    "stats": (),
}
OUTPUT_DIR = {
    "normalize-text": "text", "enhance-audio": "audio", "extract-features": "features", "align": "align",
    "train": "model", "synthesize": "synth", "evaluate": "eval", "stats": "stats",
}
CONFIG_SECTIONS = {
    "normalize-text": (),
    "enhance-audio": ("trim", "target_lufs", "stft"),
    "extract-features": ("stft", "norm"),
    "align": (),
    "train": ("model", "train", "run"),
    "synthesize": ("sampler", "run", "train"),
    "evaluate": ("stft", "run"),
    "stats": (),
}


class MissingUpstream(RuntimeError):
    pass


@dataclass
class StageResult:
    stage: str
    cached: bool
    key: str
    outputs: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Workspace:
    def __init__(self, cfg: PipelineConfig, jobs: int = 1):
        self.cfg = cfg
        self.jobs = max(1, jobs)
        self.root = cfg.work_dir
        self.manifest_path = cfg.path("manifest")
        self.manifest_root = self.manifest_path.parent

    def dir(self, stage: str) -> Path:
        return self.root / OUTPUT_DIR[stage]

    def record_path(self, stage: str) -> Path:
        return self.root / "stages" / f"{stage}.json"

    def record(self, stage: str) -> dict | None:
        path = self.record_path(stage)
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return None

    def outputs_intact(self, record: dict) -> bool:
        for rel, digest in record["outputs"].items():
            p = self.root / rel
            if not p.is_file() or file_sha256(p) != digest:
                return False
        return True

    def entries(self) -> list[ManifestEntry]:
        return load_manifest(self.manifest_path)

    def event(self, **fields) -> None:
        path = self.root / "logs" / "pipeline.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(fields, ensure_ascii=False) + "\n")
        log.info(json.dumps(fields, ensure_ascii=False))


# -- inputs per stage ------------------------------------------------------------

def _text_resources(cfg: PipelineConfig) -> dict:
    out = {}
    for key in ("vocab", "canon_rules", "number_lexicon"):
        p = cfg.path(key)
        out[key] = file_sha256(p) if p else "builtin"
    return out


def _stage_inputs(ws: Workspace, stage: str) -> dict:
    cfg = ws.cfg
    inputs = {"manifest": file_sha256(ws.manifest_path)}
    if stage in ("normalize-text", "train", "synthesize", "evaluate"):
        inputs.update(_text_resources(cfg))
    if stage in ("enhance-audio", "stats"):
        for e in ws.entries():
            p = e.resolve(ws.manifest_root)
            inputs[f"audio/{e.id}"] = file_sha256(p) if p.is_file() else "missing"
    if stage == "evaluate":
        for key in ("asr_gt", "asr_tts"):
            p = cfg.path(key)
            inputs[key] = file_sha256(p) if p else "none"
    return inputs


def cache_key(ws: Workspace, stage: str) -> str:
    upstream = {}
    for up in UPSTREAM[stage]:
        rec = ws.record(up)
        if rec is None or not ws.outputs_intact(rec):
            raise MissingUpstream(f"{stage} needs a completed {up} stage")
        upstream[up] = rec["key"]
    payload = {
        "stage": stage,
        "config": ws.cfg.digest(*CONFIG_SECTIONS[stage]) if CONFIG_SECTIONS[stage] else "",
        "inputs": _stage_inputs(ws, stage),
        "upstream": upstream,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


# -- stage bodies -----------------------------------------------------------------

def _vocab_and_rules(cfg: PipelineConfig):
    vocab = load_vocab(cfg.path("vocab")) if cfg.path("vocab") else default_vocab()
    rules = load_rules(cfg.path("canon_rules"), cfg.path("number_lexicon"), vocab)
    return vocab, rules


def read_normalized(ws: Workspace) -> dict[str, tuple[str, list[int]]]:
    out = {}
    for line in (ws.dir("normalize-text") / "normalized.tsv").read_text(encoding="utf-8").splitlines():
        uid, text, ids = line.split("\t")
        out[uid] = (text, [int(i) for i in ids.split()])
    return out


def run_normalize_text(ws: Workspace, out: Path) -> dict:
    vocab, rules = _vocab_and_rules(ws.cfg)
    lines = []
    for e in ws.entries():
        seq = text_to_ids(e.text, rules, vocab)
        if len(seq) == 0:
            raise ValueError(f"{e.id}: text normalizes to nothing")
        lines.append(f"{e.id}\t{seq.text}\t{' '.join(map(str, seq.ids))}")
    (out / "normalized.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"utterances": len(lines)}


def _enhance_one(args) -> dict:
    uid, src, dst, trim, target, rate = args
    res = enhance_pipeline(read_wav(src), trim, target, target_rate=rate)
    if not res.dropped:
        write_wav(dst, res.buf)
    return res.log_record(uid)


def _parallel(fn: Callable, jobs: list, n_workers: int) -> list:
    if n_workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def run_enhance_audio(ws: Workspace, out: Path) -> dict:
    cfg = ws.cfg
    jobs = [(e.id, e.resolve(ws.manifest_root), out / f"{e.id}.wav", cfg.trim, cfg.target_lufs,
             cfg.stft.sample_rate) for e in ws.entries()]
    records = _parallel(_enhance_one, jobs, ws.jobs)
    with open(out / "enhance.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    dropped = [r["id"] for r in records if r["dropped"]]
    return {"utterances": len(records), "dropped": dropped}


def write_prosody(path: Path, frames: FrameProsody) -> None:
    rows = [f"{float(f)!r}\t{float(e)!r}" for f, e in zip(frames.f0, frames.energy)]
    path.write_text("f0\tenergy\n" + "".join(r + "\n" for r in rows), encoding="utf-8")


def read_prosody(path: Path) -> FrameProsody:
    data = np.loadtxt(path, delimiter="\t", skiprows=1, ndmin=2)
    return FrameProsody(data[:, 0], data[:, 1])


def _features_one(args) -> str:
    uid, wav, out_dir, params, stats = args
    buf = read_wav(wav)
    write_mel(out_dir / f"{uid}.mel", mel_spectrogram(buf, params), stats)
    write_prosody(out_dir / f"{uid}.prosody.tsv", frame_prosody(buf, params))
    return uid


def run_extract_features(ws: Workspace, out: Path) -> dict:
    cfg = ws.cfg
    audio = ws.dir("enhance-audio")
    jobs = [(e.id, audio / f"{e.id}.wav", out, cfg.stft, cfg.norm) for e in ws.entries()
            if (audio / f"{e.id}.wav").exists()]
    done = _parallel(_features_one, jobs, ws.jobs)
    return {"utterances": len(done)}


def load_utterances(ws: Workspace, entries, speakers: dict[str, int]) -> list[Utterance]:
    cfg = ws.cfg
    feats = ws.dir("extract-features")
    normalized = read_normalized(ws)
    out = []
    for e in entries:
        mel_path = feats / f"{e.id}.mel"
        if not mel_path.exists():
            continue
        mel, _ = read_mel(mel_path)
        data = mel.normalize(cfg.norm).data.astype(np.float32)
        out.append(Utterance(e.id, np.asarray(normalized[e.id][1], dtype=np.int64), speakers[e.speaker],
                             data, read_prosody(feats / f"{e.id}.prosody.tsv")))
    return out


def run_align(ws: Workspace, out: Path) -> dict:
    entries = ws.entries()
    utts = load_utterances(ws, entries, speaker_table(entries))
    warm = with_warm_start(utts)
    grid = {u.uid: u.warm_durations for u in warm}
    write_alignment_grid(out / "durations.txt", grid)
    return {"utterances": len(grid)}


def run_train(ws: Workspace, out: Path) -> dict:
    cfg = ws.cfg
    entries = ws.entries()
    speakers = speaker_table(entries)
    if len(speakers) > cfg.model.n_speakers:
        raise ConfigError(f"manifest has {len(speakers)} speakers, [model] n_speakers is {cfg.model.n_speakers}")
    vocab, _ = _vocab_and_rules(cfg)
    if len(vocab) != cfg.model.vocab_size:
        raise ConfigError(f"vocabulary has {len(vocab)} symbols, [model] vocab_size is {cfg.model.vocab_size}")
    grid = read_alignment_grid(ws.dir("align") / "durations.txt")
    train_utts = with_warm_start(load_utterances(ws, [e for e in entries if e.split == "train"], speakers), grid)
    valid_utts = load_utterances(ws, [e for e in entries if e.split == "valid"], speakers)
    if not train_utts:
        raise ValueError("no training utterances with features")
    torch.manual_seed(cfg.train.seed)
    model = AcousticModel(cfg.model)
    fit_prosody_stats(model, train_utts)
    optimizer = make_optimizer(model, cfg.train)
    outcome = train(model, optimizer, train_utts, cfg.train, cfg.run.steps, valid=valid_utts,
                    eval_every=cfg.run.eval_every, log_path=out / "train.jsonl", align_warmup=cfg.run.align_warmup)
    save_checkpoint(out / "model.ckpt", model, optimizer, step=outcome.step, vocab_digest=vocab.digest(),
                    extra={"speakers": speakers, "best_step": outcome.best_step})
    first = outcome.history[0]["l_total"] if outcome.history else None
    last = outcome.history[-1]["l_total"] if outcome.history else None
    return {"steps": outcome.step, "best_step": outcome.best_step, "first_l_total": first, "last_l_total": last}


def load_trained(ws: Workspace):
    vocab, _ = _vocab_and_rules(ws.cfg)
    ck = load_checkpoint(ws.dir("train") / "model.ckpt", vocab.digest())
    return ck.model, ck.extra.get("speakers", {})


def speaker_id(speakers: dict, name: str | None, model: AcousticModel) -> int:
    if not name:
        return model.config.studio_speaker
    if name not in speakers:
        raise ValueError(f"unknown speaker {name!r}")
    return speakers[name]


def run_synthesize(ws: Workspace, out: Path) -> dict:
    cfg = ws.cfg
    model, speakers = load_trained(ws)
    normalized = read_normalized(ws)
    done = []
    for e in ws.entries():
        if e.split not in cfg.run.synth_splits:
            continue
        spk = speaker_id(speakers, cfg.run.speaker or e.speaker, model)
        mel, _ = synthesize_ids(model, normalized[e.id][1], spk, cfg.sampler, seed=cfg.train.seed)
        write_mel(out / f"{e.id}.mel", mel, cfg.norm)
        done.append(e.id)
    return {"utterances": len(done)}


def run_evaluate(ws: Workspace, out: Path) -> dict:
    cfg = ws.cfg
    vocab, _ = _vocab_and_rules(cfg)
    normalized = read_normalized(ws)
    items = [SimpleNamespace(id=e.id, text=normalized[e.id][0]) for e in ws.entries()
             if e.split in cfg.run.eval_splits]
    transcripts = None
    if cfg.path("asr_gt") and cfg.path("asr_tts"):
        transcripts = {"gt": read_transcripts(cfg.path("asr_gt")), "tts": read_transcripts(cfg.path("asr_tts"))}
    report = evaluate_corpus(items, ws.dir("synthesize"), ws.dir("enhance-audio"), transcripts, vocab, cfg.stft)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "report.txt").write_text(report.table(), encoding="utf-8")
    return {"utterances": len(items), "missing": len(report.missing)}


def run_stats(ws: Workspace, out: Path) -> dict:
    entries = ws.entries()
    stats = manifest_stats(entries, audio_durations(entries, ws.manifest_root))
    (out / "stats.json").write_text(json.dumps(stats.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "table.txt").write_text(stats.table(), encoding="utf-8")
    return {"utterances": stats.total_count, "hours": stats.total_hours}


RUNNERS = {
    "normalize-text": run_normalize_text,
    "enhance-audio": run_enhance_audio,
    "extract-features": run_extract_features,
    "align": run_align,
    "train": run_train,
    "synthesize": run_synthesize,
    "evaluate": run_evaluate,
    "stats": run_stats,
}


def run_stage(stage: str, cfg: PipelineConfig, jobs: int = 1, force: bool = False) -> StageResult:
    """Run ``stage`` unless an intact completion record with the same cache key exists."""
    if stage not in RUNNERS:
        raise ValueError(f"unknown stage {stage!r}")
    ws = Workspace(cfg, jobs)
    key = cache_key(ws, stage)
    rec = ws.record(stage)
    if not force and rec is not None and rec["key"] == key and ws.outputs_intact(rec):
        ws.event(stage=stage, event="cached", key=key)
        return StageResult(stage, True, key, rec["outputs"], rec.get("info", {}))

    out = ws.dir(stage)
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)
    ws.record_path(stage).unlink(missing_ok=True)
    ws.event(stage=stage, event="start", key=key)
    info = RUNNERS[stage](ws, out)
    outputs = {str(p.relative_to(ws.root)): file_sha256(p) for p in sorted(out.rglob("*")) if p.is_file()}
    record = {"stage": stage, "key": key, "outputs": outputs, "info": info}
    ws.record_path(stage).parent.mkdir(parents=True, exist_ok=True)
    ws.record_path(stage).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    ws.event(stage=stage, event="done", key=key, **info)
    return StageResult(stage, False, key, outputs, info)


PIPELINE = ("normalize-text", "enhance-audio", "extract-features", "align", "train", "synthesize", "evaluate")


def with_overrides(cfg: PipelineConfig, seed: int | None = None, ode_steps: int | None = None,
                   sigma_min: float | None = None, steps: int | None = None) -> PipelineConfig:
    if seed is not None:
        cfg = cfg.replace(train=replace(cfg.train, seed=seed))
    if ode_steps is not None or sigma_min is not None:
        sampler = cfg.sampler
        sampler = replace(sampler, n_steps=ode_steps if ode_steps is not None else sampler.n_steps,
                          sigma_min=sigma_min if sigma_min is not None else sampler.sigma_min)
        cfg = cfg.replace(sampler=sampler)
    if steps is not None:
        cfg = cfg.replace(run=replace(cfg.run, steps=steps))
    return cfg


__all__ = ["MissingUpstream", "PIPELINE", "STAGES", "StageResult", "read_normalized", "run_stage", "with_overrides"]
