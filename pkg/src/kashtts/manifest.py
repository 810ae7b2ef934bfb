"""Corpus manifests and split statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .audio import read_wav

HEADER = ("id", "audio_path", "text", "speaker", "source", "split")
SOURCES = ("RASA", "IVR")
SPLITS = ("train", "valid", "test")
SOURCE_LABELS = {"RASA": "RASA", "IVR": "IndicVoices-R"}
SPLIT_LABELS = {"train": "Train", "valid": "Validation", "test": "Test"}


class ManifestError(ValueError):
    def __init__(self, message: str, lines: tuple[int, ...] = ()):
        where = ", ".join(str(n) for n in lines)
        super().__init__(f"line {where}: {message}" if lines else message)
        self.lines = lines


class DuplicateId(ManifestError):
    pass


class BadSplit(ManifestError):
    pass


class BadSource(ManifestError):
    pass


class NonRasaEval(ManifestError):
    pass


class UnreadableAudio(OSError):
    def __init__(self, uid: str, path: Path, cause: Exception):
        super().__init__(f"{uid}: cannot read {path}: {cause}")
        self.uid = uid
        self.path = path


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    audio_path: str
    text: str
    speaker: str
    source: str
    split: str

    def resolve(self, root: str | Path) -> Path:
        p = Path(self.audio_path)
        return p if p.is_absolute() else Path(root) / p


def parse_manifest(lines: Iterable[str]) -> list[ManifestEntry]:
    """Validate TSV rows (header first). Line numbers in errors are 1-based file lines."""
    rows = iter(enumerate(lines, 1))
    try:
        _, header = next(rows)
    except StopIteration:
        raise ManifestError("empty manifest: header missing") from None
    if tuple(header.rstrip("\r\n").split("\t")) != HEADER:
        raise ManifestError(f"header must be {'<TAB>'.join(HEADER)}", (1,))
    entries, seen = [], {}
    for n, raw in rows:
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != len(HEADER):
            raise ManifestError(f"expected {len(HEADER)} columns, found {len(cols)}", (n,))
        e = ManifestEntry(*cols)
        if not e.id:
            raise ManifestError("empty id", (n,))
        if e.id in seen:
            raise DuplicateId(f"id {e.id!r} repeated", (seen[e.id], n))
        if e.split not in SPLITS:
            raise BadSplit(f"split {e.split!r} not one of {', '.join(SPLITS)}", (n,))
        if e.source not in SOURCES:
            raise BadSource(f"source {e.source!r} not one of {', '.join(SOURCES)}", (n,))
        if e.split != "train" and e.source != "RASA":
            raise NonRasaEval(f"{e.id}: {e.split} entries must come from RASA, not {e.source}", (n,))
        seen[e.id] = n
        entries.append(e)
    return entries


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh)


def audio_durations(entries: Iterable[ManifestEntry], root: str | Path) -> dict[str, float]:
    out = {}
    for e in entries:
        path = e.resolve(root)
        try:
            out[e.id] = read_wav(path).duration
        except (OSError, ValueError) as exc:
            raise UnreadableAudio(e.id, path, exc) from exc
    return out


@dataclass
class SplitStats:
    """Hours and utterance counts per (split, source) cell."""

    hours: dict = field(default_factory=lambda: {(s, src): 0.0 for s in SPLITS for src in SOURCES})
    counts: dict = field(default_factory=lambda: {(s, src): 0 for s in SPLITS for src in SOURCES})

    def split_hours(self, split: str) -> float:
        return sum(self.hours[split, src] for src in SOURCES)

    def source_hours(self, source: str) -> float:
        return sum(self.hours[s, source] for s in SPLITS)

    @property
    def total_hours(self) -> float:
        return sum(self.hours.values())

    @property
    def total_count(self) -> int:
        return sum(self.counts.values())

    def table(self) -> str:
        head = ["Split", *(SOURCE_LABELS[s] for s in SOURCES), "Total Duration"]
        rows = [head]
        for split in SPLITS:
            cells = [f"{self.hours[split, s]:.2f} h ({self.counts[split, s]:,})" for s in SOURCES]
            rows.append([SPLIT_LABELS[split], *cells, f"{self.split_hours(split):.2f} h"])
        rows.append(["Total", *(f"{self.source_hours(s):.2f} h" for s in SOURCES), f"{self.total_hours:.2f} h"])
        widths = [max(len(r[c]) for r in rows) for c in range(len(head))]
        lines = [" | ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "-+-".join("-" * w for w in widths))
        lines.insert(len(lines) - 1, lines[1])
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return {
            "cells": [{"split": s, "source": src, "hours": self.hours[s, src], "utterances": self.counts[s, src]}
                      for s in SPLITS for src in SOURCES],
            "split_hours": {s: self.split_hours(s) for s in SPLITS},
            "source_hours": {src: self.source_hours(src) for src in SOURCES},
            "total_hours": self.total_hours,
            "total_utterances": self.total_count,
        }


def manifest_stats(entries: Iterable[ManifestEntry], durations: Mapping[str, float]) -> SplitStats:
    """Aggregate ``durations`` (seconds, keyed by id) into the split/source table."""
    stats = SplitStats()
    for e in entries:
        stats.hours[e.split, e.source] += durations[e.id] / 3600.0
        stats.counts[e.split, e.source] += 1
    return stats
