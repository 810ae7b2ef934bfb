"""Monotonic alignment search between grapheme means and mel frames."""

from __future__ import annotations

import itertools
import math
from pathlib import Path
from typing import Mapping

import numpy as np

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class ShapeMismatch(ValueError):
    pass


class NoValidAlignment(ValueError):
    pass


class TooLarge(ValueError):
    pass


def log_likelihood_matrix(mu: np.ndarray, mel: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    """Isotropic Gaussian log-density of each mel frame under each grapheme mean.

    Returns ``L`` with ``L[i, j] = sum_d log N(mel[j, d]; mu[i, d], sigma^2)``,
    shape ``(T_text, T_mel)``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    mel = np.asarray(mel, dtype=np.float64)
    if mu.ndim != 2 or mel.ndim != 2 or mu.shape[1] != mel.shape[1]:
        raise ShapeMismatch(f"mu {mu.shape} vs mel {mel.shape}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    resid = (mel[None, :, :] - mu[:, None, :]) / sigma
    const = mu.shape[1] * (math.log(sigma) + HALF_LOG_2PI)
    return -0.5 * np.sum(resid * resid, axis=-1) - const


def _check(L: np.ndarray) -> np.ndarray:
    L = np.asarray(L, dtype=np.float64)
    if L.ndim != 2 or L.shape[0] < 1:
        raise ShapeMismatch(f"expected a (T_text, T_mel) matrix, got {L.shape}")
    if L.shape[1] < L.shape[0]:
        raise NoValidAlignment(f"{L.shape[1]} frames cannot cover {L.shape[0]} graphemes")
    if not np.all(np.isfinite(L)):
        raise ValueError("log-likelihoods must be finite")
    return L


def mas_forward(L: np.ndarray) -> np.ndarray:
    """Cumulative best-path scores ``Q`` (``-inf`` where unreachable)."""
    L = _check(L)
    n_text, n_mel = L.shape
    Q = np.full((n_text, n_mel), -np.inf)
    Q[0, 0] = L[0, 0]
    prev_shift = np.empty(n_text)
    for j in range(1, n_mel):
        prev = Q[:, j - 1]
        prev_shift[0] = -np.inf
        prev_shift[1:] = prev[:-1]
        Q[:, j] = L[:, j] + np.maximum(prev, prev_shift)
    return Q


def mas_search(L: np.ndarray) -> tuple[np.ndarray, float]:
    """Best monotone, surjective, unit-step alignment.

    Returns ``(path, score)`` where ``path[j]`` is the grapheme index of mel
    frame ``j`` and ``score`` is the sum of ``L`` along it. Among equally
    scoring paths the backtrack stays on the current grapheme.
    """
    Q = mas_forward(L)
    n_text, n_mel = Q.shape
    path = np.empty(n_mel, dtype=np.int64)
    i = n_text - 1
    path[-1] = i
    for j in range(n_mel - 1, 0, -1):
        if i > 0 and (i == j or Q[i - 1, j - 1] > Q[i, j - 1]):
            i -= 1
        path[j - 1] = i
    return path, float(Q[-1, -1])


def path_score(L: np.ndarray, path) -> float:
    s = 0.0
    for j, i in enumerate(path):
        s += L[i, j]
    return float(s)


def is_valid_path(path, n_text: int) -> bool:
    p = np.asarray(path)
    if p.size == 0 or p[0] != 0 or p[-1] != n_text - 1:
        return False
    steps = np.diff(p)
    return bool(np.all((steps == 0) | (steps == 1)))


def brute_force_align(L: np.ndarray, max_text: int = 6, max_mel: int = 10) -> tuple[np.ndarray, float]:
    """Exhaustive search over every valid path (test oracle).

    Ties resolve to the path that is largest when read from the last frame
    backwards, which is what the stay-preferring backtrack selects.
    """
    L = _check(L)
    n_text, n_mel = L.shape
    if n_text > max_text or n_mel > max_mel:
        raise TooLarge(f"{L.shape} exceeds ({max_text}, {max_mel})")
    best_key, best_path = None, None
    for moves in itertools.combinations(range(1, n_mel), n_text - 1):
        path, i, k = [], 0, 0
        for j in range(n_mel):
            if k < len(moves) and moves[k] == j:
                i += 1
                k += 1
            path.append(i)
        key = (path_score(L, path), tuple(reversed(path)))
        if best_key is None or key > best_key:
            best_key, best_path = key, path
    return np.array(best_path, dtype=np.int64), best_key[0]


def durations_from_path(path, n_text: int | None = None) -> np.ndarray:
    path = np.asarray(path, dtype=np.int64)
    n_text = int(path[-1]) + 1 if n_text is None else n_text
    return np.bincount(path, minlength=n_text)


def path_from_durations(durations) -> np.ndarray:
    durations = np.asarray(durations, dtype=np.int64)
    return np.repeat(np.arange(len(durations)), durations)


def write_alignment_grid(path: str | Path, durations: Mapping[str, np.ndarray]) -> None:
    """Debug dump: ``id<TAB>d0,d1,...`` per utterance, sorted by id."""
    lines = [f"{uid}\t{','.join(str(int(d)) for d in durations[uid])}" for uid in sorted(durations)]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_alignment_grid(path: str | Path) -> dict[str, np.ndarray]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            uid, _, durs = line.partition("\t")
            out[uid] = np.array([int(d) for d in durs.split(",")], dtype=np.int64)
    return out


def flat_start_align(utterances, max_iter: int = 20) -> list[np.ndarray]:
    """Corpus-level alignment without a trained model.

    ``utterances`` is a sequence of ``(ids, mel)`` pairs. Starting from
    uniform segmentation, alternate between estimating one mean frame per
    symbol id (pooled over the corpus) and re-aligning every utterance with
    :func:`mas_search`, until the durations stop changing.
    """
    data = [(np.asarray(ids, dtype=np.int64), np.asarray(mel, dtype=np.float64)) for ids, mel in utterances]
    for ids, mel in data:
        if len(mel) < len(ids):
            raise NoValidAlignment(f"{len(mel)} frames cannot cover {len(ids)} graphemes")
    durations = [np.diff(np.linspace(0, len(mel), len(ids) + 1).round().astype(np.int64)) for ids, mel in data]
    if not data:
        return durations
    n_sym = max(int(ids.max()) for ids, _ in data) + 1
    dim = data[0][1].shape[1]
    for _ in range(max_iter):
        sums = np.zeros((n_sym, dim))
        counts = np.zeros(n_sym)
        for (ids, mel), d in zip(data, durations):
            owner = ids[path_from_durations(d)]
            np.add.at(sums, owner, mel)
            np.add.at(counts, owner, 1)
        means = sums / np.maximum(counts, 1)[:, None]
        new = []
        for ids, mel in data:
            path, _ = mas_search(log_likelihood_matrix(means[ids], mel))
            new.append(durations_from_path(path, len(ids)))
        if all(np.array_equal(a, b) for a, b in zip(new, durations)):
            break
        durations = new
    return durations
