import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kashtts.align import (
    NoValidAlignment,
    ShapeMismatch,
    TooLarge,
    brute_force_align,
    durations_from_path,
    is_valid_path,
    log_likelihood_matrix,
    mas_search,
    path_from_durations,
    path_score,
    read_alignment_grid,
    write_alignment_grid,
)


def test_loglik_zero_residual(rng):
    x = rng.standard_normal((3, 80))
    L = log_likelihood_matrix(x, x)
    assert np.allclose(np.diag(L), -80 * 0.5 * math.log(2 * math.pi))


def test_loglik_scalar_density():
    L = log_likelihood_matrix(np.array([[0.3]]), np.array([[1.1]]), sigma=0.7)
    expected = -0.5 * ((1.1 - 0.3) / 0.7) ** 2 - math.log(0.7) - 0.5 * math.log(2 * math.pi)
    assert L[0, 0] == pytest.approx(expected, abs=1e-12)


def test_loglik_sigma_doubling_closed_form(rng):
    mu, mel = rng.standard_normal((4, 80)), rng.standard_normal((9, 80))
    L1 = log_likelihood_matrix(mu, mel, 1.0)
    L2 = log_likelihood_matrix(mu, mel, 2.0)
    sq = ((mel[None] - mu[:, None]) ** 2).sum(-1)
    np.testing.assert_allclose(L2 - L1, 0.375 * sq - 80 * math.log(2), rtol=1e-10, atol=1e-9)


def test_loglik_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        log_likelihood_matrix(rng.standard_normal((2, 80)), rng.standard_normal((5, 79)))


def test_mas_square_is_diagonal(rng):
    L = rng.standard_normal((5, 5))
    path, score = mas_search(L)
    np.testing.assert_array_equal(path, np.arange(5))
    assert score == path_score(L, path)


def test_mas_single_grapheme(rng):
    path, _ = mas_search(rng.standard_normal((1, 7)))
    np.testing.assert_array_equal(path, np.zeros(7))


def test_mas_too_few_frames(rng):
    with pytest.raises(NoValidAlignment):
        mas_search(rng.standard_normal((4, 3)))


def test_mas_ties_prefer_staying():
    path, _ = mas_search(np.zeros((2, 4)))
    np.testing.assert_array_equal(path, [0, 1, 1, 1])
    np.testing.assert_array_equal(brute_force_align(np.zeros((2, 4)))[0], [0, 1, 1, 1])


def test_mas_matches_brute_force(rng):
    for _ in range(200):
        n_text = int(rng.integers(1, 6))
        n_mel = int(rng.integers(n_text, 9))
        if rng.random() < 0.5:
            L = rng.standard_normal((n_text, n_mel))
        else:
            L = rng.integers(-2, 3, (n_text, n_mel)).astype(float)
        path, score = mas_search(L)
        bpath, bscore = brute_force_align(L)
        assert score == bscore
        np.testing.assert_array_equal(path, bpath)


def test_mas_finds_planted_alignment(rng):
    durs = np.array([3, 1, 4, 2, 5])
    mu = rng.standard_normal((5, 80)) * 3
    mel = mu[path_from_durations(durs)] + 0.1 * rng.standard_normal((durs.sum(), 80))
    path, _ = mas_search(log_likelihood_matrix(mu, mel))
    np.testing.assert_array_equal(durations_from_path(path), durs)


@settings(max_examples=200)
@given(st.integers(1, 12), st.integers(0, 20), st.integers(0, 2 ** 31), st.floats(-50, 50))
def test_mas_invariants_and_shift_invariance(n_text, extra, seed, shift):
    L = np.random.default_rng(seed).standard_normal((n_text, n_text + extra))
    path, _ = mas_search(L)
    assert is_valid_path(path, n_text)
    assert len(np.unique(path)) == n_text
    shifted, _ = mas_search(L + shift)
    np.testing.assert_array_equal(path, shifted)


def test_brute_force_guards_and_trivial_cases():
    np.testing.assert_array_equal(brute_force_align(np.zeros((1, 1)))[0], [0])
    np.testing.assert_array_equal(brute_force_align(np.array([[1.0, -5.0], [-5.0, 1.0]]))[0], [0, 1])
    with pytest.raises(TooLarge):
        brute_force_align(np.zeros((7, 10)))


def test_durations():
    np.testing.assert_array_equal(durations_from_path(np.arange(6)), np.ones(6))
    np.testing.assert_array_equal(durations_from_path([0, 0, 1]), [2, 1])


@settings(max_examples=200)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=15))
def test_durations_path_inverse(durs):
    path = path_from_durations(durs)
    d = durations_from_path(path)
    assert d.sum() == len(path) and d.min() >= 1
    np.testing.assert_array_equal(d, durs)


def test_alignment_grid_round_trip(tmp_path):
    grid = {"b": np.array([1, 2]), "a": np.array([3])}
    write_alignment_grid(tmp_path / "g.tsv", grid)
    assert (tmp_path / "g.tsv").read_text().splitlines() == ["a\t3", "b\t1,2"]
    back = read_alignment_grid(tmp_path / "g.tsv")
    assert set(back) == {"a", "b"} and list(back["b"]) == [1, 2]
