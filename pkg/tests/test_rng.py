import numpy as np
import pytest

from uasam.engine import Rng


def test_same_seed_same_stream():
    a = Rng(42).uniform((100,))
    b = Rng(42).uniform((100,))
    assert np.array_equal(a, b)


def test_different_seeds_differ():
    assert not np.array_equal(Rng(1).uniform((64,)), Rng(2).uniform((64,)))


def test_spawn_deterministic_and_independent():
    a = Rng(5).spawn("train", 3)
    b = Rng(5).spawn("train", 3)
    c = Rng(5).spawn("train", 4)
    assert np.array_equal(a.u64(32), b.u64(32))
    assert not np.array_equal(Rng(5).spawn("train", 3).u64(32), c.u64(32))


def test_spawn_does_not_disturb_parent():
    p1 = Rng(9)
    p2 = Rng(9)
    p1.spawn("child")
    assert np.array_equal(p1.u64(16), p2.u64(16))


def test_spawn_key_types_distinct():
    r = Rng(0)
    assert not np.array_equal(r.spawn("1").u64(8), r.spawn(1).u64(8))


def test_uniform_range_and_moments():
    u = Rng(123).uniform((200_000,))
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.005
    assert abs(u.var() - 1.0 / 12.0) < 0.002


def test_normal_moments():
    x = Rng(77).normal((200_000,))
    assert abs(x.mean()) < 0.01
    assert abs(x.std() - 1.0) < 0.01
    # tail mass sanity: P(|x|>3) ~ 0.0027
    frac = np.mean(np.abs(x) > 3.0)
    assert 0.001 < frac < 0.006


def test_normal_shape_and_determinism():
    a = Rng(3).normal((4, 5))
    assert a.shape == (4, 5)
    assert np.array_equal(a, Rng(3).normal((4, 5)))


def test_permutation_is_permutation():
    r = Rng(11)
    p = r.permutation(257)
    assert sorted(p.tolist()) == list(range(257))


def test_permutation_uniformity():
    # position of element 0 over many draws should be roughly uniform
    n, trials = 8, 4000
    counts = np.zeros(n)
    r = Rng(99)
    for _ in range(trials):
        p = r.permutation(n)
        counts[np.where(p == 0)[0][0]] += 1
    expected = trials / n
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 30.0  # df=7, p<0.001 cutoff is 24.3; loose guard


def test_integers_bounds():
    v = Rng(8).integers(10_000, 7)
    assert v.min() >= 0 and v.max() < 7
    counts = np.bincount(v, minlength=7)
    assert counts.min() > 1100  # near-uniform over 7 buckets


def test_choice_and_u64():
    r = Rng(21)
    seq = ["a", "b", "c"]
    assert r.choice(seq) in seq
    w = Rng(21).u64(4)
    assert w.dtype == np.uint64 and len(w) == 4


def test_golden_values_pinned():
    # regression pin: the exact stream must never change across releases
    assert Rng(0).u64(3).tolist() == [
        11252683029561148165, 3676238079466020322, 3367336463114415325]
    assert Rng(0).spawn("x").u64(2).tolist() == [
        15320970848845514442, 15465068269359829235]
    got = [f"{v:.17g}" for v in Rng(1).uniform((3,)).tolist()]
    assert got == ["0.56497943408768481", "0.43775198935433957",
                   "0.74131365775637015"]
