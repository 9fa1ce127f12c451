"""Stream-level checks of the package PRNG."""

import numpy as np

from expertfuse.rng import Xoshiro256StarStar, mix_seed


def test_same_seed_same_stream():
    a = Xoshiro256StarStar(42)
    b = Xoshiro256StarStar(42)
    assert [a.next_u64() for _ in range(64)] == [b.next_u64() for _ in range(64)]


def test_distinct_seeds_distinct_streams():
    a = Xoshiro256StarStar(1)
    b = Xoshiro256StarStar(2)
    assert [a.next_u64() for _ in range(8)] != [b.next_u64() for _ in range(8)]


def test_mix_seed_separates_substreams():
    children = {mix_seed(7, label) for label in range(16)}
    assert len(children) == 16


def test_frozen_reference_values():
    # Regression pin: the stream must never change across platforms/releases.
    gen = Xoshiro256StarStar(0)
    assert [gen.next_u64() for _ in range(3)] == [
        11091344671253066420,
        13793997310169335082,
        1900383378846508768,
    ]
    gen = Xoshiro256StarStar(123456789)
    assert gen.random() == 0.8200474410581898
    assert gen.random() == 0.8817690596997072


def test_random_in_unit_interval():
    gen = Xoshiro256StarStar(99)
    values = [gen.random() for _ in range(10_000)]
    assert all(0.0 <= v < 1.0 for v in values)
    assert abs(np.mean(values) - 0.5) < 0.02


def test_randint_bounds_and_determinism():
    gen = Xoshiro256StarStar(5)
    draws = [gen.randint(7) for _ in range(5_000)]
    assert min(draws) == 0 and max(draws) == 6
    counts = np.bincount(draws, minlength=7)
    assert counts.min() > 5_000 / 7 * 0.8


def test_bernoulli_rate():
    gen = Xoshiro256StarStar(11)
    hits = sum(gen.bernoulli(0.3) for _ in range(20_000))
    assert abs(hits / 20_000 - 0.3) < 0.02


def test_categorical_distribution():
    gen = Xoshiro256StarStar(13)
    weights = (0.5, 0.3, 0.2)
    draws = np.bincount([gen.categorical(weights) for _ in range(10_000)], minlength=3)
    assert abs(draws[0] / 10_000 - 0.5) < 0.03
    assert abs(draws[1] / 10_000 - 0.3) < 0.03
