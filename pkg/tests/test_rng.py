"""Frozen vectors and distribution sanity for the documented generators.

The integer outputs below were captured from this implementation once
and frozen; the splitmix64 values also agree with the published
reference sequence for the same seed, which pins the whole chain
cross-implementation.
"""

import numpy as np
import pytest

from warship_sr.rng import Xoshiro256, derive_seeds, splitmix64


def test_splitmix64_chain_frozen():
    assert derive_seeds(1234567, 5) == [
        6457827717110365317,
        3203168211198807973,
        9817491932198370423,
        4593380528125082431,
        16408922859458223821,
    ]


def test_splitmix64_step_is_pure():
    s1, v1 = splitmix64(99)
    s2, v2 = splitmix64(99)
    assert (s1, v1) == (s2, v2)
    assert 0 <= v1 < 1 << 64


def test_xoshiro_u64_frozen():
    g = Xoshiro256(0)
    assert [g.next_u64() for _ in range(4)] == [
        11091344671253066420,
        13793997310169335082,
        1900383378846508768,
        7684712102626143532,
    ]


def test_xoshiro_floats_frozen():
    g = Xoshiro256(42)
    got = [g.next_float() for _ in range(4)]
    assert got == [
        0.08386297105988216,
        0.3789802506626686,
        0.6800434110281394,
        0.9246929453253876,
    ]


def test_float_range():
    g = Xoshiro256(8)
    vals = [g.next_float() for _ in range(5000)]
    assert all(0.0 <= v < 1.0 for v in vals)


def test_permutation_frozen():
    assert list(Xoshiro256(7).permutation(10)) == [9, 5, 3, 8, 4, 1, 7, 0, 6, 2]


def test_permutation_is_a_permutation():
    for seed in range(10):
        p = Xoshiro256(seed).permutation(37)
        assert sorted(p) == list(range(37))


def test_next_below_frozen():
    g = Xoshiro256(9)
    assert [g.next_below(7) for _ in range(12)] == [0, 1, 4, 5, 0, 3, 5, 5, 6, 1, 4, 1]


def test_next_below_bounds():
    g = Xoshiro256(13)
    for n in (1, 2, 3, 10, 1000):
        for _ in range(200):
            assert 0 <= g.next_below(n) < n


def test_next_below_rejects_bad_n():
    with pytest.raises(ValueError):
        Xoshiro256(0).next_below(0)


def test_gaussian_frozen():
    g = Xoshiro256(3)
    got = [g.next_gaussian() for _ in range(4)]
    assert got == pytest.approx(
        [
            -0.5460120911299031,
            -0.6649427671341406,
            -1.7051671142459666,
            -0.36948599149267264,
        ],
        abs=0,
    )


def test_gaussian_moments():
    g = Xoshiro256(123)
    xs = np.array([g.next_gaussian() for _ in range(20000)])
    assert abs(xs.mean()) < 0.03
    assert abs(xs.std() - 1.0) < 0.03


def test_shuffle_deterministic():
    a = np.arange(50)
    b = np.arange(50)
    Xoshiro256(5).shuffle(a)
    Xoshiro256(5).shuffle(b)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, np.arange(50))


def test_seeds_differ_by_stream():
    a = Xoshiro256(1)
    b = Xoshiro256(2)
    assert [a.next_u64() for _ in range(4)] != [b.next_u64() for _ in range(4)]
