from hypothesis import given, strategies as st

from kernelfusion.rng import XorShift64Star, splitmix64


def test_splitmix64_reference_value():
    # first output of the reference SplitMix64 stream for state 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_same_seed_same_stream():
    a, b = XorShift64Star(7), XorShift64Star(7)
    assert [a.next_u64() for _ in range(20)] == [b.next_u64() for _ in range(20)]


def test_different_seeds_differ():
    assert XorShift64Star(1).next_u64() != XorShift64Star(2).next_u64()


def test_below_is_roughly_uniform():
    g = XorShift64Star(0)
    counts = [0] * 5
    for _ in range(20000):
        counts[g.below(5)] += 1
    assert all(3700 < c < 4300 for c in counts)


@given(st.integers(0, 2**64 - 1), st.integers(0, 200))
def test_permutation_is_a_permutation(seed, n):
    assert sorted(XorShift64Star(seed).permutation(n)) == list(range(n))
