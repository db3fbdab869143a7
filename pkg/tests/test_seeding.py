import numpy as np

from avgsim.seeding import MASK64, splitmix64, streams, trial_seed


def test_splitmix64_reference_value():
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_trial_seed_is_xor_of_mix():
    assert trial_seed(12345, 7) == 12345 ^ splitmix64(7)
    assert all(0 <= trial_seed(2**64 - 1, i) <= MASK64 for i in range(10))


def test_trial_seeds_distinct():
    seeds = {trial_seed(0, i) for i in range(10_000)}
    assert len(seeds) == 10_000


def test_streams_independent_and_reproducible():
    a, b = streams(5), streams(5)
    for k in ("init", "edges", "extra"):
        assert np.array_equal(a[k].integers(0, 1 << 30, 8), b[k].integers(0, 1 << 30, 8))
    s = streams(5)
    assert not np.array_equal(s["init"].integers(0, 1 << 30, 8), s["edges"].integers(0, 1 << 30, 8))
