import numpy as np

_MASK64 = (1 << 64) - 1

# every consumer of randomness draws from its own tagged stream
PURPOSES = {
    "synthetic": 1,
    "split": 2,
    "init": 3,
    "shuffle": 4,
    "patch-init": 5,
    "patch-train": 6,
    "patch-eval": 7,
}


def make_rng(seed, purpose, *streams):
    """Generator for a 64-bit seed (negative values wrap), a purpose tag and optional sub-stream ids.

    The seed becomes the entropy and (purpose, *streams) the spawn key, so no two
    purposes or stream tuples can land on the same generator state.
    """
    if purpose not in PURPOSES:
        raise ValueError(f"unknown random stream purpose {purpose!r}")
    key = [PURPOSES[purpose]]
    for stream in streams:
        stream = int(stream)
        if not 0 <= stream < 2 ** 32:
            raise ValueError(f"stream id must lie in [0, 2**32), got {stream}")
        key.append(stream)
    sequence = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(key))
    return np.random.default_rng(sequence)
