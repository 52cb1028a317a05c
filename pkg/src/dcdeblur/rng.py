"""Deterministic random streams.

Every source of randomness in the package is a generator derived from
(seed, stream id, *coordinates), so any sample/step/epoch can be replayed
in isolation: schedules, interruption, and parallelism cannot change what
numbers a given coordinate sees.
"""

import numpy as np

# Stream ids. Values are part of the reproducibility contract: changing
# them changes every derived stream.
INIT_GENERATOR = 1
INIT_DISCRIMINATOR = 2
SHUFFLE = 3
CROP = 4
NOISE = 5
KERNEL = 6
DROPOUT = 7
EVAL_NOISE = 8
SYNTH = 9


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream at `path`, independent of all other paths."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))
