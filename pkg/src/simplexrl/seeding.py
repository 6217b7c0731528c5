"""Named random substreams derived from one master seed.

Every stochastic component (training, evaluation, exploration noise, obstacle
field generation) pulls its own generator from the master seed and a label, so
changing one component's consumption pattern never perturbs the others.
"""

import zlib

import numpy as np


def substream(master_seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Return an independent generator for (master_seed, label, index).

    The label is hashed with crc32 so the mapping is stable across runs and
    platforms; SeedSequence mixes the words into a full-entropy stream key.
    """
    words = (int(master_seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(label.encode("utf-8")), int(index))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))
