"""Deterministic random-stream derivation.

One documented rule everywhere: a stream is PCG64 seeded with
SeedSequence([master_seed, *indices]). Trial t of experiment e uses indices
(e, t + 1); index (e, 0) is reserved for auxiliary draws (random targets or
input states) of that experiment. Streams with distinct index tuples are
statistically independent, so trials may run concurrently without changing
any output byte.
"""
from __future__ import annotations

import numpy as np


def derive_stream(master_seed: int, *indices: int) -> np.random.Generator:
    """PCG64 generator for (master_seed, *indices); portable across platforms."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *[int(i) for i in indices]]))
