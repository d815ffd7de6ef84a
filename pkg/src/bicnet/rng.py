"""Deterministic random-stream derivation for parallel-safe sampling.

Every sampler block draws from its own ``numpy.random.Generator`` keyed by
``(master_seed, sweep, kind, *indices)`` through ``SeedSequence``.  Streams
therefore do not depend on execution order, so serial and thread-parallel
sweeps produce bit-identical chains.

One caveat inherited from ``SeedSequence``: keys shorter than its 4-word
entropy pool are zero-padded, so ``(seed, sweep, kind)`` and
``(seed, sweep, kind, 0)`` name the same stream.  Each kind below is
always used with a fixed number of indices, which keeps every key in the
package pairwise distinct.
"""

from __future__ import annotations

import numpy as np

# Stable numeric tags for each block kind; values are part of the
# reproducibility contract and must never be reordered.
KIND_NOISE = 1
KIND_SV = 2
KIND_LOADINGS = 3
KIND_FACTORS = 4
KIND_GROUP_PROB = 5
KIND_INIT = 6
KIND_SIMULATE = 7
KIND_BEHAVIOR = 8
KIND_SCALE = 9


def stream(master_seed: int, sweep: int, kind: int, *indices: int) -> np.random.Generator:
    """Generator for one (sweep, kind, indices...) block of one chain."""
    seq = np.random.SeedSequence((master_seed, sweep, kind) + tuple(indices))
    return np.random.Generator(np.random.PCG64(seq))


def spawn_chain_seeds(master_seed: int, n_chains: int) -> list[int]:
    """Distinct per-chain master seeds derived from one user seed."""
    seq = np.random.SeedSequence(master_seed)
    return [int(s.generate_state(1, np.uint64)[0]) for s in seq.spawn(n_chains)]
