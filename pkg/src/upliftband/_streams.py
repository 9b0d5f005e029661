"""Deterministic random-number streams.

Every stochastic step in the library draws from a Philox counter-based
generator. A stream is addressed by a 128-bit key plus a stream index that
is planted in the upper words of the Philox counter, so any number of
streams can be opened from one key without coordination and the result of a
parallel run never depends on scheduling order.

Keys for nested scopes (replication k of experiment X, ...) are derived
with ``derive_key``, which feeds the integer parts through numpy's
``SeedSequence`` hash. The derivation is stable across platforms and numpy
versions.
"""

from __future__ import annotations

import numpy as np

_MASK_64 = (1 << 64) - 1
_MASK_128 = (1 << 128) - 1


def derive_key(*parts: int) -> int:
    """Hash a tuple of non-negative integers into a 128-bit stream key.

    The encoding is self-delimiting (each part carries its word count and
    the tuple its length), so distinct tuples never collide through the
    trailing-zero padding of ``SeedSequence`` entropy.
    """
    if not parts:
        raise ValueError("derive_key needs at least one integer part")
    flat: list[int] = []
    for p in parts:
        p = int(p)
        if p < 0:
            raise ValueError("stream key parts must be non-negative")
        # SeedSequence entropy words are uint32; split large ints losslessly.
        n_words = 0
        while True:
            flat.append(p & 0xFFFFFFFF)
            n_words += 1
            p >>= 32
            if p == 0:
                break
        flat.append(n_words)
    flat.append(len(parts))
    state = np.random.SeedSequence(flat).generate_state(4, dtype=np.uint32)
    out = 0
    for i, w in enumerate(state):
        out |= int(w) << (32 * i)
    return out


def stream(key: int, index: int = 0) -> np.random.Generator:
    """Open stream ``index`` under ``key``.

    The index occupies counter words 1..3, leaving 2^64 counter blocks
    (2^66 draws) of headroom per stream before any overlap is possible.
    """
    if index < 0:
        raise ValueError("stream index must be non-negative")
    bit_gen = np.random.Philox(key=int(key) & _MASK_128, counter=int(index) << 64)
    return np.random.Generator(bit_gen)


# Scope tags for derive_key so unrelated pipeline stages never share a stream.
SCOPE_ALLOCATE = 1
SCOPE_SAMPLE = 2
SCOPE_BOOTSTRAP = 3
SCOPE_DGP = 4
SCOPE_SCORE_NOISE = 5
SCOPE_TRAIN = 6
SCOPE_ORACLE = 7
SCOPE_REPLICATION = 8
