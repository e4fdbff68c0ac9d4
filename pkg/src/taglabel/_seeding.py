"""Named random streams derived from a single root seed."""

import hashlib

import numpy as np

DEFAULT_SEED = 20240611


def stream_seed(root, name):
    """Return a 64-bit seed for the stream ``name`` under ``root``.

    The derivation only depends on ``(root, name)``, so stages can be rerun
    in isolation and still see the same randomness.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    ss = np.random.SeedSequence([int(root) & 0xFFFFFFFFFFFFFFFF, key])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream_rng(root, name):
    return np.random.default_rng(stream_seed(root, name))
