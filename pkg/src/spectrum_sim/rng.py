"""Named, independent random streams derived from a single master seed.

Every stochastic component of a run (fading, per-agent transmit gating,
per-agent exploration, weight initialization, ...) draws from its own
stream so that switching policy or adding components never perturbs the
draws of the others.  This is what makes paired comparisons between
policies meaningful: same master seed, same fading realization.
"""

import hashlib

import numpy as np


def stream_seed(master_seed: int, *labels) -> np.random.SeedSequence:
    """Derive a child seed sequence for the stream named by `labels`."""
    tag = "/".join(str(x) for x in labels)
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "big")
    return np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, key])


def stream(master_seed: int, *labels) -> np.random.Generator:
    """A generator for the independent stream named by `labels`."""
    return np.random.default_rng(stream_seed(master_seed, *labels))
