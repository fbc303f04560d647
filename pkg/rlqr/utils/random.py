"""
Counter-based random streams keyed by (seed, purpose, index...).

Every draw in rlqr comes from a Philox generator whose key is derived from the master seed plus a tuple of
integers naming what the draw is for. Results therefore do not depend on the order in which replicates or
resamples are scheduled across processes.
"""
import math

import numpy as np

__all__ = ["COVARIATE", "EVENT_TIME", "CENSOR_TIME", "MULTIPLIER", "FIT", "stream", "derive_seed",
           "draw_multipliers", "MULTIPLIER_LAWS", "MULTIPLIER_KEYINGS"]

# Draw purposes
COVARIATE = 1
EVENT_TIME = 2
CENSOR_TIME = 3
MULTIPLIER = 4
FIT = 5

MULTIPLIER_LAWS = ("exponential", "lognormal")
# "row": the k-th draw goes to the k-th row. "subject": draws follow the subjects through any reordering.
MULTIPLIER_KEYINGS = ("row", "subject")

_LOGNORMAL_SIGMA2 = math.log(2.0)


def stream(seed, *keys):
    """
    Build an independent generator for the given seed and key path.

    Args:
        seed (int): Master seed (unsigned 64-bit).
        *keys (int): Non-negative integers identifying the substream, e.g. (EVENT_TIME, replicate).

    Returns:
        numpy.random.Generator: Philox-backed generator.
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed, *keys):
    """
    Derive a child 64-bit seed from a master seed and key path.

    Returns:
        int: unsigned 64-bit seed.
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def draw_multipliers(seed, replicate, n, law="exponential"):
    """
    Draw n positive i.i.d. multipliers with mean 1 and variance 1.

    Args:
        seed (int): Master seed.
        replicate (int): Resampling replicate index.
        n (int): Number of subjects.
        law (str): "exponential" (unit rate) or "lognormal".

    Returns:
        np.ndarray: multipliers of length n, in subject order.
    """
    rng = stream(seed, MULTIPLIER, replicate)
    if law == "exponential":
        return rng.exponential(1.0, size=n)
    if law == "lognormal":
        return rng.lognormal(mean=-_LOGNORMAL_SIGMA2 / 2.0, sigma=math.sqrt(_LOGNORMAL_SIGMA2), size=n)
    raise ValueError(f'"law" must be one of {", ".join(MULTIPLIER_LAWS)}.')
