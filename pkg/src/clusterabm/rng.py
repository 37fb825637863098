"""Counter-based random streams.

Every uniform draw is a pure function of ``(seed, stream, day, agent)``, so
results never depend on evaluation order, batching, or worker count. The
mixing function is the SplitMix64 finalizer, applied as a keyed hash chain.
"""

import numpy as np

__all__ = ["uniforms", "generator", "STREAM_SAMPLER", "STREAM_INIT", "STREAM_TRUTH"]

STREAM_SAMPLER = 1
STREAM_INIT = 2
STREAM_TRUTH = 3

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(x):
    x = x ^ (x >> np.uint64(30))
    x = x * _C1
    x = x ^ (x >> np.uint64(27))
    x = x * _C2
    return x ^ (x >> np.uint64(31))


def _u64(value):
    return np.uint64(int(value) & _MASK)


def uniforms(seed, day, agents, stream=STREAM_SAMPLER, replicate=0):
    """Uniform draws in ``[0, 1)`` keyed by ``(seed, stream, replicate, day, agent)``.

    Parameters
    ----------
    seed : int
        64-bit run seed.
    day : int
        Simulation day.
    agents : array_like of int
        Agent ids; one draw per entry.
    stream : int
        Purpose tag so different consumers never share draws.
    replicate : int
        Monte-Carlo replicate index.

    Returns
    -------
    numpy.ndarray
        float64 array with the shape of ``agents``.
    """
    agents = np.asarray(agents, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _mix(np.array([_u64(seed)], dtype=np.uint64) + _GOLDEN)
        h = _mix(h ^ (_u64(stream) * _GOLDEN + _C1))
        h = _mix(h ^ (_u64(replicate) * _C2 + _GOLDEN))
        h = _mix(h ^ (_u64(day) * _GOLDEN + _C2))
        h = _mix(h ^ (agents * _C1 + _GOLDEN))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def generator(seed, *tags):
    """A numpy Generator derived from ``seed`` and integer tags.

    Used for one-off seeded work (graph synthesis, initialisation, k-means)
    where draws need not be addressable per agent.
    """
    words = [int(seed) & _MASK] + [int(t) & _MASK for t in tags]
    return np.random.default_rng(np.random.SeedSequence(words))
