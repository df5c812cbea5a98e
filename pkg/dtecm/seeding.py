"""Counter-based random substreams derived from a master seed"""

import numpy as np


def substream(master_seed, *keys):
    """
    Independent generator for ``(master_seed, *keys)``

    The same keys always give the same stream, regardless of the order in
    which substreams are requested, so batch work can run in any order or in
    parallel.

    Parameters:
        master_seed (:obj:`int`): run seed, non-negative
        keys (:obj:`int`): counters such as the drop or realization index

    Returns:
        :obj:`numpy.random.Generator`
    """
    entropy = [int(master_seed), *(int(k) for k in keys)]
    if any(value < 0 for value in entropy):
        raise ValueError("seeds and substream keys must be non-negative")
    return np.random.default_rng(entropy)


def as_generator(seed):
    """Accept a generator, an integer seed or :obj:`None`"""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
