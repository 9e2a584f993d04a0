"""Deterministic random-stream derivation.

Every stochastic step in a run draws from its own generator keyed by
(run_seed, purpose, round, client).  Streams are therefore independent of
execution order: skipping a purpose in one method arm (e.g. the baseline
never estimates a prediction prior) does not shift the draws of any other
purpose, which is what makes cross-arm trajectory comparisons exact.
"""

import numpy as np

# Purpose tags. Values are part of the reproducibility contract: changing
# them changes every derived stream.
DATA = 0        # synthetic corpus generation
PARTITION = 1   # client partitioning
INIT = 2        # model weight initialization
SELECT = 3      # per-round client sampling
PSEUDO = 4      # weak augmentations for pseudo-labeling
SUP = 5         # weak augmentations for the supervised loss
UNSUP = 6       # strong augmentations for the consistency loss
APPU = 7        # weak augmentations for per-epoch prior estimates
METRICS = 8     # evaluation-only augmentation draws


def substream(*key: int) -> np.random.Generator:
    """Generator keyed by a tuple of non-negative integers."""
    return np.random.default_rng(np.random.SeedSequence(key))


def derived_seed(*key: int) -> int:
    """Stable integer seed derived from a key tuple."""
    return int(np.random.SeedSequence(key).generate_state(1, np.uint64)[0])
