"""
How memory decays, and when repeated dumps help
===============================================

"""

import numpy as np

from coldcarve.memory import (HIGH_ERROR, DecayParams, MemoryImage, apply_decay, bit_error_rate,
                              decay_trials, error_cross_correlation, majority_error_rate,
                              majority_vote)

# a megabyte of set bits: every flip is a 1 -> 0 decay
image = MemoryImage(np.full(1 << 20, 0xFF, np.uint8))
decayed = apply_decay(image, HIGH_ERROR.with_seed(1))
print("measured 1->0 rate", bit_error_rate(image, decayed)[0])

# five dumps with fresh errors each time, then a bitwise majority vote
params = DecayParams(0.01, 0.0, seed=3)
independent = decay_trials(image, params, 5, "Independent")
print("independent: one dump", bit_error_rate(image, independent.trials[0])[0],
      " voted", bit_error_rate(image, majority_vote(independent))[0],
      " binomial", majority_error_rate(0.01, 5))

# the same cells decaying in every dump: voting cannot remove them
fixed = decay_trials(image, params, 5, "FixedPositions")
print("fixed positions: voted", bit_error_rate(image, majority_vote(fixed))[0])
print("error correlation between dumps")
print(np.round(error_cross_correlation(fixed, image), 3))
