# coding: utf-8

# # Calibrating the recall-noise channel
#
# The noise channel corrupts a query one character at a time: delete,
# swap with the right neighbour, or replace with a look-alike from the
# same confusion group. Each level is a triple of rates, and we pick the
# rates so that the mean EditSim between a clean line and its corrupted
# copy lands on a target value.
#
# Here we calibrate on short random lines of CJK characters, the same
# shape as the synthetic corpus.

# In[1]:

import numpy as np

from anchored_retrieval.faithfulness import edit_similarity
from anchored_retrieval.noise import CJK_START, LEVELS, NoiseLevel, corrupt_query

rng = np.random.default_rng(0)
lines = ["".join(chr(CJK_START + c) for c in rng.integers(0, 400, size=10)) for _ in range(2000)]
lines[:3]


# Mean EditSim for a given set of rates. Every line gets its own seed,
# so the estimate is reproducible.

# In[2]:

def mean_editsim(level, lines=lines):
    return float(np.mean([edit_similarity(corrupt_query(t, level, (7, i)), t) for i, t in enumerate(lines)]))


# Substitution dominates. Holding deletion and transposition small, a
# coarse scan shows EditSim falling almost linearly in the substitution
# rate. Replacements within a group of 4 code points keep the original
# character a quarter of the time, so the effective rate is 3/4 of the
# nominal one.

# In[3]:

for sub in (0.0, 0.1, 0.2, 0.4, 0.6, 0.8):
    level = NoiseLevel("scan", sub, 0.02, 0.02, target_editsim=0.0)
    print(f"sub={sub:.1f}  mean EditSim={mean_editsim(level):.3f}")


# A bisection on the substitution rate, with the other two rates fixed,
# finds the value that hits a target.

# In[4]:

def calibrate(target, del_rate, trans_rate, lo=0.0, hi=0.9, steps=20):
    for _ in range(steps):
        mid = (lo + hi) / 2
        if mean_editsim(NoiseLevel("cal", mid, del_rate, trans_rate, target)) > target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


for label, level in LEVELS.items():
    found = calibrate(level.target_editsim, level.char_del_rate, level.char_transpose_rate)
    print(f"{label}: target {level.target_editsim:.3f}  bisection sub={found:.3f}  shipped sub={level.char_sub_rate:.3f}")


# The shipped levels reproduce their targets on these lines:

# In[5]:

for label, level in LEVELS.items():
    print(f"{label}: mean EditSim {mean_editsim(level):.3f} (target {level.target_editsim:.3f})")


# Finally, what a corrupted line looks like at each level.

# In[6]:

line = lines[0]
print("clean", line)
for label, level in LEVELS.items():
    print(label.ljust(5), corrupt_query(line, level, 42))
