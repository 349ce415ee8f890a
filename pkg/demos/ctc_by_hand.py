#!/usr/bin/env python3
"""CTC on lattices small enough to check by hand.

Walks through the collapse rule, the loss on a two-frame lattice, and how
prefix beam search recovers label probabilities that a path-level view
would split across alignments.
"""

import math

import numpy as np

from eglab import ctc
from eglab.decode import beam_search, greedy_decode

# Class 0 is the blank. A path collapses by merging repeats, then dropping blanks.
for path in ([1, 1, 0, 2], [1, 0, 1], [0, 0]):
    print(f"path {path} -> label {ctc.collapse(path)}")

# Two frames, two classes, both uniform. Three of the four paths spell "a":
# (a, a), (a, -), (-, a). So p("a") = 3/4 and the loss is ln(4/3).
probs = np.full((2, 2), 0.5)
res = ctc.ctc_loss(probs, [1])
print(f"\nloss('a') = {res.neg_log_lik:.6f}   ln(4/3) = {math.log(4 / 3):.6f}")
print("logit gradient (probs minus state occupancy):")
print(res.logit_grad)

# The full label distribution, by enumerating all 4 paths
print("\nmarginal over labels:", ctc.marginal_over_labels(probs))

# A lattice where the single best path is misleading. Blank wins each frame,
# but "a" collects mass from many alignments.
probs = np.array([[0.4, 0.35, 0.25],
                  [0.4, 0.35, 0.25],
                  [0.4, 0.35, 0.25]])
print("\ngreedy label:", greedy_decode(probs))
for h in beam_search(probs, beam_width=16, k=4):
    print(f"  beam  {str(h.label):10s} p = {h.prob:.4f}")
best_path = 0.4 ** 3
print(f"best single path (all blank) has p = {best_path:.4f}; "
      f"label ('a',) totals {math.exp(-ctc.ctc_loss(probs, [1]).neg_log_lik):.4f}")
