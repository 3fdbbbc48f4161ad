"""Decode a short sentence with a hand-set CRF and compare against brute force.

Run: python3 demos/crf_decoding.py
"""

import itertools

import numpy as np

from casegraph.crf import TagSet, build_transition_mask, log_partition, masked_transitions, path_score, viterbi

tags = TagSet(("NP", "MV"))
tokens = ["Wang", "Hong", "drove", "truck", "TR-6232"]
L = tags.n_labels

# emissions favour the right labels, but "truck" is borderline
P = np.full((len(tokens), L), -1.0)
for i, lab in enumerate(["B-NP", "I-NP", "O", "B-MV", "I-MV"]):
    P[i, tags.index(lab)] = 2.0
P[3, tags.index("O")] = 1.8

A = masked_transitions(np.zeros((L + 2, L + 2)), build_transition_mask(tags))
y, score = viterbi(P, A)
print("tokens :", tokens)
print("viterbi:", tags.decode(y), f"score={score:.3f}")

paths = list(itertools.product(range(L), repeat=len(tokens)))
scores = np.array([path_score(P, A, np.array(p)) for p in paths])
print("brute  :", tags.decode(paths[int(np.argmax(scores))]), f"score={scores.max():.3f}")

lz = log_partition(P, A)
print(f"log Z  : {lz:.6f}  p(best) = {np.exp(score - lz):.4f}")
print(f"sum of path probabilities: {np.exp(scores - lz).sum():.12f}")
