#!/usr/bin/env python3
"""Exhaustive greedy max-min Hamming codebook over S9, written independently with numpy.

Identity first; each next entry maximises the minimum Hamming distance to the chosen set, ties to the
lexicographically smallest permutation. Prints the codebook in the library's text format.
Usage: codebook_oracle.py <count>
"""
import itertools
import sys

import numpy as np


def main():
    count = int(sys.argv[1]) if len(sys.argv) > 1 else 100
    perms = np.array(list(itertools.permutations(range(9))), dtype=np.uint8)
    min_dist = np.full(len(perms), 10, dtype=np.int32)
    chosen, d_min = [0], 9
    min_dist = np.minimum(min_dist, (perms != perms[0]).sum(axis=1))
    while len(chosen) < count:
        k = int(np.argmax(min_dist))
        d_min = min(d_min, int(min_dist[k]))
        chosen.append(k)
        min_dist = np.minimum(min_dist, (perms != perms[k]).sum(axis=1))
    print("# codebook grid=9 count=%d algorithm=greedy-maxmin-hamming-lex d_min=%d" % (count, d_min))
    for k in chosen:
        print(",".join(str(v) for v in perms[k]))


if __name__ == "__main__":
    main()
