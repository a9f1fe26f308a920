# %% [markdown]
# # When can a two-sided chain be re-centered without extra randomness?
#
# A target law nu can be embedded from start state i exactly when every
# ratio m_i nu_j / m_j is an integer.  This walks the classic instances:
# biased coins, the pair-pattern chain, and the simple walk on the line.

# %%
from fractions import Fraction as F

from chainshift import (ChainSpec, TargetMeasure, check_feasibility,
                        coin_chain, pattern_chain, stationary_measure)

# %% [markdown]
# ## Extra head in a coin sequence
#
# Reveal a tail at the origin and look for a head whose removal leaves two
# clean half-sequences.  Works exactly when 1/p is an integer.

# %%
for p in (F(1, 2), F(1, 3), F(2, 5)):
    spec = coin_chain(p)
    v = check_feasibility(spec, "tail", TargetMeasure.dirac("head"))
    ratio, _ = v.witness["head"]
    print(f"p = {p}:  tail/head weight ratio = {ratio}  ->  "
          f"{'feasible' if v.feasible else 'infeasible'}")

# %% [markdown]
# ## The inverse problem is never solvable
#
# Once the origin coin is revealed, no non-randomized shift can restore the
# plain i.i.d. law: the target would charge the start state without being a
# point mass there.

# %%
for p in (F(1, 2), F(1, 3)):
    spec = coin_chain(p)
    nu = TargetMeasure({"tail": 1 - p, "head": p})
    v = check_feasibility(spec, "tail", nu)
    print(f"p = {p}: {v.reason} -> feasible = {v.feasible}")

# %% [markdown]
# ## Two-symbol patterns
#
# Searching for the pattern head/tail must succeed from whichever pair the
# reveal produced.  All the start-state conditions hold together only at the
# fair coin.

# %%
for p in (F(1, 2), F(1, 3), F(2, 3)):
    spec = pattern_chain(p)
    nu = TargetMeasure.dirac("ht")
    verdicts = {s: check_feasibility(spec, s, nu).feasible
                for s in ("tt", "th", "hh")}
    print(f"p = {p}: per-start {verdicts} -> all = {all(verdicts.values())}")

# %% [markdown]
# ## The line walk embeds exactly the point masses

# %%
walk = ChainSpec.srw_z()
print("delta_5:", check_feasibility(walk, 0, TargetMeasure.dirac(5)).feasible)
print("uniform{1,2}:", check_feasibility(
    walk, 0, TargetMeasure({1: F(1, 2), 2: F(1, 2)})).feasible)

# %% [markdown]
# The stationary weights behind these verdicts:

# %%
print("pattern chain, p = 1/3:", stationary_measure(pattern_chain(F(1, 3))))
