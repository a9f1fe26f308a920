# %% [markdown]
# # Heavy tails: the embedding time has no square-root moment
#
# The stopping time inherits the first-passage tail of a mean-zero walk:
# survival decays like n^{-1/2} for positively recurrent chains and like
# n^{-1/4} for the line walk.  Running means of T^beta stabilize below the
# critical exponent and keep drifting at it.

# %%
from fractions import Fraction as F

from chainshift import ChainSpec, TargetMeasure, coin_chain
from chainshift.montecarlo import (estimate_moment, estimate_tail,
                                   first_passage_oracle, first_passage_pmf)

# %% [markdown]
# ## The driving walk, exactly and by simulation

# %%
pmf = first_passage_pmf({1: F(1, 2), -1: F(1, 2)}, 6)
print("exact first-passage mass:", {n: str(p) for n, p in pmf.items() if p})

est = first_passage_oracle({1: 0.5, -1: 0.5}, 10_000, 100_000, 99)
print(f"fitted slope: {est.slope:.3f}  ci = ({est.slope_ci[0]:.3f}, "
      f"{est.slope_ci[1]:.3f})")

# %% [markdown]
# ## Tails of the embedding time itself

# %%
est = estimate_tail(coin_chain(F(1, 2)), "tail", TargetMeasure.dirac("head"),
                    "tstar", 100_000, 30_000, 99)
print(f"fair coin:  slope = {est.slope:.3f} (expect about -1/2), "
      f"censored = {est.censored_fraction:.2%}")

est = estimate_tail(ChainSpec.srw_z(), 0, TargetMeasure.dirac(1),
                    "tstar", 100_000, 8_000, 99)
print(f"line walk:  slope = {est.slope:.3f} (expect about -1/4)")

# %% [markdown]
# ## The moment dichotomy
#
# Below exponent 1/2 the running mean settles; at 1/2 it keeps growing (the
# expectation is infinite, so any finite cap only slows the drift).  The
# divergence flag needs a generous cap to be visible; at desk scale the
# absence of the finite flag is already telling.

# %%
for beta in (0.4, 0.5):
    est = estimate_moment(coin_chain(F(1, 2)), "tail",
                          TargetMeasure.dirac("head"), "tstar", beta,
                          "T^beta", 10**7, 40_000, 4242)
    means = ", ".join(f"{n}: {m:.3f}" for n, m in est.checkpoints)
    print(f"beta = {beta}: running means {{{means}}} "
          f"finite={est.finite_flag} divergent={est.divergence_flag}")
