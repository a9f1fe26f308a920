# %% [markdown]
# # The scanner stopping time on a concrete path
#
# The embedding stop is the first time the normalized visit count of the
# start state is overtaken by the target-weighted visit counts.  On a window
# this is a running white-minus-coloured ball count, and each white site's
# own scan defines the allocation that matches it forward.

# %%
from fractions import Fraction as F

from chainshift import (TargetMeasure, Trajectory, allocation_view, balls,
                        coin_chain, ledger, solve_tstar, weighted_local_time)

spec = coin_chain(F(1, 2))
nu = TargetMeasure.dirac("head")
path = Trajectory.fixed(spec, ["tail", "tail", "head", "head"])
print("path:", [path.state(n) for n in range(4)])

# %% [markdown]
# ## Ledgers at each horizon
#
# Both states have stationary weight 1/2, so each visit contributes 2 units
# of normalized local time.

# %%
for n in range(4):
    led = ledger(path, (0, n))
    lhs = led.local_time("tail")
    rhs = weighted_local_time(led, nu)
    print(f"n = {n}:  L_tail = {lhs}  L_target = {rhs}  "
          f"{'stop' if lhs <= rhs else 'continue'}")

# %%
res = solve_tstar(path, "tail", nu, cap=3)
print("scanner stop:", res.time, "landing on", res.landing_state)

# %% [markdown]
# ## The ball picture
#
# Tails carry one white ball, heads one coloured ball; the deficit walks
# 1, 2, 1, 0 and first touches zero at index 3.

# %%
cfg = balls(path, (0, 3), "tail", nu)
print("white:", cfg.white)
print("coloured:", cfg.count)
print("deficit steps:", cfg.increments())

# %% [markdown]
# ## Per-site matches
#
# Scanning from every white site gives the nested matching 1 -> 2, 0 -> 3:
# the origin's match is the stopping time itself.

# %%
view = allocation_view(path, (0, 3), "tail", nu)
print("matches:", view.matches)

# %% [markdown]
# ## A sampled two-sided path
#
# The same machinery on a live trajectory: backward steps use the dual
# kernel, and the scan extends the path on demand.

# %%
traj = Trajectory(spec, "tail", master_seed=7, replica=0)
res = solve_tstar(traj, "tail", nu, cap=10_000)
traj.extend_backward(-3)
window = [traj.state(n) for n in range(-3, res.time + 1)]
print(f"T = {res.time}, path[-3..T] = {window}")
