# %% [markdown]
# # Stable matching, crossings, and why repairs never raise concave costs
#
# Any rule that transports the start-state visit mass onto the target mass
# can be repaired crossing by crossing until none remain; on a complete
# excursion the result is always the greedy one-sided stable matching, and
# every repair weakly lowers every concave transport cost.

# %%
from fractions import Fraction as F

import numpy as np

from chainshift import (CostFunction, TargetMeasure, Trajectory, balls,
                        coin_chain, compare_window_costs, find_crossings,
                        find_excursion_around, greedy_match,
                        random_balancing_rule, repair_all, repair_crossing,
                        verify_balance, window_cost)
from chainshift.transport import TransportRule

spec = coin_chain(F(1, 2))
nu = TargetMeasure.dirac("head")

# %% [markdown]
# ## The minimal crossing
#
# Whites at 0 and 1, one coloured ball at 2 and 3, flows 0->2 and 1->3.

# %%
theta = TransportRule((0, 3), {(0, 2): F(1), (1, 3): F(1),
                               (2, 2): F(1), (3, 3): F(1)})
print("crossings:", find_crossings(theta))
repaired = repair_crossing(theta, (0, 1, 2, 3))
print("after repair:", sorted(k for k, v in repaired.weights.items() if k[0] != k[1]))

# %%
psi = CostFunction.sqrt()
print("cost before:", window_cost(theta, (0, 3), psi))
print("cost after: ", window_cost(repaired, (0, 3), psi))
print("exact sign of the change:", compare_window_costs(repaired, theta, (0, 3), psi))

# %% [markdown]
# ## A random excursion, a random balancing rule, and the sweep
#
# repair_all on any balancing rule lands exactly on the greedy matching.

# %%
traj = Trajectory(spec, "tail", master_seed=2024, replica=0)
exc = find_excursion_around(traj, 0, "tail", nu, cap=100_000)
print("excursion:", exc.interval, "whites:", exc.balls.total_white)

rng = np.random.default_rng(5)
theta = random_balancing_rule(exc.balls, rng)
print("random rule edges:", len(theta.weights),
      "crossings:", len(find_crossings(theta)))
print("balanced:", verify_balance(theta, traj, "tail", nu, exc.interval).balanced)

# %%
swept = repair_all(theta, exc.balls)
greedy = greedy_match(exc.balls)
indicator = TransportRule.from_allocation(greedy, exc.balls)
print("sweep reaches the greedy matching:", swept == indicator)

# %% [markdown]
# ## Cost monotonicity across the whole family

# %%
for psi in (CostFunction.sqrt(), CostFunction.log1p(),
            CostFunction.capped_linear(100)):
    sign = compare_window_costs(swept, theta, exc.interval, psi)
    print(f"{psi.name}: repaired - original sign = {sign}")
