# %% [markdown]
# # Finite-horizon gains
#
# The controller gains come from a backward Riccati recursion.  In local
# mode every robot solves the same scalar problem `x' = x + h u`; in global
# mode the stacked problem uses the graph Laplacian as the input matrix.

# %%
import numpy as np

from lqg_rendezvous.control import CostWeights, local_riccati, synthesize
from lqg_rendezvous.graph import Topology

weights = CostWeights.scalar(q_state=1.0, r_input=1.0, q_terminal=1.0, horizon=600)
local = local_riccati(weights, h=0.1)
print("L_0, L_590, L_599:", local.gains[[0, 590, 599], 0, 0].round(6))
print("Pi_0, Pi_600:", local.pi[[0, 600], 0, 0].round(6))

# %% [markdown]
# Far from the terminal step the gain is stationary, so holding `L_0` past
# the horizon is harmless.  Heavier state weights raise the cost-to-go.

# %%
for q in (0.5, 1.0, 4.0):
    s = local_riccati(CostWeights.scalar(q, 1.0, 1.0, 600), 0.1)
    print(f"q_state={q:3}:  L_inf={s.gains[0, 0, 0]:.4f}  Pi_inf={s.pi[0, 0, 0]:.3f}")

# %% [markdown]
# Global mode on four robots returns a 4x4 gain per step.  The consensus
# direction (all ones) is in its null space: robots that agree get no input.

# %%
topo = Topology.preset("complete", 4)
glob = synthesize("global", weights, 0.1, topo)
print("global L_0:\n", glob.gains[0].round(4))
print("L_0 @ ones:", (glob.gains[0] @ np.ones(4)).round(12))
