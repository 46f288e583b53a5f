# %% [markdown]
# # One rendezvous episode
#
# Four robots start on the corners of a 0.4 m x 0.13 m rectangle and meet
# at the centroid.  Wheel speeds are capped at 0.154 m/s, which makes the
# first second of the approach a straight-line crawl.

# %%
import numpy as np

from lqg_rendezvous import load_scenario, run_episode
from lqg_rendezvous.cli import emit_trace_csv

config = load_scenario("paper-sec5-low-noise")
trace = run_episode(config, episode_seed=7)
print(f"converged at step {trace.converged_at} ({trace.converged_at * config.h:.1f} s)")

# %%
err = np.linalg.norm(trace.true_error(), axis=2)
for k in (0, 5, 10, trace.terminated_at):
    print(f"step {k:3d}: distance to target per robot (mm) {np.round(1e3 * err[k], 2)}")

# %% [markdown]
# Wheel speeds, robot 0.  Saturation keeps both wheels at the limit until
# the commanded speed drops below it.

# %%
for k in range(0, 14, 2):
    vl, vr = trace.wheels[k, 0]
    print(f"step {k:2d}: v_l={vl:+.4f}  v_r={vr:+.4f}  |u|={np.hypot(*trace.velocity[k, 0]):.4f}")

# %%
emit_trace_csv(trace, "episode_seed7.csv")
print("trace written to episode_seed7.csv")
