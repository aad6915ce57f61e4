# %% [markdown]
# # The continuous drift-diffusion process
#
# The reference simulator integrates dX = mu dt + sigma dW with Euler-Maruyama
# and stops at the first grid point outside the (optionally collapsing) band.

# %%
import numpy as np

from ddmroute.ddm import ProcessParams, first_passage_stats, hit_probability, simulate_path
from ddmroute.engine import BoundaryPair

band = BoundaryPair(1.0, -1.0)

# %% Constant band: the simulated split matches the closed form.
for mu in (0.0, 0.2, 0.5):
    s = first_passage_stats(ProcessParams(mu, 1.0), band, 0.0, 20000, rng=1)
    print(f"mu={mu}: simulated {s.p_upper:.4f}  closed form {hit_probability(mu, 1.0, 1.0, -1.0):.4f}"
          f"  mean decision time {s.mean_hit_time:.3f}")

# %% Collapsing bands cut decision time.
for decay in (0.0, 0.5, 1.0, 2.0):
    s = first_passage_stats(ProcessParams(0.2, 1.0), band, decay, 5000, rng=2)
    print(f"decay={decay}: p_upper {s.p_upper:.3f}  mean time {s.mean_hit_time:.3f}")

# %% One path, for plotting with your tool of choice.
path = simulate_path(ProcessParams(0.3, 1.0, dt=0.01), band, 0.5, 10.0, np.random.default_rng(3))
print(path.hit, path.hit_time, len(path.values), "points")
