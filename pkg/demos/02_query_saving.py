# %% [markdown]
# # How many generator calls does early stopping save?
#
# Synthetic scores stand in for a quality-estimation model. Every episode
# draws all nine candidate scores once. The three methods then read that same
# draw, so their comparison is paired.

# %%
from pathlib import Path

from ddmroute.config import load_config
from ddmroute.harness import run_experiment

configs = Path(__file__).resolve().parent / "configs"

# %% A point-mass scenario where baseline A is always best: the drift falls
# below the band after the first prompt, so each episode costs 3 calls.
report = run_experiment(load_config(configs / "point_dominant.json").experiment_config())
print("point-dominant saving:", report.per_method["ddm"]["query_saving_rate_vs_all"])

# %% Gaussian scores with baseline B and the prompts slightly ahead of A.
cfg = load_config(configs / "gaussian.json").experiment_config()
report = run_experiment(cfg)
for method, m in report.per_method.items():
    print(f"{method:<12} mean score {m['mean_chosen_score']:.4f}  "
          f"mean calls {m['mean_queries']:.2f}  saving {m['query_saving_rate_vs_all']:.3f}")
print("ddm terminal cases:", report.per_method["ddm"]["terminal_case_histogram"])
