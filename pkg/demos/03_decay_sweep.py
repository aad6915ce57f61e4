# %% [markdown]
# # Faster collapse, fewer departures from baseline A
#
# A larger decay narrows the band sooner. Episodes stop earlier with smaller
# pools, so the router falls back to baseline A more often.

# %%
from pathlib import Path

from ddmroute.config import load_config
from ddmroute.harness import run_decay_sweep

cfg = load_config(Path(__file__).resolve().parent / "configs" / "gaussian.json").experiment_config()
report = run_decay_sweep(cfg, [0.0, 0.1, 0.2, 0.3, 0.5])

# %%
print("decay  non-A  B-chosen  mean calls  mean score")
for decay, m in report.per_decay.items():
    print(f"{decay:>5}  {m['non_baseline_a_choices']:>5}  {m['baseline_b_choices']:>8}  "
          f"{m['mean_queries']:>10.3f}  {m['mean_chosen_score']:.4f}")
print("Spearman vs decay:", report.meta["decay_correlation"])
