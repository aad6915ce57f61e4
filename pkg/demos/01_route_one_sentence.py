# %% [markdown]
# # Routing a single sentence
#
# Two baseline translations are scored first. Their score gap is the starting
# drift. Each prompt-guided candidate then adds its own gap to baseline A, while
# the stopping band shrinks geometrically. We stop as soon as the drift leaves
# the band.

# %%
from ddmroute import RoutingConfig, SourceItem, route
from ddmroute.providers import OfflineRecord, PassthroughScorer, provider_set_from_record

prompt_ids = ["prompt:scene_analysis", "prompt:intent", "prompt:text_type"]
record = OfflineRecord("demo", "Der Zug fährt morgen früh nach Berlin.", {
    "baseline_a": ("The train leaves for Berlin tomorrow morning.", 0.812),
    "baseline_b": ("The train goes to Berlin early tomorrow.", 0.826),
    "prompt:scene_analysis": ("Tomorrow morning the train departs for Berlin.", 0.851),
    "prompt:intent": ("The train travels to Berlin early tomorrow.", 0.829),
    "prompt:text_type": ("Early tomorrow the train leaves for Berlin.", 0.834),
})
providers = provider_set_from_record(record, "baseline_a", "baseline_b", prompt_ids)

# %% Route with the default band (+-0.05, decay 0.2) and a fixed shuffle seed.
decision = route(record.source, providers, PassthroughScorer(),
                 RoutingConfig(prompt_ids=prompt_ids, shuffle_seed=42))
print("prompt order:", decision.prompt_order)
for step in decision.trace:
    print(f"{step.step_kind.value:<10} {step.producer_id:<24} drift {step.drift_after:+.4f} "
          f"band +-{step.upper_after:.4f}{'  stop' if step.stopped else ''}")
print(decision.terminal_case.value, "->", decision.chosen.producer_id, decision.chosen.text)
print("generator calls:", decision.queries_used, "of", 2 + len(prompt_ids))

# %% [markdown]
# With a wide band nothing stops early, so every candidate is generated and
# the best-scoring one wins. This is the ALL baseline.

# %%
wide = RoutingConfig(prompt_ids=prompt_ids, shuffle_seed=42, initial_upper=1e9, initial_lower=-1e9)
d = route(record.source, providers, PassthroughScorer(), wide)
print(d.terminal_case.value, d.chosen.producer_id, d.queries_used)
