# %% [markdown]
# # Translation-strategy prompts
#
# Seven analysis prompts ask the model to study a source sentence from one
# angle each. Two instruction templates turn that analysis (or nothing) into
# a translation request.

# %%
from ddmroute import prompts

for tid in prompts.list_strategies():
    t = prompts.get_template(tid)
    print(f"{tid:<26} {t.theory.value:<24} needs {sorted(t.required_placeholders)}")

# %%
sentence = "Der Zug fährt morgen früh nach Berlin."
analysis = "A short analysis produced by the model."
print(prompts.render("intent", {"source_sentence": sentence}))
print()
print(prompts.render("analysis_based_translation", {
    "source_sentence": sentence, "analysis": analysis, "source": "German", "target": "English"}))
