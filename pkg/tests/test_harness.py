import json
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from ddmroute.engine import RoutingConfig
from ddmroute.errors import InvalidConfig, RecordNotFound
from ddmroute.harness import (
    CSV_FIELDS,
    ExperimentConfig,
    ExperimentError,
    report_from_dict,
    run_decay_sweep,
    run_experiment,
)
from ddmroute.providers import GeneratorSpec, OfflineRecord

from conftest import A, B, scenario


def _by(report, method):
    return [r for r in report.episode_records if r.method == method]


def test_point_dominant_all_lower_hit():
    r = run_experiment(scenario("point_dominant"))
    ddm = r.per_method["ddm"]
    assert ddm["terminal_case_histogram"] == {"upper_hit": 0, "exhausted": 0, "lower_hit": 100}
    assert ddm["mean_queries"] == 3
    # 1 - 3/9
    assert ddm["query_saving_rate_vs_all"] == pytest.approx(2 / 3, abs=1e-12)
    assert ddm["producer_choice_histogram"] == {A: 100}
    assert r.per_method["all"]["mean_queries"] == 9
    assert r.per_method["max_routing"]["mean_queries"] == 2


def test_zero_evidence_exhausts():
    r = run_experiment(scenario("zero_evidence"))
    ddm = r.per_method["ddm"]
    assert ddm["terminal_case_histogram"]["exhausted"] == 100
    assert ddm["mean_queries"] == 9
    assert ddm["query_saving_rate_vs_all"] == 0


def test_gaussian_saving_band_and_quality():
    r = run_experiment(scenario("gaussian"))
    ddm, mr = r.per_method["ddm"], r.per_method["max_routing"]
    assert 0.2 < ddm["query_saving_rate_vs_all"] < 0.8
    assert ddm["mean_chosen_score"] >= mr["mean_chosen_score"]
    assert r.per_method["all"]["mean_chosen_score"] >= ddm["mean_chosen_score"]
    assert ddm["n_episodes"] == 5000


def test_saving_rate_definition():
    r = run_experiment(replace(scenario("gaussian"), sweep=None))
    q = [x.queries_used for x in _by(r, "ddm")]
    expect = 1 - np.mean(q) / np.mean([x.queries_used for x in _by(r, "all")])
    assert r.per_method["ddm"]["query_saving_rate_vs_all"] == pytest.approx(expect, abs=1e-12)


def test_per_episode_dominance():
    r = run_experiment(scenario("gaussian"))
    by_ep = {}
    for x in r.episode_records:
        by_ep.setdefault(x.episode, {})[x.method] = x
    assert len(by_ep) == 5000
    for ep in by_ep.values():
        best = ep["all"].chosen_score
        assert best >= ep["ddm"].chosen_score
        assert best >= ep["max_routing"].chosen_score
        assert ep["ddm"].queries_used <= ep["all"].queries_used == 9
        if ep["ddm"].terminal_case == "lower_hit":
            assert ep["ddm"].chosen_producer == A


def test_decay_sweep_trend():
    r = run_decay_sweep(scenario("gaussian"))
    assert list(r.per_decay) == ["0.1", "0.2", "0.3"]
    counts = [r.per_decay[k]["non_baseline_a_choices"] for k in r.per_decay]
    assert counts[0] >= counts[1] >= counts[2]
    rho = spearmanr([0.1, 0.2, 0.3], counts).statistic
    assert rho <= 0
    assert r.meta["decay_correlation"]["non_baseline_a_choices"] == pytest.approx(rho)
    assert "ddm" not in r.per_method
    assert set(r.per_method) == {"all", "max_routing"}


def test_singleton_sweep_matches_plain_run():
    cfg = replace(scenario("gaussian"), sweep=None)
    cfg = replace(cfg, n_episodes=300, routing=replace(cfg.routing, decay=0.0))
    plain = run_experiment(cfg)
    swept = run_decay_sweep(cfg, [0.0])
    assert swept.per_decay["0.0"] == plain.per_method["ddm"]
    assert _by(swept, "ddm") == _by(plain, "ddm")


def test_duplicate_decays_rejected():
    cfg = replace(scenario("gaussian"), sweep=None)
    with pytest.raises(InvalidConfig):
        run_decay_sweep(cfg, [0.1, 0.1])
    with pytest.raises(InvalidConfig):
        run_decay_sweep(cfg, [-0.1])
    with pytest.raises(InvalidConfig):
        run_decay_sweep(cfg)


def test_constant_sweep_correlation_is_nan():
    # every episode exhausts regardless of decay, so the counts are flat
    r = run_decay_sweep(scenario("zero_evidence"), [0.1, 0.2, 0.3])
    assert math.isnan(r.meta["decay_correlation"]["non_baseline_a_choices"])
    assert r.to_dict()["meta"]["decay_correlation"]["non_baseline_a_choices"] is None


def test_report_regeneration_exact():
    r = run_decay_sweep(replace(scenario("gaussian"), n_episodes=400))
    again = report_from_dict(json.loads(r.to_json()))
    assert again.to_json() == r.to_json()


def test_workers_do_not_change_report():
    cfg = replace(scenario("gaussian"), n_episodes=500)
    one = run_decay_sweep(cfg).to_json()
    four = run_decay_sweep(replace(cfg, workers=4)).to_json()
    assert one == four


def test_seed_changes_draws():
    cfg = replace(replace(scenario("gaussian"), sweep=None), n_episodes=50)
    a = run_experiment(cfg).to_json()
    b = run_experiment(replace(cfg, base_seed=cfg.base_seed + 1)).to_json()
    assert a == run_experiment(cfg).to_json()
    assert a != b


def test_csv_layout():
    r = run_experiment(scenario("point_dominant"))
    lines = r.to_csv().splitlines()
    assert lines[0].split(",") == list(CSV_FIELDS)
    assert len(lines) == 1 + 3 * 100


def _offline_cfg(records, **kw):
    prompts = ["prompt:x", "prompt:y"]
    specs = [GeneratorSpec(p, "offline") for p in [A, B, *prompts]]
    return ExperimentConfig(len(records), RoutingConfig(prompt_ids=prompts), specs,
                            scorer_spec={"kind": "offline"}, records=records, **kw)


def test_offline_records_drive_experiment():
    recs = [OfflineRecord(f"s{i}", "src", {A: ("a", 0.9), B: ("b", 0.8),
                                           "prompt:x": ("x", 0.8), "prompt:y": ("y", 0.8)})
            for i in range(4)]
    r = run_experiment(_offline_cfg(recs))
    assert [x.source_id for x in _by(r, "ddm")] == ["s0", "s1", "s2", "s3"]
    assert all(x.chosen_producer == A and x.terminal_case == "lower_hit" for x in _by(r, "ddm"))
    assert r.per_method["ddm"]["query_saving_rate_vs_all"] == pytest.approx(1 - 3 / 4)


def test_missing_record_reports_episode():
    recs = [OfflineRecord("s0", "src", {A: ("a", 0.9), B: ("b", 0.8), "prompt:x": ("x", 0.8),
                                        "prompt:y": ("y", 0.8)}),
            OfflineRecord("s1", "src", {A: ("a", 0.9), B: ("b", 0.8)})]
    with pytest.raises(ExperimentError) as ei:
        run_experiment(_offline_cfg(recs))
    assert ei.value.episode == 1
    assert isinstance(ei.value.cause, RecordNotFound)


@pytest.mark.parametrize("kw", [
    {"n_episodes": 0},
    {"workers": 0},
    {"base_seed": -1},
    {"sweep": (0.2, 0.2)},
    {"sweep": ()},
])
def test_config_validation(kw):
    with pytest.raises(InvalidConfig):
        replace(scenario("point_dominant"), **kw)


def test_provider_ids_must_match_routing():
    cfg = scenario("point_dominant")
    with pytest.raises(InvalidConfig):
        replace(cfg, provider_specs=cfg.provider_specs[:-1])
    http = GeneratorSpec(A, "http", {"url": "http://127.0.0.1:9"})
    with pytest.raises(InvalidConfig, match="synthetic or offline"):
        replace(cfg, provider_specs=(http,) + cfg.provider_specs[1:])
