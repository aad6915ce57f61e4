import json
import math
import threading
import time

import numpy as np
import pytest

from ddmroute.engine import Candidate, RoutingConfig, SourceItem, route
from ddmroute.errors import (
    GenerationFailed,
    InvalidConfig,
    RecordNotFound,
    ScoringFailed,
)
from ddmroute.providers import (
    GeneratorSpec,
    HostLimiter,
    HttpGenerator,
    HttpScorer,
    OfflineGenerator,
    OfflineRecord,
    OfflineScorer,
    PassthroughScorer,
    RecordStore,
    SyntheticGenerator,
    SyntheticScoreModel,
    build_generator,
    build_scorer,
    draw_synthetic_record,
    generate,
    parse_records,
    score,
)
from ddmroute.engine import ProviderSet

SRC = SourceItem("s1", "Hallo Welt")


def _store():
    rec = OfflineRecord("s1", "Hallo Welt", {
        "baseline_a": ("Hallo", 0.81),
        "baseline_b": ("Hello", 0.8716),
    })
    return RecordStore([rec])


# ---------------------------------------------------------------------------
# offline


def test_offline_lookup_identity():
    c = generate(GeneratorSpec("baseline_a", "offline"), SRC, store=_store())
    assert c == Candidate("baseline_a", "Hallo", 0.81)


def test_offline_is_pure():
    gen = OfflineGenerator("baseline_b", _store())
    assert gen.generate(SRC) == gen.generate(SRC)


def test_offline_missing_source_and_producer():
    gen = OfflineGenerator("baseline_a", _store())
    with pytest.raises(RecordNotFound):
        gen.generate(SourceItem("nope", ""))
    with pytest.raises(RecordNotFound) as ei:
        OfflineGenerator("prompt:intent", _store()).generate(SRC)
    assert ei.value.producer_id == "prompt:intent"


def test_offline_scorer_returns_stored_value():
    store = _store()
    sc = OfflineScorer(store)
    assert sc.score(SRC, Candidate("baseline_b", "Hello")) == 0.8716
    # looked up by text even under another producer id
    assert sc.score(SRC, Candidate("x", "Hallo")) == 0.81
    with pytest.raises(ScoringFailed):
        sc.score(SRC, Candidate("x", "unseen"))
    with pytest.raises(ScoringFailed):
        sc.score(SRC, Candidate("x", ""))


def test_passthrough_scorer():
    assert PassthroughScorer().score(SRC, Candidate("a", "t", 0.8532)) == 0.8532
    with pytest.raises(ScoringFailed):
        score(PassthroughScorer(), SRC, Candidate("a", "t"))


def test_record_parsing():
    lines = [
        json.dumps({"source_id": "x", "source_text": "S",
                    "candidates": {"a": {"text": "t", "score": 0.5}}}),
        "",
        "{not json",
    ]
    with pytest.raises(InvalidConfig, match="line 3"):
        parse_records(lines)
    assert parse_records(lines[:2])[0].candidate("a").score == 0.5


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), "0.5", None])
def test_record_scores_must_be_finite(bad):
    with pytest.raises(InvalidConfig):
        OfflineRecord("x", "", {"a": ("t", bad)})


def test_record_roundtrip():
    rec = _store().get("s1")
    assert OfflineRecord.from_json(json.loads(json.dumps(rec.to_json()))) == rec


def test_duplicate_source_ids_rejected():
    rec = _store().get("s1")
    with pytest.raises(InvalidConfig):
        RecordStore([rec, rec])


# ---------------------------------------------------------------------------
# synthetic


def test_point_model_exact():
    spec = GeneratorSpec("p", "synthetic", {"mean": 0.8, "stddev": 0, "distribution": "point"})
    for seed in range(5):
        assert generate(spec, SRC, np.random.default_rng(seed)).score == 0.8


def test_gaussian_law_of_large_numbers():
    m = SyntheticScoreModel(0.8, 0.05, "gaussian")
    rng = np.random.default_rng(11)
    x = np.array([m.draw(rng) for _ in range(100_000)])
    assert abs(x.mean() - 0.8) <= 0.001
    assert abs(x.std(ddof=1) - 0.05) <= 0.002


def test_uniform_moments():
    m = SyntheticScoreModel(0.5, 0.1, "uniform")
    rng = np.random.default_rng(3)
    x = np.array([m.draw(rng) for _ in range(50_000)])
    half = 0.1 * math.sqrt(3)
    assert x.min() >= 0.5 - half and x.max() <= 0.5 + half
    assert abs(x.mean() - 0.5) <= 0.002
    assert abs(x.std() - 0.1) <= 0.002


def test_correlation_with_baseline():
    models = {"baseline_a": SyntheticScoreModel(0.8, 0.02),
              "p": SyntheticScoreModel(0.82, 0.03, correlation_with_baseline=0.6)}
    rng = np.random.default_rng(5)
    draws = [draw_synthetic_record(models, SRC, rng, "baseline_a").candidates for _ in range(20000)]
    a = np.array([d["baseline_a"][1] for d in draws])
    p = np.array([d["p"][1] for d in draws])
    assert abs(np.corrcoef(a, p)[0, 1] - 0.6) < 0.02


def test_synthetic_reproducible():
    gen = SyntheticGenerator("p", SyntheticScoreModel(0.8, 0.05))
    a = [gen.generate(SRC, np.random.default_rng(9)).score for _ in range(3)]
    assert a[0] == a[1] == a[2]
    r1, r2 = np.random.default_rng(4), np.random.default_rng(4)
    assert [gen.generate(SRC, r1).score for _ in range(10)] == \
        [gen.generate(SRC, r2).score for _ in range(10)]


@pytest.mark.parametrize("params", [
    {"mean": 0.8, "stddev": -0.1},
    {"mean": 0.8, "stddev": 0.1, "distribution": "point"},
    {"mean": 0.8, "distribution": "beta"},
    {"mean": 0.8, "correlation_with_baseline": 1.5},
    {"stddev": 0.1},
    {"mean": 0.8, "sd": 0.1},
])
def test_synthetic_invalid_params(params):
    with pytest.raises(InvalidConfig):
        GeneratorSpec("p", "synthetic", params)


def test_spec_producer_id_preserved():
    for spec in [GeneratorSpec("baseline_a", "offline"),
                 GeneratorSpec("prompt:x", "synthetic", {"mean": 0.5})]:
        store = RecordStore([OfflineRecord("s1", "", {"baseline_a": ("t", 0.1)})])
        assert generate(spec, SRC, np.random.default_rng(0), store).producer_id == spec.producer_id


# ---------------------------------------------------------------------------
# http


def test_http_scorer_stub(stub_server):
    seen = []
    stub_server.routes["/score"] = lambda body: (seen.append(body), (200, {"score": 0.75}))[1]
    sc = HttpScorer(stub_server.url + "/score")
    assert sc.score(SRC, Candidate("a", "Hello world")) == 0.75
    assert seen == [{"source": "Hallo Welt", "candidate": "Hello world"}]


def test_http_generator_stub(stub_server):
    seen = []
    stub_server.routes["/gen"] = lambda body: (seen.append(body), (200, {"text": "Hi"}))[1]
    gen = HttpGenerator("prompt:intent", stub_server.url + "/gen", prompt_id="intent")
    c = gen.generate(SRC)
    assert (c.producer_id, c.text, c.score, c.attempts) == ("prompt:intent", "Hi", None, 1)
    assert seen[0]["source"] == "Hallo Welt"
    assert seen[0]["prompt_id"] == "intent"
    assert "Hallo Welt" in seen[0]["rendered_prompt"]
    assert "Perform an Intent Analysis" in seen[0]["rendered_prompt"]


def test_http_baseline_sends_null_prompt(stub_server):
    seen = []
    stub_server.routes["/gen"] = lambda body: (seen.append(body), (200, {"text": "Hi"}))[1]
    HttpGenerator("baseline_a", stub_server.url + "/gen").generate(SRC)
    assert seen[0] == {"source": "Hallo Welt", "prompt_id": None, "rendered_prompt": None}


@pytest.mark.parametrize("status,payload", [
    (500, {"text": "x"}),
    (200, {"txt": "x"}),
    (200, {"text": 3}),
    (200, b"not json"),
])
def test_http_generator_errors(stub_server, status, payload):
    stub_server.routes["/gen"] = lambda body: (status, payload)
    with pytest.raises(GenerationFailed) as ei:
        HttpGenerator("g", stub_server.url + "/gen").generate(SRC)
    assert ei.value.producer_id == "g"


@pytest.mark.parametrize("payload", [{"score": "0.5"}, {"score": None}, {}, {"score": True}])
def test_http_scorer_schema_errors(stub_server, payload):
    stub_server.routes["/score"] = lambda body: (200, payload)
    with pytest.raises(ScoringFailed):
        HttpScorer(stub_server.url + "/score").score(SRC, Candidate("a", "x"))


def test_http_non_finite_score_rejected(stub_server):
    stub_server.routes["/score"] = lambda body: (200, b'{"score": NaN}')
    with pytest.raises(ScoringFailed):
        HttpScorer(stub_server.url + "/score").score(SRC, Candidate("a", "x"))


def test_http_retries_are_counted(stub_server):
    calls = []

    def flaky(body):
        calls.append(1)
        return (503, {}) if len(calls) < 3 else (200, {"text": "ok"})

    stub_server.routes["/gen"] = flaky
    with pytest.raises(GenerationFailed):
        HttpGenerator("g", stub_server.url + "/gen").generate(SRC)
    calls.clear()
    c = HttpGenerator("g", stub_server.url + "/gen", retries=2).generate(SRC)
    assert c.attempts == 3


def test_http_connection_refused():
    with pytest.raises(GenerationFailed):
        HttpGenerator("g", "http://127.0.0.1:9/none", timeout=2).generate(SRC)


def test_host_limiter_caps_concurrency(stub_server):
    active, peak = [0], [0]
    lock = threading.Lock()

    def slow(body):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        time.sleep(0.05)
        with lock:
            active[0] -= 1
        return 200, {"text": "x"}

    stub_server.routes["/gen"] = slow
    gen = HttpGenerator("g", stub_server.url + "/gen", limiter=HostLimiter(2))
    threads = [threading.Thread(target=gen.generate, args=(SRC,)) for _ in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak[0] <= 2


def test_route_over_http_providers(stub_server):
    stub_server.routes["/a"] = lambda b: (200, {"text": "A"})
    stub_server.routes["/b"] = lambda b: (200, {"text": "B"})
    stub_server.routes["/p"] = lambda b: (200, {"text": "P-" + b["prompt_id"]})
    scores = {"A": 0.80, "B": 0.84}
    stub_server.routes["/score"] = lambda b: (200, {"score": scores.get(b["candidate"], 0.86)})
    url = stub_server.url
    prompts = {f"prompt:{t}": build_generator(
        GeneratorSpec(f"prompt:{t}", "http", {"url": url + "/p", "prompt_id": t,
                                              "prompt_vars": {"target": "English"}}))
        for t in ["scene_analysis", "intent", "cultural_equivalence"]}
    prov = ProviderSet(HttpGenerator("baseline_a", url + "/a"),
                       HttpGenerator("baseline_b", url + "/b"), prompts)
    scorer = build_scorer({"kind": "http", "params": {"url": url + "/score"}})
    d = route(SRC, prov, scorer, RoutingConfig(prompt_ids=list(prompts), shuffle_seed=0))
    assert d.terminal_case.value == "upper_hit"
    assert d.queries_used == 3
    assert d.chosen.text.startswith("P-")
    assert d.chosen.score == 0.86


def test_unknown_kinds():
    with pytest.raises(InvalidConfig):
        GeneratorSpec("x", "grpc")
    with pytest.raises(InvalidConfig):
        build_scorer({"kind": "bleu"})
    with pytest.raises(InvalidConfig):
        GeneratorSpec("x", "http", {})
