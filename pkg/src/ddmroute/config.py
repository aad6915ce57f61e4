"""JSON run configuration (``schema_version`` 1).

Example::

    {
      "schema_version": 1,
      "baseline_a": "baseline_a",
      "baseline_b": "baseline_b",
      "routing": {"initial_upper": 0.05, "initial_lower": -0.05, "decay": 0.2,
                  "prompt_ids": ["prompt:intent", "prompt:text_type"],
                  "check_initial_drift": false},
      "providers": [{"producer_id": "baseline_a", "kind": "synthetic",
                     "params": {"mean": 0.8, "stddev": 0.02}}, ...],
      "scorer": {"kind": "passthrough"},
      "experiment": {"n_episodes": 1000, "base_seed": 7, "sweep": [0.1, 0.2, 0.3],
                     "workers": 1},
      "http": {"max_connections_per_host": 4}
    }

``providers`` and ``scorer`` may be omitted for ``route``; every producer then
defaults to the offline records of the input file and scores are the stored
ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .engine import RoutingConfig
from .errors import InvalidConfig
from .harness import ExperimentConfig
from .providers import GeneratorSpec

SCHEMA_VERSION = 1
_TOP_KEYS = {"schema_version", "baseline_a", "baseline_b", "routing", "providers",
             "scorer", "experiment", "http", "seed"}
_ROUTING_KEYS = {"initial_upper", "initial_lower", "decay", "prompt_ids",
                 "check_initial_drift", "shuffle_seed"}
_EXPERIMENT_KEYS = {"n_episodes", "base_seed", "sweep", "workers"}


@dataclass
class RunConfig:
    routing: RoutingConfig
    baseline_a: str = "baseline_a"
    baseline_b: str = "baseline_b"
    providers: list = field(default_factory=list)
    scorer: Optional[dict] = None
    experiment: dict = field(default_factory=dict)
    max_connections_per_host: Optional[int] = None
    seed: Optional[int] = None

    @property
    def producer_ids(self) -> list:
        return [self.baseline_a, self.baseline_b, *self.routing.prompt_ids]

    def spec_for(self, producer_id: str) -> GeneratorSpec:
        for s in self.providers:
            if s.producer_id == producer_id:
                return s
        return GeneratorSpec(producer_id, "offline")

    def experiment_config(self, base_seed=None, sweep=None, workers=None, records=()) -> ExperimentConfig:
        exp = self.experiment
        if "n_episodes" not in exp:
            raise InvalidConfig("experiment.n_episodes is required for simulations")
        if sweep is None:
            sweep = exp.get("sweep")
        try:
            return ExperimentConfig(
                n_episodes=exp["n_episodes"],
                routing=self.routing,
                provider_specs=[self.spec_for(p) for p in self.producer_ids],
                baseline_a=self.baseline_a,
                baseline_b=self.baseline_b,
                scorer_spec=self.scorer,
                base_seed=base_seed if base_seed is not None else exp.get("base_seed", 0),
                sweep=sweep,
                workers=workers if workers is not None else exp.get("workers", 1),
                records=records,
            )
        except InvalidConfig as e:
            raise InvalidConfig(f"experiment: {e}") from None


def _unknown(section, obj, allowed):
    extra = set(obj) - allowed
    if extra:
        raise InvalidConfig(f"{section}: unknown keys {sorted(extra)}")


def parse_config(obj) -> RunConfig:
    if not isinstance(obj, dict):
        raise InvalidConfig("config must be a JSON object")
    _unknown("config", obj, _TOP_KEYS)
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise InvalidConfig(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")

    r = obj.get("routing", {})
    if not isinstance(r, dict):
        raise InvalidConfig("routing must be an object")
    _unknown("routing", r, _ROUTING_KEYS)
    try:
        routing = RoutingConfig(**r)
    except TypeError as e:
        raise InvalidConfig(f"routing: {e}") from None
    except InvalidConfig as e:
        raise InvalidConfig(f"routing.{e}") from None

    providers = [GeneratorSpec.from_json(p) for p in obj.get("providers", [])]
    exp = obj.get("experiment", {})
    if not isinstance(exp, dict):
        raise InvalidConfig("experiment must be an object")
    _unknown("experiment", exp, _EXPERIMENT_KEYS)
    http = obj.get("http", {})
    cfg = RunConfig(
        routing=routing,
        baseline_a=obj.get("baseline_a", "baseline_a"),
        baseline_b=obj.get("baseline_b", "baseline_b"),
        providers=providers,
        scorer=obj.get("scorer"),
        experiment=exp,
        max_connections_per_host=http.get("max_connections_per_host"),
        seed=obj.get("seed"),
    )
    ids = cfg.producer_ids
    if len(set(ids)) != len(ids):
        raise InvalidConfig(f"baseline and prompt producer ids must be distinct: {ids}")
    unknown = [s.producer_id for s in providers if s.producer_id not in ids]
    if unknown:
        raise InvalidConfig(f"providers: specs for unconfigured producers {unknown}")
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidConfig(f"{path}: malformed JSON at line {e.lineno} ({e.msg})") from None
    return parse_config(obj)
