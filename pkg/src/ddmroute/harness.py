"""Monte Carlo comparison of DDM routing against the Max-Routing and ALL baselines.

Every episode materialises all candidates once (a synthetic draw or an
offline record) and the methods then read from that shared record, so the
comparison is paired: methods differ only in which candidates they consume.
Episode ``i`` is seeded with ``derive_seed(base_seed, i)``; the prompt
shuffle uses ``splitmix64`` of that seed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import rng as _rng
from .engine import (
    RoutingConfig,
    SourceItem,
    TerminalCase,
    max_routing,
    route,
    select_all,
)
from .errors import DDMRouteError, InvalidConfig
from .providers import (
    OfflineRecord,
    RecordStore,
    build_scorer,
    check_unique,
    draw_synthetic_record,
    provider_set_from_record,
)

METHODS = ("ddm", "all", "max_routing")
CSV_FIELDS = ("episode", "method", "decay", "source_id", "chosen_producer",
              "chosen_score", "queries_used", "terminal_case")


class ExperimentError(DDMRouteError):
    def __init__(self, episode, cause):
        self.episode = episode
        self.cause = cause
        super().__init__(f"episode {episode}: {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class ExperimentConfig:
    n_episodes: int
    routing: RoutingConfig
    provider_specs: tuple
    baseline_a: str = "baseline_a"
    baseline_b: str = "baseline_b"
    scorer_spec: Optional[dict] = None
    base_seed: int = 0
    sweep: Optional[tuple] = None
    workers: int = 1
    records: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "provider_specs", tuple(self.provider_specs))
        object.__setattr__(self, "records", tuple(self.records))
        if self.sweep is not None:
            object.__setattr__(self, "sweep", tuple(float(d) for d in self.sweep))
        if isinstance(self.n_episodes, bool) or not isinstance(self.n_episodes, int) or self.n_episodes < 1:
            raise InvalidConfig(f"n_episodes must be an integer >= 1, got {self.n_episodes!r}")
        if self.workers < 1:
            raise InvalidConfig(f"workers must be >= 1, got {self.workers}")
        try:
            _rng.check_seed(self.base_seed)
        except (TypeError, ValueError) as e:
            raise InvalidConfig(f"base_seed: {e}") from None
        check_unique(self.provider_specs)
        ids = {s.producer_id for s in self.provider_specs}
        wanted = {self.baseline_a, self.baseline_b, *self.routing.prompt_ids}
        if len(wanted) != 2 + len(self.routing.prompt_ids):
            raise InvalidConfig("baseline ids and prompt ids must all be distinct")
        if ids != wanted:
            raise InvalidConfig(
                f"provider specs {sorted(ids)} do not match baselines + prompts {sorted(wanted)}"
            )
        kinds = {s.kind for s in self.provider_specs}
        if "http" in kinds:
            raise InvalidConfig("the harness runs on synthetic or offline providers only")
        if "offline" in kinds and not self.records:
            raise InvalidConfig("offline provider specs need records")
        if self.sweep is not None:
            if not self.sweep:
                raise InvalidConfig("sweep must be non-empty")
            if len(set(self.sweep)) != len(self.sweep):
                raise InvalidConfig(f"sweep decay values must be distinct, got {list(self.sweep)}")
            for d in self.sweep:
                if not (math.isfinite(d) and d >= 0):
                    raise InvalidConfig(f"sweep decay values must be >= 0, got {d}")

    @property
    def n_prompts(self) -> int:
        return len(self.routing.prompt_ids)


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    method: str
    decay: Optional[float]
    source_id: str
    chosen_producer: str
    chosen_score: float
    queries_used: int
    terminal_case: str


@dataclass
class ExperimentReport:
    per_method: dict
    per_decay: Optional[dict]
    episode_records: list
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_records(cls, records, meta) -> "ExperimentReport":
        """Aggregate episode records.  ``meta`` must carry ``baseline_a``,
        ``baseline_b`` and ``n_prompts``; a ``sweep`` entry switches on the
        per-decay breakdown of ddm records."""
        records = list(records)
        a, b, n = meta["baseline_a"], meta["baseline_b"], meta["n_prompts"]
        sweep = meta.get("sweep")
        per_method = {}
        for m in METHODS:
            rows = [r for r in records if r.method == m]
            if m == "ddm" and sweep is not None:
                continue
            if rows:
                per_method[m] = summarize(rows, a, b, n)
        per_decay = None
        if sweep is not None:
            per_decay = {}
            for d in sweep:
                rows = [r for r in records if r.method == "ddm" and r.decay == d]
                per_decay[_decay_key(d)] = summarize(rows, a, b, n)
            per_decay_corr = decay_correlations(per_decay)
            meta = {**meta, "decay_correlation": per_decay_corr}
        return cls(per_method, per_decay, records, meta)

    def to_dict(self) -> dict:
        return _json_safe({
            "meta": self.meta,
            "per_method": self.per_method,
            "per_decay": self.per_decay,
            "episode_records": [asdict(r) for r in self.episode_records],
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.episode_records:
            row = asdict(r)
            row["chosen_score"] = repr(r.chosen_score)
            row["decay"] = "" if r.decay is None else repr(r.decay)
            w.writerow(row)
        return buf.getvalue()


def _decay_key(d: float) -> str:
    return repr(float(d))


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def summarize(rows: Sequence[EpisodeRecord], baseline_a: str, baseline_b: str, n_prompts: int) -> dict:
    scores = np.array([r.chosen_score for r in rows], dtype=float)
    queries = np.array([r.queries_used for r in rows], dtype=float)
    all_queries = 2 + n_prompts
    terminal = {c.value: 0 for c in TerminalCase}
    producers = {}
    for r in rows:
        terminal[r.terminal_case] += 1
        producers[r.chosen_producer] = producers.get(r.chosen_producer, 0) + 1
    n = len(rows)
    return {
        "n_episodes": n,
        "mean_chosen_score": float(scores.mean()) if n else float("nan"),
        "stderr_chosen_score": float(scores.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
        "mean_queries": float(queries.mean()) if n else float("nan"),
        "stderr_queries": float(queries.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
        "query_saving_rate_vs_all": 1.0 - float(queries.mean()) / all_queries if n else float("nan"),
        "terminal_case_histogram": terminal,
        "producer_choice_histogram": dict(sorted(producers.items())),
        "non_baseline_a_choices": n - producers.get(baseline_a, 0),
        "baseline_b_choices": producers.get(baseline_b, 0),
    }


def decay_correlations(per_decay: dict) -> dict:
    decays = [float(k) for k in per_decay]
    out = {}
    for key in ("non_baseline_a_choices", "baseline_b_choices", "mean_chosen_score", "mean_queries"):
        ys = [m[key] for m in per_decay.values()]
        if len(decays) < 2 or len(set(ys)) < 2:
            # rank correlation undefined for constant input
            out[key] = float("nan")
        else:
            out[key] = float(stats.spearmanr(decays, ys).statistic)
    return out


# ---------------------------------------------------------------------------
# episodes


def episode_seeds(base_seed: int, episode: int):
    seed = _rng.derive_seed(base_seed, episode)
    return seed, _rng.splitmix64(seed)


def materialize_episode(cfg: ExperimentConfig, episode: int, rng):
    """Draw or look up every candidate for one episode, as an OfflineRecord."""
    specs = cfg.provider_specs
    if cfg.records:
        base = cfg.records[episode % len(cfg.records)]
        source = SourceItem(base.source_id if len(cfg.records) >= cfg.n_episodes
                            else f"{base.source_id}#{episode}", base.source_text)
    else:
        base = None
        source = SourceItem(f"episode-{episode}", "")

    synthetic = {s.producer_id: s.model for s in specs if s.kind == "synthetic"}
    drawn = {}
    if synthetic:
        anchor = cfg.baseline_a
        if anchor not in synthetic:
            # keep stream layout fixed: the anchor latent is always drawn first
            anchor = None
        drawn = draw_synthetic_record(synthetic, source, rng, anchor).candidates
    cands = {}
    for s in specs:
        if s.kind == "synthetic":
            cands[s.producer_id] = drawn[s.producer_id]
        else:
            c = base.candidate(s.producer_id)
            cands[s.producer_id] = (c.text, c.score)
    return source, OfflineRecord(source.source_id, source.text, cands)


def _run_episode(cfg: ExperimentConfig, episode: int, decays: Optional[Sequence], include_baselines=True):
    seed, shuffle_seed = episode_seeds(cfg.base_seed, episode)
    rng = np.random.default_rng(seed)
    try:
        source, record = materialize_episode(cfg, episode, rng)
        scorer = build_scorer(cfg.scorer_spec, RecordStore([record]))
        providers = provider_set_from_record(record, cfg.baseline_a, cfg.baseline_b,
                                             cfg.routing.prompt_ids)
        out = []

        def rec(method, decay, d):
            out.append(EpisodeRecord(episode, method, decay, source.source_id,
                                     d.chosen.producer_id, d.chosen.score,
                                     d.queries_used, d.terminal_case.value))

        for decay in (decays if decays is not None else [cfg.routing.decay]):
            rc = replace(cfg.routing, decay=decay, shuffle_seed=shuffle_seed)
            rec("ddm", float(decay), route(source, providers, scorer, rc))
        if include_baselines:
            rec("all", None, select_all(source, providers, scorer,
                                        cfg.routing.prompt_ids, shuffle_seed))
            rec("max_routing", None, max_routing(source, providers, scorer))
        return out
    except DDMRouteError as e:
        raise ExperimentError(episode, e) from e


def _run_all(cfg: ExperimentConfig, decays):
    indices = range(cfg.n_episodes)
    if cfg.workers == 1:
        chunks = [_run_episode(cfg, i, decays) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            chunks = list(ex.map(lambda i: _run_episode(cfg, i, decays), indices))
    return [r for chunk in chunks for r in chunk]


def _meta(cfg: ExperimentConfig, sweep=None) -> dict:
    meta = {
        "base_seed": cfg.base_seed,
        "n_episodes": cfg.n_episodes,
        "baseline_a": cfg.baseline_a,
        "baseline_b": cfg.baseline_b,
        "n_prompts": cfg.n_prompts,
        "prompt_ids": list(cfg.routing.prompt_ids),
        "initial_upper": cfg.routing.initial_upper,
        "initial_lower": cfg.routing.initial_lower,
        "decay": cfg.routing.decay,
        "check_initial_drift": cfg.routing.check_initial_drift,
    }
    if sweep is not None:
        meta["sweep"] = [float(d) for d in sweep]
    return meta


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """DDM routing, ALL and Max-Routing over the same episode stream."""
    records = _run_all(cfg, None)
    return ExperimentReport.from_records(records, _meta(cfg))


def run_decay_sweep(cfg: ExperimentConfig, sweep: Optional[Sequence] = None) -> ExperimentReport:
    """DDM routing at every decay in the sweep, plus the two baselines, over
    identical episode streams."""
    if sweep is not None:
        cfg = replace(cfg, sweep=tuple(sweep))
    if cfg.sweep is None:
        raise InvalidConfig("decay sweep needs a non-empty sweep")
    records = _run_all(cfg, cfg.sweep)
    return ExperimentReport.from_records(records, _meta(cfg, cfg.sweep))


def records_from_dicts(rows) -> list:
    return [EpisodeRecord(**r) for r in rows]


def report_from_dict(d: dict) -> ExperimentReport:
    """Rebuild a report (aggregates recomputed) from its serialized form."""
    meta = dict(d["meta"])
    meta.pop("decay_correlation", None)
    return ExperimentReport.from_records(records_from_dicts(d["episode_records"]), meta)
