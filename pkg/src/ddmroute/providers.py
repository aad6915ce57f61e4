"""Candidate generators and quality scorers.

Three generator families are provided:

``offline``
    serves candidates (text and stored score) from a JSONL record file.
``synthetic``
    draws a score from a parametric model; used by the simulation harness
    in place of real translation systems.
``http``
    one POST round trip per candidate to an external service.

Scorers: ``passthrough`` (use the score the generator attached),
``offline`` (stored score looked up by source and text) and ``http``.
"""

from __future__ import annotations

import json
import math
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional
from urllib.parse import urlsplit

import numpy as np
from scipy.special import ndtr

from .engine import Candidate, ProviderSet, SourceItem
from .errors import (
    GenerationFailed,
    InvalidConfig,
    RecordNotFound,
    ScoringFailed,
)

GENERATOR_KINDS = ("offline", "synthetic", "http")
DISTRIBUTIONS = ("gaussian", "uniform", "point")
DEFAULT_TIMEOUT = 30.0


# ---------------------------------------------------------------------------
# offline records


@dataclass(frozen=True)
class OfflineRecord:
    source_id: str
    source_text: str
    candidates: Mapping  # producer_id -> (text, score)

    def __post_init__(self):
        for pid, (text, score) in self.candidates.items():
            if isinstance(score, bool) or not isinstance(score, (int, float)) or not math.isfinite(score):
                raise InvalidConfig(
                    f"record {self.source_id!r}: score for {pid!r} must be finite, got {score!r}"
                )

    @property
    def source(self) -> SourceItem:
        return SourceItem(self.source_id, self.source_text)

    def candidate(self, producer_id: str) -> Candidate:
        try:
            text, score = self.candidates[producer_id]
        except KeyError:
            raise RecordNotFound(self.source_id, producer_id) from None
        return Candidate(producer_id, text, float(score))

    def missing(self, producer_ids: Iterable) -> list:
        return [p for p in producer_ids if p not in self.candidates]

    @classmethod
    def from_json(cls, obj) -> "OfflineRecord":
        if not isinstance(obj, dict):
            raise InvalidConfig("record must be a JSON object")
        try:
            sid = obj["source_id"]
            cands = obj["candidates"]
        except KeyError as e:
            raise InvalidConfig(f"record is missing field {e.args[0]!r}") from None
        if not isinstance(sid, str) or not sid:
            raise InvalidConfig("source_id must be a non-empty string")
        if not isinstance(cands, dict):
            raise InvalidConfig(f"record {sid!r}: candidates must be an object")
        parsed = {}
        for pid, c in cands.items():
            if not isinstance(c, dict) or "text" not in c or "score" not in c:
                raise InvalidConfig(f"record {sid!r}: candidate {pid!r} needs text and score")
            if not isinstance(c["text"], str):
                raise InvalidConfig(f"record {sid!r}: candidate {pid!r} text must be a string")
            parsed[pid] = (c["text"], c["score"])
        return cls(sid, str(obj.get("source_text", "")), parsed)

    def to_json(self) -> dict:
        return {
            "source_id": self.source_id,
            "source_text": self.source_text,
            "candidates": {p: {"text": t, "score": s} for p, (t, s) in self.candidates.items()},
        }


def parse_records(lines: Iterable[str]) -> list:
    """Parse JSONL text into records.  Blank lines are skipped; any other
    malformed line raises ``InvalidConfig`` carrying its 1-based line number."""
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append(OfflineRecord.from_json(json.loads(line)))
        except json.JSONDecodeError as e:
            raise InvalidConfig(f"line {lineno}: malformed JSON ({e.msg})") from None
        except InvalidConfig as e:
            raise InvalidConfig(f"line {lineno}: {e}") from None
    return out


def load_records(path) -> list:
    with open(path, encoding="utf-8") as f:
        return parse_records(f)


class RecordStore:
    """Records indexed by source_id."""

    def __init__(self, records: Iterable[OfflineRecord] = ()):
        self._by_id = {}
        for r in records:
            if r.source_id in self._by_id:
                raise InvalidConfig(f"duplicate source_id {r.source_id!r}")
            self._by_id[r.source_id] = r

    def __contains__(self, source_id):
        return source_id in self._by_id

    def __len__(self):
        return len(self._by_id)

    def get(self, source_id: str) -> OfflineRecord:
        try:
            return self._by_id[source_id]
        except KeyError:
            raise RecordNotFound(source_id) from None


class OfflineGenerator:
    def __init__(self, producer_id: str, store: RecordStore):
        self.producer_id = producer_id
        self.store = store

    def generate(self, source: SourceItem, rng=None) -> Candidate:
        return self.store.get(source.source_id).candidate(self.producer_id)


class RecordGenerator:
    """Serves one producer's candidate from a single in-memory record."""

    def __init__(self, producer_id: str, record: OfflineRecord):
        self.producer_id = producer_id
        self.record = record

    def generate(self, source: SourceItem, rng=None) -> Candidate:
        return self.record.candidate(self.producer_id)


def provider_set_from_record(record, baseline_a, baseline_b, prompt_ids) -> ProviderSet:
    return ProviderSet(
        RecordGenerator(baseline_a, record),
        RecordGenerator(baseline_b, record),
        {p: RecordGenerator(p, record) for p in prompt_ids},
    )


# ---------------------------------------------------------------------------
# synthetic scores


@dataclass(frozen=True)
class SyntheticScoreModel:
    mean: float
    stddev: float = 0.0
    distribution: str = "gaussian"
    correlation_with_baseline: float = 0.0

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise InvalidConfig(f"distribution must be one of {DISTRIBUTIONS}, got {self.distribution!r}")
        for name in ("mean", "stddev", "correlation_with_baseline"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise InvalidConfig(f"{name} must be a finite number, got {v!r}")
        if self.stddev < 0:
            raise InvalidConfig(f"stddev must be >= 0, got {self.stddev}")
        if self.distribution == "point" and self.stddev != 0:
            raise InvalidConfig("point distribution requires stddev == 0")
        if not -1 <= self.correlation_with_baseline <= 1:
            raise InvalidConfig("correlation_with_baseline must lie in [-1, 1]")

    def from_latent(self, z: float) -> float:
        """Map a standard-normal latent to a score with this model's marginal."""
        if self.distribution == "point":
            return float(self.mean)
        if self.distribution == "gaussian":
            return float(self.mean + self.stddev * z)
        half_width = self.stddev * math.sqrt(3.0)
        return float(self.mean + half_width * (2.0 * ndtr(z) - 1.0))

    def latent(self, anchor: Optional[float], rng: np.random.Generator) -> float:
        """Standard-normal latent, correlated with ``anchor`` when one is given.

        Always consumes exactly one normal draw from ``rng``.
        """
        eps = rng.standard_normal()
        rho = self.correlation_with_baseline
        if anchor is None or rho == 0:
            return float(eps)
        return float(rho * anchor + math.sqrt(1.0 - rho * rho) * eps)

    def draw(self, rng: np.random.Generator, anchor: Optional[float] = None) -> float:
        return self.from_latent(self.latent(anchor, rng))

    @classmethod
    def from_params(cls, params: Mapping) -> "SyntheticScoreModel":
        known = {"mean", "stddev", "distribution", "correlation_with_baseline"}
        extra = set(params) - known
        if extra:
            raise InvalidConfig(f"unknown synthetic parameters: {sorted(extra)}")
        if "mean" not in params:
            raise InvalidConfig("synthetic model needs a mean")
        return cls(**params)


def placeholder_text(producer_id: str, source: SourceItem) -> str:
    return f"<synthetic:{producer_id}:{source.source_id}>"


class SyntheticGenerator:
    def __init__(self, producer_id: str, model: SyntheticScoreModel, rng=None):
        self.producer_id = producer_id
        self.model = model
        self.rng = rng if rng is not None else np.random.default_rng()

    def generate(self, source: SourceItem, rng=None, anchor=None) -> Candidate:
        score = self.model.draw(rng if rng is not None else self.rng, anchor)
        return Candidate(self.producer_id, placeholder_text(self.producer_id, source), score)


def draw_synthetic_record(models: Mapping, source: SourceItem, rng, anchor_id: str) -> OfflineRecord:
    """Draw one score per producer for a single episode.

    The anchor (baseline A) latent is drawn first, then one latent per
    producer in ``models`` order, so the stream layout is fixed and every
    routing method that reads the record sees the same candidates.
    """
    z0 = float(rng.standard_normal())
    cands = {}
    for pid, model in models.items():
        if pid == anchor_id:
            score = model.from_latent(z0)
        else:
            score = model.draw(rng, z0)
        cands[pid] = (placeholder_text(pid, source), score)
    return OfflineRecord(source.source_id, source.text, cands)


# ---------------------------------------------------------------------------
# http


class HostLimiter:
    """Caps concurrent requests per host."""

    def __init__(self, max_per_host: Optional[int] = None):
        self.max_per_host = max_per_host
        self._lock = threading.Lock()
        self._sems = {}

    def slot(self, url: str):
        if not self.max_per_host:
            return _NullSlot()
        host = urlsplit(url).netloc
        with self._lock:
            sem = self._sems.get(host)
            if sem is None:
                sem = self._sems[host] = threading.BoundedSemaphore(self.max_per_host)
        return sem


class _NullSlot:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


_DEFAULT_LIMITER = HostLimiter()


def post_json(url, payload, timeout=DEFAULT_TIMEOUT, retries=0, headers=None, limiter=None):
    """POST ``payload`` as JSON; return ``(decoded_body, attempts)``.

    Non-2xx statuses, transport errors and non-JSON bodies raise ``OSError``
    or ``ValueError`` after ``retries`` extra attempts.
    """
    body = json.dumps(payload).encode("utf-8")
    hdrs = {"Content-Type": "application/json", "Accept": "application/json"}
    hdrs.update(headers or {})
    limiter = limiter or _DEFAULT_LIMITER
    last = None
    for attempt in range(1, retries + 2):
        req = urllib.request.Request(url, data=body, headers=hdrs, method="POST")
        try:
            with limiter.slot(url):
                with urllib.request.urlopen(req, timeout=timeout) as resp:
                    raw = resp.read()
            return json.loads(raw.decode("utf-8")), attempt
        except urllib.error.HTTPError as e:
            last = OSError(f"HTTP {e.code} from {url}")
        except (urllib.error.URLError, OSError, ValueError) as e:
            last = e
    raise last


class HttpGenerator:
    def __init__(self, producer_id, url, prompt_id=None, prompt_vars=None,
                 timeout=DEFAULT_TIMEOUT, retries=0, headers=None, limiter=None):
        if retries < 0:
            raise InvalidConfig("retries must be >= 0")
        if timeout <= 0:
            raise InvalidConfig("timeout must be > 0")
        self.producer_id = producer_id
        self.url = url
        self.prompt_id = prompt_id
        self.prompt_vars = dict(prompt_vars or {})
        self.timeout = timeout
        self.retries = retries
        self.headers = headers
        self.limiter = limiter

    def rendered_prompt(self, source: SourceItem) -> Optional[str]:
        if self.prompt_id is None:
            return None
        from .prompts import render

        return render(self.prompt_id, {**self.prompt_vars, "source_sentence": source.text})

    def generate(self, source: SourceItem, rng=None) -> Candidate:
        payload = {
            "source": source.text,
            "prompt_id": self.prompt_id,
            "rendered_prompt": self.rendered_prompt(source),
        }
        try:
            data, attempts = post_json(self.url, payload, self.timeout, self.retries,
                                       self.headers, self.limiter)
        except Exception as e:
            raise GenerationFailed(self.producer_id, e) from e
        if not isinstance(data, dict) or not isinstance(data.get("text"), str):
            raise GenerationFailed(self.producer_id, f"response lacks a string 'text': {data!r}")
        return Candidate(self.producer_id, data["text"], None, attempts)


# ---------------------------------------------------------------------------
# scorers


class PassthroughScorer:
    def score(self, source: SourceItem, candidate: Candidate) -> float:
        if candidate.score is None:
            raise ScoringFailed(candidate.producer_id, "candidate carries no score")
        return candidate.score


class OfflineScorer:
    """Looks up the stored score of a candidate text within its source record."""

    def __init__(self, store: RecordStore):
        self.store = store

    def score(self, source: SourceItem, candidate: Candidate) -> float:
        if not candidate.text:
            raise ScoringFailed(candidate.producer_id, "empty candidate text")
        try:
            rec = self.store.get(source.source_id)
        except RecordNotFound as e:
            raise ScoringFailed(candidate.producer_id, e) from e
        stored = rec.candidates.get(candidate.producer_id)
        if stored is not None and stored[0] == candidate.text:
            return float(stored[1])
        for text, s in rec.candidates.values():
            if text == candidate.text:
                return float(s)
        raise ScoringFailed(candidate.producer_id, "no stored score for this text")


class HttpScorer:
    def __init__(self, url, timeout=DEFAULT_TIMEOUT, retries=0, headers=None, limiter=None):
        if retries < 0:
            raise InvalidConfig("retries must be >= 0")
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.headers = headers
        self.limiter = limiter

    def score(self, source: SourceItem, candidate: Candidate) -> float:
        if not candidate.text:
            raise ScoringFailed(candidate.producer_id, "empty candidate text")
        try:
            data, _ = post_json(self.url, {"source": source.text, "candidate": candidate.text},
                                self.timeout, self.retries, self.headers, self.limiter)
        except Exception as e:
            raise ScoringFailed(candidate.producer_id, e) from e
        s = data.get("score") if isinstance(data, dict) else None
        if isinstance(s, bool) or not isinstance(s, (int, float)) or not math.isfinite(s):
            raise ScoringFailed(candidate.producer_id, f"response lacks a finite 'score': {data!r}")
        return float(s)


# ---------------------------------------------------------------------------
# specs and factories


@dataclass(frozen=True)
class GeneratorSpec:
    producer_id: str
    kind: str
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not self.producer_id:
            raise InvalidConfig("producer_id must be non-empty")
        if self.kind not in GENERATOR_KINDS:
            raise InvalidConfig(f"generator kind must be one of {GENERATOR_KINDS}, got {self.kind!r}")
        if self.kind == "synthetic":
            SyntheticScoreModel.from_params(self.params)
        if self.kind == "http" and "url" not in self.params:
            raise InvalidConfig(f"http generator {self.producer_id!r} needs a url")

    @property
    def model(self) -> SyntheticScoreModel:
        return SyntheticScoreModel.from_params(self.params)

    @classmethod
    def from_json(cls, obj) -> "GeneratorSpec":
        if not isinstance(obj, dict):
            raise InvalidConfig("provider spec must be an object")
        try:
            return cls(obj["producer_id"], obj["kind"], dict(obj.get("params", {})))
        except KeyError as e:
            raise InvalidConfig(f"provider spec is missing {e.args[0]!r}") from None
        except TypeError as e:
            raise InvalidConfig(f"provider spec: {e}") from None


def check_unique(specs: Iterable[GeneratorSpec]):
    seen = set()
    for s in specs:
        if s.producer_id in seen:
            raise InvalidConfig(f"duplicate producer_id {s.producer_id!r}")
        seen.add(s.producer_id)


def build_generator(spec: GeneratorSpec, store: Optional[RecordStore] = None, rng=None, limiter=None):
    if spec.kind == "offline":
        if store is None:
            raise InvalidConfig(f"offline generator {spec.producer_id!r} needs a record store")
        return OfflineGenerator(spec.producer_id, store)
    if spec.kind == "synthetic":
        return SyntheticGenerator(spec.producer_id, spec.model, rng)
    p = dict(spec.params)
    return HttpGenerator(
        spec.producer_id, p.pop("url"), p.pop("prompt_id", None), p.pop("prompt_vars", None),
        p.pop("timeout", DEFAULT_TIMEOUT), p.pop("retries", 0), p.pop("headers", None), limiter,
    )


def generate(spec: GeneratorSpec, source: SourceItem, rng=None, store: Optional[RecordStore] = None) -> Candidate:
    """One-shot generation from a spec."""
    return build_generator(spec, store, rng).generate(source, rng)


SCORER_KINDS = ("passthrough", "offline", "http")


def build_scorer(spec: Optional[Mapping], store: Optional[RecordStore] = None, limiter=None):
    spec = dict(spec or {"kind": "passthrough"})
    kind = spec.get("kind", "passthrough")
    params = dict(spec.get("params", {}))
    if kind == "passthrough":
        return PassthroughScorer()
    if kind == "offline":
        if store is None:
            raise InvalidConfig("offline scorer needs a record store")
        return OfflineScorer(store)
    if kind == "http":
        if "url" not in params:
            raise InvalidConfig("http scorer needs a url")
        return HttpScorer(params.pop("url"), params.pop("timeout", DEFAULT_TIMEOUT),
                          params.pop("retries", 0), params.pop("headers", None), limiter)
    raise InvalidConfig(f"scorer kind must be one of {SCORER_KINDS}, got {kind!r}")


def score(scorer, source: SourceItem, candidate: Candidate) -> float:
    """Score a candidate, normalising failures to :class:`ScoringFailed`."""
    try:
        s = scorer.score(source, candidate)
    except ScoringFailed:
        raise
    except Exception as e:
        raise ScoringFailed(candidate.producer_id, e) from e
    if isinstance(s, bool) or not isinstance(s, (int, float)) or not math.isfinite(s):
        raise ScoringFailed(candidate.producer_id, f"non-finite or missing score {s!r}")
    return float(s)
