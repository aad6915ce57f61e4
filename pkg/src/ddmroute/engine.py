"""Sequential candidate selection by drift-diffusion evidence accumulation.

One routing episode proceeds as follows:

1. Two baseline candidates A and B are generated and scored.  The initial
   drift is ``score(B) - score(A)``.
2. Strategy-prompt candidates are generated one at a time in shuffled order.
   Each contributes ``score(P_i) - score(A)`` to the drift; the decision
   boundaries are then shrunk by ``exp(-decay)`` and the drift is compared
   against them.  Touching either boundary ends the loop.
3. A lower-boundary hit returns baseline A.  An upper-boundary hit, or
   running out of prompts, returns the best-scored candidate generated so far.

Scores are used raw.  A non-finite score aborts the episode.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Protocol, Sequence

from . import rng as _rng
from .errors import (
    DDMRouteError,
    GenerationFailed,
    InvalidConfig,
    InvalidScore,
    ScoringFailed,
)

DEFAULT_UPPER = 0.05
DEFAULT_LOWER = -0.05
DEFAULT_DECAY = 0.2


class TerminalCase(str, Enum):
    UPPER_HIT = "upper_hit"
    EXHAUSTED = "exhausted"
    LOWER_HIT = "lower_hit"


class StepKind(str, Enum):
    INIT_DRIFT = "init_drift"
    DIFFUSION = "diffusion"


@dataclass(frozen=True)
class SourceItem:
    source_id: str
    text: str


@dataclass(frozen=True)
class Candidate:
    producer_id: str
    text: str
    score: Optional[float] = None
    # transport attempts spent producing this candidate (>1 only with retries)
    attempts: int = 1

    def __post_init__(self):
        if not self.producer_id:
            raise InvalidConfig("producer_id must be non-empty")
        if self.score is not None and not math.isfinite(self.score):
            raise InvalidScore(f"non-finite score {self.score!r} for {self.producer_id!r}")


@dataclass(frozen=True)
class BoundaryPair:
    upper: float
    lower: float

    def __post_init__(self):
        if not (self.upper > 0 and self.lower < 0):
            raise InvalidConfig(
                f"boundaries need upper > 0 > lower, got ({self.upper}, {self.lower})"
            )


@dataclass(frozen=True)
class TraceStep:
    step_kind: StepKind
    producer_id: str
    score: float
    reference_id: str
    reference_score: float
    diffusion_value: float
    drift_after: float
    upper_after: float
    lower_after: float
    stopped: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["step_kind"] = self.step_kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TraceStep":
        d = dict(d)
        d["step_kind"] = StepKind(d["step_kind"])
        return cls(**d)


@dataclass(frozen=True)
class Decision:
    terminal_case: TerminalCase
    chosen: Candidate
    queries_used: int
    trace: list
    pool: list
    prompt_order: list
    shuffle_seed: Optional[int] = None
    scorer_calls: int = 0

    @property
    def attempts(self) -> int:
        return sum(c.attempts for c in self.pool)

    def trace_dicts(self) -> list:
        return [s.to_dict() for s in self.trace]


@dataclass(frozen=True)
class RoutingConfig:
    initial_upper: float = DEFAULT_UPPER
    initial_lower: float = DEFAULT_LOWER
    decay: float = DEFAULT_DECAY
    prompt_ids: tuple = ()
    shuffle_seed: Optional[int] = None
    check_initial_drift: bool = False

    def __post_init__(self):
        object.__setattr__(self, "prompt_ids", tuple(self.prompt_ids))
        for name in ("initial_upper", "initial_lower", "decay"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise InvalidConfig(f"{name} must be a finite number, got {v!r}")
        if not self.initial_upper > 0:
            raise InvalidConfig(f"initial_upper must be > 0, got {self.initial_upper}")
        if not self.initial_lower < 0:
            raise InvalidConfig(f"initial_lower must be < 0, got {self.initial_lower}")
        if self.decay < 0:
            raise InvalidConfig(f"decay must be >= 0, got {self.decay}")
        if len(set(self.prompt_ids)) != len(self.prompt_ids):
            raise InvalidConfig(f"prompt_ids contains duplicates: {list(self.prompt_ids)}")
        if any(not p for p in self.prompt_ids):
            raise InvalidConfig("prompt_ids must be non-empty strings")
        if self.shuffle_seed is not None:
            try:
                _rng.check_seed(self.shuffle_seed)
            except (TypeError, ValueError) as e:
                raise InvalidConfig(f"shuffle_seed: {e}") from None

    @property
    def initial_boundaries(self) -> BoundaryPair:
        return BoundaryPair(self.initial_upper, self.initial_lower)

    def boundaries_at(self, iteration: int) -> BoundaryPair:
        """Boundaries after ``iteration`` decay steps."""
        f = math.exp(-self.decay * iteration)
        return BoundaryPair(self.initial_upper * f, self.initial_lower * f)


class Generator(Protocol):
    producer_id: str

    def generate(self, source: SourceItem) -> Candidate: ...


class Scorer(Protocol):
    def score(self, source: SourceItem, candidate: Candidate) -> float: ...


@dataclass
class ProviderSet:
    """Generators for one routing setup: two baselines plus prompt generators
    keyed by producer id."""

    baseline_a: Generator
    baseline_b: Generator
    prompts: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [self.baseline_a.producer_id, self.baseline_b.producer_id]
        for key, gen in self.prompts.items():
            if key != gen.producer_id:
                raise InvalidConfig(f"prompt key {key!r} != producer_id {gen.producer_id!r}")
            ids.append(key)
        if len(set(ids)) != len(ids):
            raise InvalidConfig(f"producer ids must be unique, got {ids}")

    @property
    def prompt_ids(self) -> list:
        return list(self.prompts)


# ---------------------------------------------------------------------------
# evidence arithmetic


def _finite(*values):
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise InvalidScore(f"score must be a finite number, got {v!r}")


def init_drift(score_a: float, score_b: float) -> float:
    """Initial evidence: how much better baseline B scored than baseline A."""
    _finite(score_a, score_b)
    return score_b - score_a


def diffusion(score_prompt: float, score_a: float) -> float:
    """Evidence from one prompt candidate, always measured against baseline A."""
    _finite(score_prompt, score_a)
    return score_prompt - score_a


def decay_boundaries(b: BoundaryPair, decay: float) -> BoundaryPair:
    if not decay >= 0:
        raise InvalidConfig(f"decay must be >= 0, got {decay}")
    f = math.exp(-decay)
    return BoundaryPair(b.upper * f, b.lower * f)


def shuffle_prompts(prompt_ids: Sequence, seed: Optional[int] = None) -> list:
    """Uniform random permutation, reproducible for a given 64-bit seed."""
    if seed is None:
        seed = _rng.draw_seed()
    return _rng.fisher_yates(prompt_ids, seed)


def argmax_candidate(pool: Iterable[Candidate]) -> Candidate:
    """Highest score wins; ties go to the earliest pool member."""
    best = None
    for c in pool:
        if best is None or c.score > best.score:
            best = c
    if best is None:
        raise ValueError("empty candidate pool")
    return best


# ---------------------------------------------------------------------------
# episode execution


def _generate(gen: Generator, source: SourceItem) -> Candidate:
    try:
        cand = gen.generate(source)
    except GenerationFailed:
        raise
    except DDMRouteError as e:
        raise GenerationFailed(gen.producer_id, e) from e
    except Exception as e:
        raise GenerationFailed(gen.producer_id, e) from e
    if cand.producer_id != gen.producer_id:
        raise GenerationFailed(
            gen.producer_id, f"generator returned producer_id {cand.producer_id!r}"
        )
    return cand


def _score(scorer: Scorer, source: SourceItem, cand: Candidate) -> Candidate:
    try:
        s = scorer.score(source, cand)
    except ScoringFailed:
        raise
    except Exception as e:
        raise ScoringFailed(cand.producer_id, e) from e
    if isinstance(s, bool) or not isinstance(s, (int, float)) or not math.isfinite(s):
        raise ScoringFailed(cand.producer_id, f"non-finite or missing score {s!r}")
    return replace(cand, score=float(s))


def _check_providers(providers: ProviderSet, prompt_ids: Sequence):
    missing = [p for p in prompt_ids if p not in providers.prompts]
    if missing:
        raise InvalidConfig(f"no generator for configured prompts: {missing}")
    base = {providers.baseline_a.producer_id, providers.baseline_b.producer_id}
    clash = base.intersection(prompt_ids)
    if clash:
        raise InvalidConfig(f"prompt ids collide with baseline ids: {sorted(clash)}")


def _classify(drift: float, b: BoundaryPair) -> Optional[TerminalCase]:
    if drift >= b.upper:
        return TerminalCase.UPPER_HIT
    if drift <= b.lower:
        return TerminalCase.LOWER_HIT
    return None


def _baselines(source, providers, scorer):
    a = _score(scorer, source, _generate(providers.baseline_a, source))
    b = _score(scorer, source, _generate(providers.baseline_b, source))
    return a, b


@dataclass
class EvidenceState:
    """Mutable state of one episode between prompt iterations."""

    config: RoutingConfig
    drift: float
    boundaries: BoundaryPair
    iteration: int
    pool: list
    trace: list

    @classmethod
    def start(cls, a: Candidate, b: Candidate, config: RoutingConfig) -> "EvidenceState":
        drift = init_drift(a.score, b.score)
        bounds = config.initial_boundaries
        step = TraceStep(
            StepKind.INIT_DRIFT, b.producer_id, b.score, a.producer_id, a.score,
            0.0, drift, bounds.upper, bounds.lower,
        )
        return cls(config, drift, bounds, 0, [a, b], [step])

    @property
    def reference(self) -> Candidate:
        return self.pool[0]

    def check(self) -> Optional[TerminalCase]:
        return _classify(self.drift, self.boundaries)

    def absorb(self, cand: Candidate) -> Optional[TerminalCase]:
        """Add one scored prompt candidate: accumulate its evidence, decay the
        boundaries, then test them.  Returns the hit, if any."""
        ref = self.reference
        step = diffusion(cand.score, ref.score)
        self.pool.append(cand)
        self.iteration += 1
        self.drift = self.drift + step
        self.boundaries = self.config.boundaries_at(self.iteration)
        self.trace.append(
            TraceStep(
                StepKind.DIFFUSION, cand.producer_id, cand.score, ref.producer_id, ref.score,
                step, self.drift, self.boundaries.upper, self.boundaries.lower,
            )
        )
        return self.check()

    def conclude(self, hit: Optional[TerminalCase]):
        """Terminal rule: lower hit keeps baseline A, anything else takes the
        pool argmax."""
        if hit is not None:
            self.trace[-1] = replace(self.trace[-1], stopped=True)
        terminal = hit if hit is not None else TerminalCase.EXHAUSTED
        chosen = self.reference if terminal is TerminalCase.LOWER_HIT else argmax_candidate(self.pool)
        return terminal, chosen


def route(
    source: SourceItem,
    providers: ProviderSet,
    scorer: Scorer,
    config: RoutingConfig,
) -> Decision:
    """Run one routing episode and return the decision with its full trace.

    Boundaries after ``k`` prompt iterations are computed in closed form as
    ``initial * exp(-decay * k)``, which is the k-fold product of the
    per-iteration decay without accumulated rounding.
    """
    prompt_ids = list(config.prompt_ids)
    _check_providers(providers, prompt_ids)
    seed = config.shuffle_seed if config.shuffle_seed is not None else _rng.draw_seed()
    order = shuffle_prompts(prompt_ids, seed)

    a, b = _baselines(source, providers, scorer)
    state = EvidenceState.start(a, b, config)
    hit = None
    if config.check_initial_drift or not order:
        hit = state.check()
    if hit is None:
        for pid in order:
            cand = _score(scorer, source, _generate(providers.prompts[pid], source))
            hit = state.absorb(cand)
            if hit is not None:
                break

    terminal, chosen = state.conclude(hit)
    return Decision(
        terminal_case=terminal,
        chosen=chosen,
        queries_used=len(state.pool),
        trace=state.trace,
        pool=state.pool,
        prompt_order=order,
        shuffle_seed=seed,
        scorer_calls=len(state.pool),
    )


def select_all(
    source: SourceItem,
    providers: ProviderSet,
    scorer: Scorer,
    prompt_ids: Optional[Sequence] = None,
    seed: Optional[int] = None,
) -> Decision:
    """Generate and score every candidate, return the best one.

    Prompts are consumed in shuffled order when ``seed`` is given (so pool
    order, and therefore tie-breaking, matches :func:`route` under the same
    seed) and in configured order otherwise.
    """
    prompt_ids = list(providers.prompt_ids if prompt_ids is None else prompt_ids)
    _check_providers(providers, prompt_ids)
    order = prompt_ids if seed is None else shuffle_prompts(prompt_ids, seed)

    a, b = _baselines(source, providers, scorer)
    pool = [a, b]
    drift = init_drift(a.score, b.score)
    inf = math.inf
    trace = [
        TraceStep(StepKind.INIT_DRIFT, b.producer_id, b.score, a.producer_id, a.score,
                  0.0, drift, inf, -inf)
    ]
    for pid in order:
        cand = _score(scorer, source, _generate(providers.prompts[pid], source))
        pool.append(cand)
        step = diffusion(cand.score, a.score)
        drift = drift + step
        trace.append(
            TraceStep(StepKind.DIFFUSION, pid, cand.score, a.producer_id, a.score,
                      step, drift, inf, -inf)
        )
    return Decision(
        terminal_case=TerminalCase.EXHAUSTED,
        chosen=argmax_candidate(pool),
        queries_used=len(pool),
        trace=trace,
        pool=pool,
        prompt_order=list(order),
        shuffle_seed=seed,
        scorer_calls=len(pool),
    )


def max_routing(source: SourceItem, providers: ProviderSet, scorer: Scorer) -> Decision:
    """Pick the better of the two baselines (ties go to baseline A)."""
    a, b = _baselines(source, providers, scorer)
    drift = init_drift(a.score, b.score)
    inf = math.inf
    trace = [
        TraceStep(StepKind.INIT_DRIFT, b.producer_id, b.score, a.producer_id, a.score,
                  0.0, drift, inf, -inf)
    ]
    return Decision(
        terminal_case=TerminalCase.EXHAUSTED,
        chosen=argmax_candidate([a, b]),
        queries_used=2,
        trace=trace,
        pool=[a, b],
        prompt_order=[],
        scorer_calls=2,
    )


# ---------------------------------------------------------------------------
# replay


@dataclass(frozen=True)
class Replay:
    terminal_case: TerminalCase
    chosen_producer: str
    drifts: list
    queries_used: int


def replay_trace(trace: Sequence, config: RoutingConfig) -> Replay:
    """Recompute an episode's outcome from its trace alone.

    Raises :class:`InvalidConfig` when the trace is inconsistent with the
    config (wrong drift arithmetic, wrong boundaries, or a stop flag that
    does not match the boundary test).
    """
    steps = [s if isinstance(s, TraceStep) else TraceStep.from_dict(s) for s in trace]
    if not steps or steps[0].step_kind is not StepKind.INIT_DRIFT:
        raise InvalidConfig("trace must start with an init_drift step")
    first = steps[0]
    ref_id, ref_score = first.reference_id, first.reference_score
    drift = init_drift(ref_score, first.score)
    if drift != first.drift_after:
        raise InvalidConfig("init_drift step drift_after does not match its scores")
    pool = [Candidate(ref_id, "", ref_score), Candidate(first.producer_id, "", first.score)]
    drifts = [drift]
    bounds = config.initial_boundaries
    hit = None
    n_prompts = len(steps) - 1
    if config.check_initial_drift or (n_prompts == 0 and not config.prompt_ids):
        hit = _classify(drift, bounds)
        if hit is not None and n_prompts:
            raise InvalidConfig("trace continues past an initial boundary hit")
    for k, s in enumerate(steps[1:], start=1):
        if s.step_kind is not StepKind.DIFFUSION:
            raise InvalidConfig(f"step {k} is not a diffusion step")
        if s.reference_score != ref_score:
            raise InvalidConfig(f"step {k} uses a different reference score")
        step = diffusion(s.score, ref_score)
        if step != s.diffusion_value:
            raise InvalidConfig(f"step {k} diffusion_value mismatch")
        drift = drift + step
        if drift != s.drift_after:
            raise InvalidConfig(f"step {k} drift_after mismatch")
        drifts.append(drift)
        pool.append(Candidate(s.producer_id, "", s.score))
        bounds = config.boundaries_at(k)
        hit = _classify(drift, bounds)
        if hit is not None and k != n_prompts:
            raise InvalidConfig(f"trace continues past a boundary hit at step {k}")
    if bool(hit is not None) != bool(steps[-1].stopped):
        raise InvalidConfig("stop flag disagrees with the boundary test")
    if hit is None and n_prompts != len(config.prompt_ids):
        raise InvalidConfig("trace ended early without a boundary hit")
    terminal = hit if hit is not None else TerminalCase.EXHAUSTED
    chosen = ref_id if terminal is TerminalCase.LOWER_HIT else argmax_candidate(pool).producer_id
    return Replay(terminal, chosen, drifts, len(pool))
