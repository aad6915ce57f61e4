"""Command-line front end.

Exit codes: 0 success, 1 validation error, 2 runtime/provider error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import prompts
from . import rng as _rng
from .config import load_config
from .engine import ProviderSet, RoutingConfig, replay_trace, route
from .errors import (
    DDMRouteError,
    InvalidConfig,
    MissingPlaceholder,
    RecordNotFound,
    UnknownTemplate,
)
from .harness import ExperimentError, run_decay_sweep, run_experiment
from .providers import (
    HostLimiter,
    OfflineRecord,
    RecordStore,
    build_generator,
    build_scorer,
)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def _exit_code(e: Exception) -> int:
    if isinstance(e, ExperimentError):
        e = e.cause
    if isinstance(e, (InvalidConfig, MissingPlaceholder, UnknownTemplate)):
        return EXIT_VALIDATION
    return EXIT_RUNTIME


def _u64(text):
    try:
        return _rng.check_seed(int(text, 0))
    except (TypeError, ValueError) as e:
        raise argparse.ArgumentTypeError(str(e))


def _decays(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _resolve_seed(args, cfg_seed=None):
    if args.seed is not None:
        return args.seed
    if cfg_seed is not None:
        return cfg_seed
    seed = _rng.draw_seed()
    print(f"seed: {seed}", file=sys.stderr)
    return seed


# ---------------------------------------------------------------------------
# route


def _read_input(path):
    """Parse input JSONL; returns list of (lineno, record)."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                out.append((lineno, OfflineRecord.from_json(json.loads(line))))
            except json.JSONDecodeError as e:
                raise InvalidConfig(f"{path}: line {lineno}: malformed JSON ({e.msg})") from None
            except InvalidConfig as e:
                raise InvalidConfig(f"{path}: line {lineno}: {e}") from None
    return out


def _row(record, decision):
    c = decision.chosen
    return {
        "source_id": record.source_id,
        "chosen_producer": c.producer_id,
        "chosen_text": c.text,
        "chosen_score": c.score,
        "terminal_case": decision.terminal_case.value,
        "queries_used": decision.queries_used,
        "shuffle_seed": decision.shuffle_seed,
        "prompt_order": decision.prompt_order,
        "trace": decision.trace_dicts(),
    }


def cmd_route(args) -> int:
    cfg = load_config(args.config)
    if args.input is None:
        raise InvalidConfig("route needs --input")
    rows = _read_input(args.input)
    store = RecordStore(r for _, r in rows)
    seed = _resolve_seed(args, cfg.seed)
    limiter = HostLimiter(cfg.max_connections_per_host)

    offline_ids = [p for p in cfg.producer_ids if cfg.spec_for(p).kind == "offline"]
    gens = {p: build_generator(cfg.spec_for(p), store, limiter=limiter) for p in cfg.producer_ids}
    providers = ProviderSet(gens[cfg.baseline_a], gens[cfg.baseline_b],
                            {p: gens[p] for p in cfg.routing.prompt_ids})
    scorer_spec = cfg.scorer or ({"kind": "offline"} if len(offline_ids) == len(cfg.producer_ids)
                                 else {"kind": "passthrough"})
    scorer = build_scorer(scorer_spec, store, limiter)

    def run_one(i):
        lineno, record = rows[i]
        missing = record.missing(offline_ids)
        if missing:
            raise RecordNotFound(record.source_id, missing[0])
        rc = replace(cfg.routing, shuffle_seed=_rng.derive_seed(seed, i))
        return _row(record, route(record.source, providers, scorer, rc))

    def guarded(i):
        try:
            return run_one(i), None
        except DDMRouteError as e:
            return None, e

    if not args.lenient:
        # validate coverage before any generator call
        for lineno, record in rows:
            missing = record.missing(offline_ids)
            if missing:
                raise InvalidConfig(
                    f"line {lineno}: record {record.source_id!r} is missing producer {missing[0]!r}"
                )

    out_lines = []
    total = len(rows)
    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as ex:
        for i, (row, e) in enumerate(ex.map(guarded, range(total))):
            if e is not None:
                if not args.lenient:
                    _err(f"line {rows[i][0]} (source {rows[i][1].source_id!r}): {e}")
                    return EXIT_RUNTIME
                row = {"source_id": rows[i][1].source_id, "error": str(e),
                       "error_type": type(e).__name__}
            out_lines.append(json.dumps(row, ensure_ascii=False))
            if (i + 1) % 100 == 0:
                print(f"{i + 1}/{total}", file=sys.stderr)
    Path(args.output).write_text("".join(line + "\n" for line in out_lines), encoding="utf-8")
    print(f"{total}/{total} routed", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate / sweep


def _write_report(report, output):
    out = Path(output)
    out.write_text(report.to_json(), encoding="utf-8")
    out.with_suffix(".csv").write_text(report.to_csv(), encoding="utf-8")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(args, cfg.experiment.get("base_seed"))
    exp = cfg.experiment_config(base_seed=seed, workers=args.workers, sweep=None)
    exp = replace(exp, sweep=None)
    _write_report(run_experiment(exp), args.output)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(args, cfg.experiment.get("base_seed"))
    exp = cfg.experiment_config(base_seed=seed, workers=args.workers, sweep=args.decay_sweep)
    if exp.sweep is None:
        raise InvalidConfig("sweep needs --decay-sweep or experiment.sweep")
    _write_report(run_decay_sweep(exp), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# prompts and traces


def cmd_render_prompt(args) -> int:
    values = {}
    for item in args.var:
        if "=" not in item:
            raise InvalidConfig(f"--var expects NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k] = v
    print(prompts.render(args.template_id, values))
    return EXIT_OK


def cmd_explain_trace(args) -> int:
    cfg = load_config(args.config) if args.config else None
    routing = cfg.routing if cfg else RoutingConfig()
    bad = 0
    with open(args.input, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise InvalidConfig(f"line {lineno}: malformed JSON ({e.msg})") from None
            if "error" in row:
                print(f"{row.get('source_id')}: error row ({row['error']})")
                continue
            print(f"{row['source_id']}: {row['terminal_case']} -> {row['chosen_producer']} "
                  f"(score {row['chosen_score']}, {row['queries_used']} queries)")
            for s in row["trace"]:
                mark = "  <- stop" if s["stopped"] else ""
                print(f"  {s['step_kind']:<10} {s['producer_id']:<28} "
                      f"evidence {s['diffusion_value']:+.6f}  drift {s['drift_after']:+.6f}  "
                      f"bounds [{s['lower_after']:+.6f}, {s['upper_after']:+.6f}]{mark}")
            rc = replace(routing, prompt_ids=tuple(row.get("prompt_order") or routing.prompt_ids))
            try:
                rep = replay_trace(row["trace"], rc)
                ok = (rep.chosen_producer == row["chosen_producer"]
                      and rep.terminal_case.value == row["terminal_case"])
            except InvalidConfig as e:
                ok = False
                print(f"  replay failed: {e}")
            if not ok:
                bad += 1
                print("  replay MISMATCH")
    return EXIT_VALIDATION if bad else EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddmroute", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_output=True):
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=_u64)
        sp.add_argument("--workers", type=int, default=None)
        if need_output:
            sp.add_argument("--output", required=True)

    sp = sub.add_parser("route", help="route an offline JSONL dataset")
    common(sp)
    sp.add_argument("--input")
    sp.add_argument("--lenient", action="store_true",
                    help="record an error row and continue instead of aborting")
    sp.set_defaults(func=cmd_route, workers=1)

    sp = sub.add_parser("simulate", help="compare DDM routing with ALL and Max-Routing")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="run DDM routing across decay values")
    common(sp)
    sp.add_argument("--decay-sweep", type=_decays)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("render-prompt", help="print a rendered prompt template")
    sp.add_argument("template_id")
    sp.add_argument("--var", action="append", default=[], metavar="NAME=VALUE")
    sp.set_defaults(func=cmd_render_prompt)

    sp = sub.add_parser("explain-trace", help="print and replay decision traces")
    sp.add_argument("--input", required=True)
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_explain_trace)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) == "route" and args.workers is None:
        args.workers = 1
    try:
        return args.func(args)
    except (DDMRouteError, OSError) as e:
        _err(e)
        return _exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
