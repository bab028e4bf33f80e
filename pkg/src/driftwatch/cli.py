"""Command line entry point: ``driftwatch watch|analyze|report|arl``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
from pathlib import Path

from .detect import DetectorConfig, estimate_arl
from .ingest import LangPolicy, SourceError, SourceSpec
from .lexicon import LexiconError, LexiconKind
from .report import DEFAULT_COLORS, CsvFormatError
from .runner import ConfigError, RunConfig, analyze, report, watch

logger = logging.getLogger("driftwatch")

EXIT_OK, EXIT_CONFIG, EXIT_SOURCE = 0, 1, 2
CONFIG_ENV = "DRIFTWATCH_CONFIG"


def _penalty(value: str):
    if value == "default":
        return value
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError("penalty must be a number or 'default'") from None


def _colors(value: str) -> tuple[str, str, str]:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 3 or not all(parts):
        raise argparse.ArgumentTypeError("--colors takes three comma-separated colors: pos,neg,offline")
    return tuple(parts)  # type: ignore[return-value]


def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detector")
    g.add_argument("--theta0", type=float, help="initial pre-change mean (default -0.5)")
    g.add_argument("--delta", type=float, help="change magnitude (default 0.5)")
    g.add_argument("--sigma", type=float, help="noise standard deviation (default 1.0)")
    g.add_argument("--threshold", type=float, help="detection threshold h (default 20)")
    g.add_argument("--reset-window", type=int, help="observations averaged on reset (default 50)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftwatch",
        description="Online sentiment change detection over a stream of short posts.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    w = sub.add_parser("watch", help="score a post stream and detect changes online")
    w.add_argument("--config", help=f"JSON run config (default: ${CONFIG_ENV})")
    w.add_argument("--source", help="NDJSON file, '-' for stdin, or scheme://endpoint")
    w.add_argument("--replay-rate", type=float, help="posts per second when replaying")
    w.add_argument("--lang-policy", choices=[p.value for p in LangPolicy])
    w.add_argument("--lexicon", help="lexicon file, or bundled:bing / bundled:afinn")
    w.add_argument("--lexicon-kind", choices=[k.value for k in LexiconKind])
    w.add_argument("--out", help="output directory")
    w.add_argument("--save-tokens", action="store_true", default=None,
                   help="write token bags to tokens.ndjson for later reporting")
    w.add_argument("--svg", action="store_true", default=None, help="render series.svg at the end")
    w.add_argument("--threaded", action="store_true", default=None,
                   help="run ingest in a separate thread behind a bounded queue")
    w.add_argument("--queue-capacity", type=int)
    _add_detector_flags(w)

    a = sub.add_parser("analyze", help="offline analysis of a scores CSV")
    a.add_argument("scores_csv")
    a.add_argument("--events", help="events.ndjson from a watch run, enables the comparison")
    a.add_argument("--window", type=int, default=200)
    a.add_argument("--penalty", type=_penalty, default="default")
    a.add_argument("--max-cp", type=int, help="max changepoints (default: number of events, else 5)")
    a.add_argument("--tolerance", type=int, default=300)
    a.add_argument("--bin-width", type=float, default=1.0)
    a.add_argument("--out", default="driftwatch-analysis")

    r = sub.add_parser("report", help="per-segment term rankings and plots")
    r.add_argument("scores_csv")
    r.add_argument("events_ndjson")
    r.add_argument("tokens_store")
    r.add_argument("--top-k", type=int, default=30)
    r.add_argument("--colors", type=_colors, default=DEFAULT_COLORS)
    r.add_argument("--window", type=int, default=200)
    r.add_argument("--out", default="driftwatch-report")

    arl = sub.add_parser("arl", help="Monte Carlo average run length")
    _add_detector_flags(arl)
    arl.add_argument("--true-mean", type=float, required=True)
    arl.add_argument("--runs", type=int, default=1000)
    arl.add_argument("--max-len", type=int, default=100_000)
    arl.add_argument("--seed", type=int, default=0)
    return parser


def _detector_overrides(args) -> dict:
    pairs = {
        "theta0_init": args.theta0,
        "delta": args.delta,
        "sigma": args.sigma,
        "h": args.threshold,
        "reset_window": args.reset_window,
    }
    return {k: v for k, v in pairs.items() if v is not None}


def run_config_from_args(args, environ=os.environ) -> RunConfig:
    """Defaults, then the JSON config file, then command line flags."""
    doc: dict = {}
    path = args.config or environ.get(CONFIG_ENV)
    if path:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
    if args.source is not None:
        spec = SourceSpec.from_arg(args.source)
        doc["source"] = {"kind": spec.kind.value, "location": spec.location}
    if args.replay_rate is not None:
        src = doc.get("source") or {"kind": "stdin", "location": "-"}
        if isinstance(src, str):
            spec = SourceSpec.from_arg(src)
            src = {"kind": spec.kind.value, "location": spec.location}
        doc["source"] = {**src, "replay_rate": args.replay_rate}
    for key, value in (
        ("lang_policy", args.lang_policy),
        ("lexicon", args.lexicon),
        ("lexicon_kind", args.lexicon_kind),
        ("output_dir", args.out),
        ("queue_capacity", args.queue_capacity),
        ("threaded", args.threaded),
    ):
        if value is not None:
            doc[key] = value
    overrides = _detector_overrides(args)
    if overrides:
        doc["detector"] = {**doc.get("detector", {}), **overrides}
    emit = dict(doc.get("emit", {}))
    if args.save_tokens:
        emit["tokens"] = True
    if args.svg:
        emit["svg"] = True
    if emit:
        doc["emit"] = emit
    return RunConfig.from_dict(doc)


def cmd_watch(args) -> int:
    try:
        config = run_config_from_args(args)
    except ConfigError as exc:
        print(f"driftwatch: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = watch(config)
    except (LexiconError, ConfigError) as exc:
        print(f"driftwatch: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SourceError as exc:
        print(f"driftwatch: {exc}", file=sys.stderr)
        return EXIT_SOURCE
    doc = summary.to_dict()
    print(
        f"posts read: {doc['lines']}, accepted: {doc['accepted']}, "
        f"events: +{doc['events']['positive']} / -{doc['events']['negative']}"
        + (" (interrupted)" if doc["interrupted"] else ""),
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        result = analyze(
            args.scores_csv, args.out, window=args.window, penalty=args.penalty,
            max_cp=args.max_cp, tolerance=args.tolerance, events_path=args.events,
            bin_width=args.bin_width,
        )
    except (CsvFormatError, ValueError, OSError) as exc:
        print(f"driftwatch: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cps = result.segmentation["changepoints"] if result.segmentation else []
    print(json.dumps({"changepoints": cps, "comparison": result.comparison}))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        files = report(args.scores_csv, args.events_ndjson, args.tokens_store, args.out,
                       top_k=args.top_k, colors=args.colors, window=args.window)
    except (CsvFormatError, ValueError, OSError) as exc:
        print(f"driftwatch: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in files:
        print(f)
    return EXIT_OK


def cmd_arl(args) -> int:
    try:
        config = DetectorConfig(**{**DetectorConfig().to_dict(), **_detector_overrides(args)})
        est = estimate_arl(config, args.true_mean, args.runs, args.max_len, args.seed)
    except ValueError as exc:
        print(f"driftwatch: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(est._asdict()))
    return EXIT_OK


def _sigterm(signum, frame):
    raise KeyboardInterrupt


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "watch":
        try:
            signal.signal(signal.SIGTERM, _sigterm)
        except ValueError:  # not in the main thread
            pass
    handlers = {"watch": cmd_watch, "analyze": cmd_analyze, "report": cmd_report, "arl": cmd_arl}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
