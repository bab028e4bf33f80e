"""Pipelines behind the ``watch``, ``analyze`` and ``report`` subcommands."""
from __future__ import annotations

import json
import logging
import queue
import sys
import threading
import time
from itertools import repeat
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Iterator

from .detect import ChangeEvent, DetectorConfig, DetectorState
from .ingest import (
    DEFAULT_HEURISTIC_THRESHOLD,
    IngestStats,
    LangPolicy,
    SourceKind,
    SourceSpec,
    ingest,
    open_source,
)
from .lexicon import Lexicon, LexiconKind, bundled_lexicon, load_lexicon
from .offline import ScoreSeries, compare, histogram, moving_average, segment
from .report import (
    DEFAULT_COLORS,
    export_csv,
    read_series_csv,
    render_ranking_svg,
    render_series_svg,
    split_by_events,
    tfidf_rank,
)
from .textprep import clean

logger = logging.getLogger(__name__)

SCORES_FILE = "scores.csv"
EVENTS_FILE = "events.ndjson"
RUNLOG_FILE = "runlog.ndjson"
CONFIG_FILE = "config.json"
TOKENS_FILE = "tokens.ndjson"
SUMMARY_FILE = "summary.json"


class ConfigError(ValueError):
    pass


@dataclass
class EmitFlags:
    scores_csv: bool = True
    events_ndjson: bool = True
    svg: bool = False
    tokens: bool = False


@dataclass
class RunConfig:
    source: SourceSpec = field(default_factory=lambda: SourceSpec(SourceKind.STDIN))
    lexicon: str = "bundled:bing"
    lexicon_kind: LexiconKind = LexiconKind.BINARY
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    lang_policy: LangPolicy = LangPolicy.METADATA
    lang_threshold: float = DEFAULT_HEURISTIC_THRESHOLD
    output_dir: str = "driftwatch-out"
    emit: EmitFlags = field(default_factory=EmitFlags)
    queue_capacity: int = 1024
    threaded: bool = False

    def to_dict(self) -> dict:
        return {
            "source": {
                "kind": self.source.kind.value,
                "location": self.source.location,
                "replay_rate": self.source.replay_rate,
            },
            "lexicon": self.lexicon,
            "lexicon_kind": LexiconKind(self.lexicon_kind).value,
            "detector": self.detector.to_dict(),
            "lang_policy": LangPolicy(self.lang_policy).value,
            "lang_threshold": self.lang_threshold,
            "output_dir": self.output_dir,
            "emit": asdict(self.emit),
            "queue_capacity": self.queue_capacity,
            "threaded": self.threaded,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        """Build a config from the JSON layout written by :meth:`to_dict`; missing keys keep defaults."""
        try:
            cfg = cls()
            if "source" in obj:
                src = obj["source"]
                if isinstance(src, str):
                    cfg.source = SourceSpec.from_arg(src)
                else:
                    cfg.source = SourceSpec(
                        SourceKind(src.get("kind", "file-replay")),
                        src.get("location", "-"),
                        src.get("replay_rate"),
                    )
            if "lexicon" in obj:
                cfg.lexicon = str(obj["lexicon"])
            if "lexicon_kind" in obj:
                cfg.lexicon_kind = LexiconKind(obj["lexicon_kind"])
            if "detector" in obj:
                cfg.detector = DetectorConfig(**{**cfg.detector.to_dict(), **obj["detector"]})
            if "lang_policy" in obj:
                cfg.lang_policy = LangPolicy(obj["lang_policy"])
            if "lang_threshold" in obj:
                cfg.lang_threshold = float(obj["lang_threshold"])
            if "output_dir" in obj:
                cfg.output_dir = str(obj["output_dir"])
            if "emit" in obj:
                cfg.emit = EmitFlags(**{**asdict(cfg.emit), **obj["emit"]})
            if "queue_capacity" in obj:
                cfg.queue_capacity = int(obj["queue_capacity"])
            if "threaded" in obj:
                cfg.threaded = bool(obj["threaded"])
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        if cfg.queue_capacity < 1:
            raise ConfigError("queue_capacity must be >= 1")
        return cfg


def resolve_lexicon(spec: str, kind: LexiconKind | str) -> Lexicon:
    """``bundled:<name>`` picks a shipped lexicon, anything else is a file path."""
    if spec.startswith("bundled:"):
        return bundled_lexicon(spec.split(":", 1)[1])
    return load_lexicon(spec, kind)


# --- watch ----------------------------------------------------------------

@dataclass
class PipelineCounters:
    """Instrumentation for the bounded-memory guarantee."""

    in_flight: int = 0
    max_in_flight: int = 0
    max_ring: int = 0


@dataclass
class WatchSummary:
    lines: int
    accepted: int
    rejected: dict
    events: dict
    max_in_flight: int
    max_ring: int
    queue_capacity: int
    reset_window: int
    interrupted: bool = False
    elapsed_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _score_stream(records, lexicon: Lexicon) -> Iterator[tuple]:
    get = dict(lexicon.entries).get
    zeros = repeat(0)
    for rec in records:
        tokens = clean(rec.text).split()
        yield rec.seq, rec.created_at, rec.stamp, sum(map(get, tokens, zeros)), tokens


_DONE = object()


def _threaded(items: Iterator[tuple], capacity: int, counters: PipelineCounters) -> Iterator[tuple]:
    """Run the producer side in a thread, handing items over a bounded FIFO queue."""
    q: queue.Queue = queue.Queue(maxsize=capacity)
    failure: list[BaseException] = []
    stop = threading.Event()

    def produce() -> None:
        try:
            for item in items:
                while not stop.is_set():
                    try:
                        q.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if stop.is_set():
                    return
        except BaseException as exc:  # re-raised in the consumer
            failure.append(exc)
        finally:
            q.put(_DONE)

    worker = threading.Thread(target=produce, name="driftwatch-ingest", daemon=True)
    worker.start()
    try:
        while True:
            item = q.get()
            if item is _DONE:
                break
            size = q.qsize() + 1
            if size > counters.max_in_flight:
                counters.max_in_flight = size
            yield item
    finally:
        stop.set()
        while worker.is_alive():
            try:
                q.get_nowait()
            except queue.Empty:
                worker.join(0.05)
    if failure:
        raise failure[0]


def watch(config: RunConfig, stdout: IO[str] | None = None) -> WatchSummary:
    """Run ingest, cleaning, scoring and detection over the configured source.

    Scores and events are written under ``config.output_dir`` as they occur;
    each event is also printed to ``stdout`` as one NDJSON line. Raises
    :class:`~driftwatch.lexicon.LexiconError` or :class:`ConfigError` before
    any file is created, and :class:`~driftwatch.ingest.SourceError` if the
    source cannot be opened.
    """
    stdout = stdout if stdout is not None else sys.stdout
    lexicon = resolve_lexicon(config.lexicon, config.lexicon_kind)
    stats = IngestStats()
    lines = open_source(config.source, stats)

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    # where the run was written is not part of what it computed; leaving it
    # out keeps every output file byte-identical across reruns
    persisted = config.to_dict()
    del persisted["output_dir"]
    (out / CONFIG_FILE).write_text(json.dumps(persisted, indent=2) + "\n", encoding="utf-8")

    detector = DetectorState(config.detector)
    update = detector.update
    ring = detector.ring
    counters = PipelineCounters()
    by_direction: Counter = Counter()
    emit = config.emit
    started = time.perf_counter()

    records = ingest(lines, config.lang_policy, config.lang_threshold, stats)
    items = _score_stream(records, lexicon)
    if config.threaded:
        items = _threaded(items, config.queue_capacity, counters)

    scores_fh = (out / SCORES_FILE).open("w", encoding="utf-8", newline="") if emit.scores_csv else None
    events_fh = (out / EVENTS_FILE).open("w", encoding="utf-8") if emit.events_ndjson else None
    tokens_fh = (out / TOKENS_FILE).open("w", encoding="utf-8") if emit.tokens else None
    runlog = (out / RUNLOG_FILE).open("w", encoding="utf-8")
    interrupted = False
    try:
        header = {
            "type": "header",
            "config": persisted,
            "lexicon": {"name": lexicon.name, "kind": lexicon.kind.value, "size": lexicon.size},
        }
        runlog.write(json.dumps(header) + "\n")
        if scores_fh:
            scores_fh.write("seq,timestamp,score\r\n")
        log_write = runlog.write
        score_write = scores_fh.write if scores_fh else None
        try:
            for seq, created_at, ts, total, tokens in items:
                log_write(f'{{"type":"score","seq":{seq},"timestamp":"{ts}","score":{total}}}\n')
                if score_write:
                    score_write(f"{seq},{ts},{total}\r\n")
                if tokens_fh:
                    tokens_fh.write(json.dumps({"seq": seq, "tokens": tokens}, ensure_ascii=False) + "\n")
                if len(ring) >= counters.max_ring:
                    counters.max_ring = min(len(ring) + 1, ring.maxlen)
                event = update(total, created_at)
                if event is not None:
                    by_direction[event.direction.value] += 1
                    line = json.dumps(event.to_dict())
                    log_write(f'{{"type":"event","event":{line}}}\n')
                    if events_fh:
                        events_fh.write(line + "\n")
                        events_fh.flush()
                    stdout.write(line + "\n")
                    stdout.flush()
        except KeyboardInterrupt:
            interrupted = True
            logger.warning("interrupted; flushing logs")
    finally:
        for fh in (scores_fh, events_fh, tokens_fh, runlog):
            if fh is not None:
                fh.close()

    if not config.threaded:
        # generator chain: one record between ingest and detector at a time
        counters.max_in_flight = stats.max_buffered
    summary = WatchSummary(
        lines=stats.lines,
        accepted=stats.accepted,
        rejected=dict(sorted(stats.rejected.items())),
        events={"positive": by_direction["positive"], "negative": by_direction["negative"]},
        max_in_flight=counters.max_in_flight,
        max_ring=max(counters.max_ring, len(ring)),
        queue_capacity=config.queue_capacity,
        reset_window=config.detector.reset_window,
        interrupted=interrupted,
        elapsed_s=time.perf_counter() - started,
    )
    summary_doc = summary.to_dict()
    summary_doc.pop("elapsed_s")
    (out / SUMMARY_FILE).write_text(json.dumps(summary_doc, indent=2) + "\n", encoding="utf-8")
    if emit.svg and emit.scores_csv and stats.accepted:
        series = read_series_csv(out / SCORES_FILE)
        events = read_events(out / EVENTS_FILE) if emit.events_ndjson else []
        render_series_svg(series, out / "series.svg", moving_average(series, 200), events)
    return summary


def read_events(path: str | Path) -> list[ChangeEvent]:
    events = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                events.append(ChangeEvent.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: bad event: {exc}") from None
    return events


def replay_runlog(path: str | Path) -> tuple[list[dict], list[dict]]:
    """Re-run the detector over a run log's scores.

    Returns ``(logged_events, replayed_events)`` as dicts in NDJSON form.
    """
    from .ingest import parse_timestamp

    logged: list[dict] = []
    config = None

    def scores() -> Iterator:
        nonlocal config
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                obj = json.loads(line)
                kind = obj.get("type")
                if kind == "header":
                    config = DetectorConfig(**obj["config"]["detector"])
                elif kind == "score":
                    yield obj["score"], parse_timestamp(obj["timestamp"])
                elif kind == "event":
                    logged.append(obj["event"])

    replayed = []
    state = None
    for y, ts in scores():
        if state is None:
            state = DetectorState(config)
        event = state.update(y, ts)
        if event is not None:
            replayed.append(json.loads(json.dumps(event.to_dict())))
    return logged, replayed


# --- analyze --------------------------------------------------------------

@dataclass
class AnalyzeResult:
    segmentation: dict | None
    comparison: dict | None
    files: list[Path]


def analyze(
    scores_csv: str | Path,
    out_dir: str | Path,
    window: int = 200,
    penalty: float | str = "default",
    max_cp: int | None = None,
    tolerance: int = 300,
    events_path: str | Path | None = None,
    bin_width: float = 1.0,
) -> AnalyzeResult:
    """Moving average, histogram, segmentation and (optionally) online/offline comparison.

    When ``max_cp`` is None it is set to the number of online events if an
    events file is given, else 5.
    """
    series = read_series_csv(scores_csv)
    values = [0.0 if v is None else v for v in series.values]
    series = ScoreSeries(values, series.timestamps)
    events = read_events(events_path) if events_path else None
    if max_cp is None:
        max_cp = len(events) if events is not None else 5

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    ma = moving_average(series, window)
    files.append(export_csv(ma, out / "moving_average.csv"))
    hist_path = out / "histogram.csv"
    with hist_path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("bin_low,count\r\n")
        for low, count in histogram(series, bin_width):
            fh.write(f"{low:.6g},{count}\r\n")
    files.append(hist_path)

    seg_doc = None
    changepoints: list[int] = []
    if len(series) >= 2:
        seg = segment(series, penalty, max_cp)
        changepoints = seg.changepoints
        seg_doc = asdict(seg)
    seg_path = out / "segmentation.json"
    seg_path.write_text(json.dumps(seg_doc, indent=2) + "\n", encoding="utf-8")
    files.append(seg_path)

    cmp_doc = None
    if events is not None:
        report = compare(events, changepoints, tolerance)
        cmp_doc = {"tolerance": tolerance, **report.to_dict()}
        cmp_path = out / "comparison.json"
        cmp_path.write_text(json.dumps(cmp_doc, indent=2) + "\n", encoding="utf-8")
        files.append(cmp_path)
    if len(series):
        files.append(render_series_svg(series, out / "analysis.svg", ma, events or (), changepoints))
    return AnalyzeResult(seg_doc, cmp_doc, files)


# --- report ---------------------------------------------------------------

def read_tokens(path: str | Path) -> list[list[str]]:
    bags = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                bags.append([str(t) for t in obj["tokens"]])
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: bad token record: {exc}") from None
    return bags


def report(
    scores_csv: str | Path,
    events_path: str | Path,
    tokens_path: str | Path,
    out_dir: str | Path,
    top_k: int = 30,
    colors=DEFAULT_COLORS,
    window: int = 200,
) -> list[Path]:
    """Per-segment TF-IDF rankings (CSV + bar chart) plus the annotated series plot."""
    series = read_series_csv(scores_csv)
    series = ScoreSeries([0.0 if v is None else v for v in series.values], series.timestamps)
    events = read_events(events_path)
    bags = read_tokens(tokens_path)
    if len(bags) != len(series):
        raise ValueError(
            f"token store has {len(bags)} posts but the score series has {len(series)}"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    segments = split_by_events(bags, events)
    files = []
    for i, seg in enumerate(segments):
        ranking = tfidf_rank(seg, segments, top_k)
        files.append(export_csv(ranking, out / f"ranking_seg{i:02d}.csv"))
        title = f"segment {i} [{seg.start_index}..{seg.end_index}] {seg.label}"
        files.append(render_ranking_svg(ranking, out / f"ranking_seg{i:02d}.svg", title))
    if len(series):
        files.append(render_series_svg(series, out / "series.svg", moving_average(series, window),
                                       events, colors=colors))
    return files
