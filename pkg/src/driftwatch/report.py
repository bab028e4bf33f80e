"""Segment summaries, SVG plots and CSV exports."""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence
from xml.sax.saxutils import escape

from .detect import ChangeEvent, Direction, format_timestamp
from .ingest import parse_timestamp
from .offline import ScoreSeries

DEFAULT_COLORS = ("#e6b800", "#1f4fd1", "#d62728")  # positive, negative, offline


@dataclass
class Segment:
    label: str
    start_index: int
    end_index: int
    posts: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.start_index > self.end_index:
            raise ValueError("start_index must not exceed end_index")


class TermWeight(NamedTuple):
    term: str
    weight: float
    count: int


@dataclass
class TermRanking:
    terms: list[TermWeight] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __getitem__(self, i):
        return self.terms[i]


def _tokens_of(post) -> Iterable[str]:
    return getattr(post, "tokens", post)


def term_counts(segment: Segment) -> Counter:
    counts: Counter = Counter()
    for post in segment.posts:
        counts.update(_tokens_of(post))
    return counts


def tfidf_rank(target: Segment, corpus: Sequence[Segment], top_k: int = 30) -> TermRanking:
    """Rank the terms of ``target`` by ``count * ln(N / df)``, segments being documents.

    Terms found in every segment get weight 0 and are left out. Ties are
    ordered alphabetically.
    """
    if not corpus:
        raise ValueError("corpus must contain at least the target segment")
    if not any(seg is target for seg in corpus):
        raise ValueError("corpus must include the target segment")
    tf = term_counts(target)
    if not tf:
        return TermRanking()
    vocabularies = [set(term_counts(seg)) if seg is not target else set(tf) for seg in corpus]
    n_docs = len(corpus)
    df = Counter()
    for vocab in vocabularies:
        df.update(vocab & tf.keys())
    ranked = []
    for term, count in tf.items():
        weight = count * math.log(n_docs / df[term])
        if weight > 0:
            ranked.append(TermWeight(term, weight, count))
    ranked.sort(key=lambda tw: (-tw.weight, tw.term))
    return TermRanking(ranked[:top_k])


def _boundary_label(event: ChangeEvent | None, default: str) -> str:
    if event is None:
        return default
    when = format_timestamp(event.timestamp) if event.timestamp else f"#{event.index}"
    return f"{event.direction.value}@{when}"


def split_by_events(posts: Sequence, events: Sequence[ChangeEvent]) -> list[Segment]:
    """Cut ``posts`` at the event indices; the sample at a boundary closes the earlier segment."""
    n = len(posts)
    if n == 0:
        return []
    segments = []
    start = 0
    prev: ChangeEvent | None = None
    last = None
    for event in events:
        if last is not None and event.index < last:
            raise ValueError("events must be sorted by index")
        last = event.index
        end = min(event.index, n - 1)
        if end < start:
            continue
        label = f"{_boundary_label(prev, 'start')} .. {_boundary_label(event, 'end')}"
        segments.append(Segment(label, start, end, list(posts[start:end + 1])))
        start, prev = end + 1, event
        if start >= n:
            break
    if start < n:
        label = f"{_boundary_label(prev, 'start')} .. end"
        segments.append(Segment(label, start, n - 1, list(posts[start:])))
    return segments


# --- SVG ------------------------------------------------------------------

WIDTH, HEIGHT = 1000, 400
MARGIN = 50


def _f(x: float) -> str:
    return f"{x:.2f}"


def _svg_open(width: int, height: int) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]


def render_series_svg(
    series: ScoreSeries,
    path: str | Path,
    moving_avg: ScoreSeries | None = None,
    events: Sequence[ChangeEvent] = (),
    offline_changepoints: Sequence[int] = (),
    colors: Sequence[str] = DEFAULT_COLORS,
    title: str = "sentiment score",
) -> Path:
    """Plot the score series with optional moving average and change markers.

    Event and changepoint indices are 1-based sample counts; a marker is
    drawn at the sample it refers to. Output depends only on the inputs.
    """
    n = len(series)
    if n == 0:
        raise ValueError("cannot plot an empty series")
    pos_color, neg_color, off_color = colors
    values = [float(v) for v in series.values]
    lo, hi = min(values), max(values)
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    plot_w, plot_h = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def px(i: float) -> float:
        return MARGIN + (plot_w * i / (n - 1) if n > 1 else plot_w / 2)

    def py(v: float) -> float:
        return MARGIN + plot_h * (hi - v) / (hi - lo)

    out = _svg_open(WIDTH, HEIGHT)
    out.append(f'<text x="{MARGIN}" y="{MARGIN - 15}" font-family="sans-serif" font-size="14">'
               f"{escape(title)}</text>")
    out.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" '
               'fill="none" stroke="#888888" stroke-width="1"/>')
    for v, anchor in ((hi, MARGIN), (lo, MARGIN + plot_h)):
        out.append(f'<text x="{MARGIN - 5}" y="{_f(anchor + 4)}" font-family="sans-serif" '
                   f'font-size="10" text-anchor="end">{v:.6g}</text>')
    if lo < 0 < hi:
        out.append(f'<line x1="{MARGIN}" y1="{_f(py(0))}" x2="{MARGIN + plot_w}" y2="{_f(py(0))}" '
                   'stroke="#cccccc" stroke-width="1"/>')
    pts = " ".join(f"{_f(px(i))},{_f(py(v))}" for i, v in enumerate(values))
    out.append(f'<polyline class="score" fill="none" stroke="#555555" stroke-width="0.6" points="{pts}"/>')
    if moving_avg is not None:
        ma_pts = " ".join(
            f"{_f(px(i))},{_f(py(v))}" for i, v in enumerate(moving_avg.values) if v is not None
        )
        if ma_pts:
            out.append(f'<polyline class="moving-average" fill="none" stroke="#2ca02c" '
                       f'stroke-width="1.5" points="{ma_pts}"/>')

    def vline(index: int, color: str, cls: str) -> str:
        x = _f(px(min(max(index - 1, 0), n - 1)))
        return (f'<line class="{cls}" x1="{x}" y1="{MARGIN}" x2="{x}" y2="{MARGIN + plot_h}" '
                f'stroke="{escape(color)}" stroke-width="1.5"/>')

    for cp in offline_changepoints:
        out.append(vline(cp, off_color, "offline"))
    for ev in events:
        if ev.direction is Direction.POSITIVE:
            out.append(vline(ev.index, pos_color, "positive"))
        else:
            out.append(vline(ev.index, neg_color, "negative"))
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path


def render_ranking_svg(ranking: TermRanking, path: str | Path, title: str = "") -> Path:
    """Horizontal bar chart of a term ranking."""
    bar_h, gap, label_w = 18, 4, 160
    rows = len(ranking)
    height = 2 * MARGIN + max(rows, 1) * (bar_h + gap)
    out = _svg_open(WIDTH, height)
    out.append(f'<text x="{MARGIN}" y="{MARGIN - 15}" font-family="sans-serif" font-size="14">'
               f"{escape(title)}</text>")
    top = max((tw.weight for tw in ranking), default=1.0)
    span = WIDTH - 2 * MARGIN - label_w - 60
    for i, tw in enumerate(ranking):
        y = MARGIN + i * (bar_h + gap)
        w = span * tw.weight / top
        out.append(f'<text x="{MARGIN + label_w - 6}" y="{y + bar_h - 5}" font-family="sans-serif" '
                   f'font-size="12" text-anchor="end">{escape(tw.term)}</text>')
        out.append(f'<rect x="{MARGIN + label_w}" y="{y}" width="{_f(w)}" height="{bar_h}" fill="#4c72b0"/>')
        out.append(f'<text x="{_f(MARGIN + label_w + w + 4)}" y="{y + bar_h - 5}" font-family="sans-serif" '
                   f'font-size="10">{tw.weight:.4g}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path


# --- CSV ------------------------------------------------------------------

class CsvFormatError(ValueError):
    pass


def fmt_num(x) -> str:
    """Integers verbatim, other numbers with 6 significant digits, ``None`` empty."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int) or (isinstance(x, float) and x.is_integer() and abs(x) < 1e15):
        return str(int(x))
    return f"{x:.6g}"


def _rows_for(obj) -> tuple[list[str], Iterable[list[str]]]:
    if isinstance(obj, ScoreSeries):
        return ["timestamp", "value"], (
            [format_timestamp(ts) if ts is not None else "", fmt_num(v)]
            for ts, v in zip(obj.timestamps, obj.values)
        )
    if isinstance(obj, TermRanking):
        return ["term", "weight", "count"], ([tw.term, fmt_num(tw.weight), str(tw.count)] for tw in obj)
    events = list(obj)
    if all(isinstance(e, ChangeEvent) for e in events):
        header = ["index", "timestamp", "direction", "theta0_before", "theta0_after", "g_at_alarm"]
        return header, (
            [str(e.index), format_timestamp(e.timestamp) if e.timestamp else "", e.direction.value,
             fmt_num(e.theta0_before), fmt_num(e.theta0_after), fmt_num(e.g_at_alarm)]
            for e in events
        )
    raise TypeError(f"don't know how to export {type(obj).__name__}")


def export_csv(obj, path: str | Path) -> Path:
    """Write a series, term ranking or list of events as CSV with a header row."""
    header, rows = _rows_for(obj)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return path


def read_series_csv(path: str | Path) -> ScoreSeries:
    """Read a score series CSV with ``timestamp`` and ``value`` (or ``score``) columns.

    Empty value cells are read as ``None``.
    """
    values: list[float | None] = []
    stamps = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CsvFormatError(f"{path}: line 1: missing header")
        cols = [h.strip().lower() for h in header]
        try:
            ts_col = cols.index("timestamp")
        except ValueError:
            raise CsvFormatError(f"{path}: line 1: no 'timestamp' column") from None
        value_col = next((cols.index(c) for c in ("value", "score") if c in cols), None)
        if value_col is None:
            raise CsvFormatError(f"{path}: line 1: no 'value' or 'score' column")
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            if len(row) != len(cols):
                raise CsvFormatError(f"{path}: line {lineno}: expected {len(cols)} fields, got {len(row)}")
            raw_v, raw_ts = row[value_col].strip(), row[ts_col].strip()
            try:
                values.append(float(raw_v) if raw_v else None)
                stamps.append(parse_timestamp(raw_ts) if raw_ts else None)
            except ValueError as exc:
                raise CsvFormatError(f"{path}: line {lineno}: {exc}") from None
    try:
        return ScoreSeries(values, stamps)
    except ValueError as exc:
        raise CsvFormatError(f"{path}: {exc}") from None
