"""Streaming sentiment scoring and two-sided CUSUM change detection for short posts."""
from .detect import (
    ChangeEvent,
    DetectorConfig,
    DetectorState,
    Direction,
    estimate_arl,
    reset,
    run_detector,
    step,
    sufficient_statistic,
)
from .ingest import LangPolicy, SourceKind, SourceSpec, TweetRecord, language_filter, open_source, parse_record
from .lexicon import Lexicon, LexiconKind, ScoredPost, bundled_lexicon, load_lexicon, score
from .offline import ScoreSeries, SegmentationResult, compare, histogram, moving_average, segment
from .textprep import TokenBag, clean, tokenize

__version__ = "0.1.0"

__all__ = [
    "ChangeEvent",
    "DetectorConfig",
    "DetectorState",
    "Direction",
    "LangPolicy",
    "Lexicon",
    "LexiconKind",
    "ScoreSeries",
    "ScoredPost",
    "SegmentationResult",
    "SourceKind",
    "SourceSpec",
    "TokenBag",
    "TweetRecord",
    "bundled_lexicon",
    "clean",
    "compare",
    "estimate_arl",
    "histogram",
    "language_filter",
    "load_lexicon",
    "moving_average",
    "open_source",
    "parse_record",
    "reset",
    "run_detector",
    "score",
    "segment",
    "step",
    "sufficient_statistic",
    "tokenize",
]
