import pytest
from hypothesis import given
from hypothesis import strategies as st

from driftwatch.lexicon import (
    LexiconError,
    LexiconKind,
    bundled_lexicon,
    load_lexicon,
    parse_lexicon,
    score,
    score_tokens,
)
from driftwatch.textprep import TokenBag


@pytest.fixture
def binary_lex(tmp_path):
    p = tmp_path / "bin.tsv"
    p.write_text("good\tpositive\nbad\tnegative\n", encoding="utf-8")
    return load_lexicon(p, "binary")


def test_load_binary(binary_lex):
    assert dict(binary_lex.entries) == {"good": 1, "bad": -1}
    assert binary_lex.size == 2
    assert binary_lex.kind is LexiconKind.BINARY


def test_load_scored_fixture(tmp_path):
    p = tmp_path / "afinn.tsv"
    p.write_text("abandon\t-2\n", encoding="utf-8")
    lex = load_lexicon(p, "scored")
    assert dict(lex.entries) == {"abandon": -2}
    assert lex.size == 1


def test_bundled_afinn_has_abandon():
    assert bundled_lexicon("afinn").get("abandon") == -2


@pytest.mark.parametrize("line", ["good\t7", "good\t0", "good\t-6", "good\tlots"])
def test_scored_out_of_range(tmp_path, line):
    p = tmp_path / "bad.tsv"
    p.write_text(f"fine\t1\n{line}\n", encoding="utf-8")
    with pytest.raises(LexiconError, match=":2:"):
        load_lexicon(p, "scored")


@pytest.mark.parametrize("line", ["good", "good\tmaybe", "Good\tpositive", "go od\tpositive", "a\tb\tc"])
def test_binary_malformed(line):
    with pytest.raises(LexiconError):
        parse_lexicon([line], "binary")


def test_missing_file(tmp_path):
    with pytest.raises(LexiconError):
        load_lexicon(tmp_path / "nope.tsv", "binary")


def test_duplicates_last_wins(caplog):
    lex = parse_lexicon(["good\tpositive", "good\tnegative"], "binary")
    assert lex.get("good") == -1
    assert "duplicate" in caplog.text


def test_lexicon_is_read_only(binary_lex):
    with pytest.raises(TypeError):
        binary_lex.entries["good"] = 5  # type: ignore[index]


@pytest.mark.parametrize("name", ["bing", "afinn"])
def test_bundled_lexicons_respect_invariants(name):
    lex = bundled_lexicon(name)
    assert lex.size > 100
    allowed = {1, -1} if lex.kind is LexiconKind.BINARY else set(range(-5, 0)) | set(range(1, 6))
    assert set(lex.entries.values()) <= allowed
    assert all(w == w.lower() and w.isalpha() for w in lex.entries)


def test_score_examples(binary_lex):
    post = score(TokenBag(["good", "good", "bad"], 3), binary_lex)
    assert (post.score, post.matched, post.token_count, post.seq) == (1, 3, 3, 3)
    empty = score(TokenBag([], 0), binary_lex)
    assert (empty.score, empty.matched) == (0, 0)
    scored = parse_lexicon(["great\t3", "abandon\t-2"], "scored")
    assert score_tokens(["great", "abandon"], scored) == (1, 2)


words = st.lists(st.sampled_from(["good", "bad", "great", "awful", "meh", "the", "win", "lose"]), max_size=30)


@given(words, words)
def test_additivity(a, b):
    lex = bundled_lexicon("afinn")
    sa, ma = score_tokens(a, lex)
    sb, mb = score_tokens(b, lex)
    assert score_tokens(a + b, lex) == (sa + sb, ma + mb)


@given(words)
def test_bounds(tokens):
    binary = bundled_lexicon("bing")
    s, m = score_tokens(tokens, binary)
    assert abs(s) <= m <= len(tokens)
    scored = bundled_lexicon("afinn")
    s, _ = score_tokens(tokens, scored)
    assert abs(s) <= 5 * len(tokens)

