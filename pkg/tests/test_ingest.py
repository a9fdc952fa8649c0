import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prespec.core import Alphabet
from prespec.errors import IngestError
from prespec.ingest import (
    FrameConfig,
    TokenizerConfig,
    frame_signal,
    read_edge_stream,
    read_signal,
    read_text,
    tokenize,
)

CHAR_STRIP = TokenizerConfig(mode="char", lowercase=True, strip_non_letters=True)


def test_char_mode_filtering():
    seq, _ = tokenize("Ab, ab!", CHAR_STRIP)
    assert seq.render() == "abab"
    assert seq.ids.tolist() == [0, 1, 0, 1]


def test_word_mode():
    seq, _ = tokenize("the cat the", TokenizerConfig(mode="word"))
    assert seq.ids.tolist() == [0, 1, 0]
    assert seq.alphabet.symbols == ("the", "cat")


def test_word_mode_strip_punctuation():
    seq, _ = tokenize("Hello, world! hello", TokenizerConfig("word", True, True))
    assert seq.symbols() == ["hello", "world", "hello"]


def test_edge_mode_lines():
    seq, _ = tokenize("e1\ne7\n\ne1\n", TokenizerConfig(mode="edge"))
    assert seq.symbols() == ["e1", "e7", "e1"]


def test_letter_whitelist():
    cfg = TokenizerConfig(strip_non_letters=True, letters="ab")
    assert tokenize("abcabd", cfg)[0].render() == "abab"


def test_frozen_alphabet_skips_and_reports():
    alphabet = Alphabet("ab")
    seq, report = tokenize("abcab?", alphabet=alphabet, growable=False)
    assert seq.render() == "abab"
    assert report.skipped_tokens == 2
    assert dict(report.skipped_symbols) == {"c": 1, "?": 1}
    assert len(alphabet) == 2


def test_invalid_utf8_reports_offset():
    with pytest.raises(IngestError) as err:
        tokenize(b"abc\xffdef")
    assert err.value.location == 3
    assert "3" in str(err.value)


def test_corpus_length_matches_letter_filter(data):
    path = data("corpus_en.txt")
    seq, _ = read_text(path, CHAR_STRIP)
    with open(path, encoding="utf-8") as fh:
        letters = sum(1 for ch in fh.read() if ch.isalpha())
    assert letters >= 20_000
    assert len(seq) == letters


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=60))
def test_char_tokenize_idempotent(text):
    cfg = TokenizerConfig(mode="char")
    seq, _ = tokenize(text, cfg)
    again, _ = tokenize(seq.render(), cfg)
    assert again == seq
    assert seq.render() == text


# -- frames -------------------------------------------------------------------------


def test_frames_non_overlapping():
    fs = frame_signal(np.arange(10.0), FrameConfig(5, 5))
    assert fs.offsets.tolist() == [0, 5]
    assert fs.frames.tolist() == [[0, 1, 2, 3, 4], [5, 6, 7, 8, 9]]


def test_frames_hop_three():
    fs = frame_signal(np.arange(10.0), FrameConfig(4, 3))
    # floor((10 - 4) / 3) + 1 = 3
    assert fs.offsets.tolist() == [0, 3, 6]
    assert fs.report.dropped_frames == 1  # the partial window at 9


def test_constant_zscore_is_zero():
    fs = frame_signal(np.full(12, 3.7), FrameConfig(4, 2, "zscore"))
    assert np.all(fs.frames == 0)


def test_zscore_moments():
    rng = np.random.default_rng(0)
    fs = frame_signal(rng.normal(size=200) * 5 + 2, FrameConfig(16, 8, "zscore"))
    assert np.allclose(fs.frames.mean(axis=1), 0, atol=1e-9)
    assert np.allclose(fs.frames.std(axis=1), 1, atol=1e-9)


def test_series_too_short():
    with pytest.raises(IngestError):
        frame_signal([1.0, 2.0], FrameConfig(3))


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 40), st.integers(1, 15), st.integers(0, 60))
def test_frame_count_formula(frame_len, hop, extra):
    n = frame_len + extra
    fs = frame_signal(np.arange(float(n)), FrameConfig(frame_len, hop))
    assert len(fs) == (n - frame_len) // hop + 1
    assert fs.offsets.tolist() == [k * hop for k in range(len(fs))]
    assert all(len(f) == frame_len for f in fs.frames)


def test_read_signal_header_and_errors(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("value\n1.5\n\n-2\n")
    assert read_signal(p).tolist() == [1.5, -2.0]
    p.write_text("1\nabc\n")
    with pytest.raises(IngestError) as err:
        read_signal(p)
    assert err.value.location == 2


# -- edges ---------------------------------------------------------------------------


def test_edges_unit_weights():
    seq, counts = read_edge_stream([("a", "b"), ("b", "a")])
    a, b = seq.alphabet.id("a"), seq.alphabet.id("b")
    assert counts[a, b] == 1 and counts[b, a] == 1
    assert seq.symbols() == ["a", "b", "a"]


def test_edges_weight_column():
    _, counts = read_edge_stream([("a", "b", "3")])
    assert counts.items() == [((0, 1), 3)]


def test_street_grid_fixture(data):
    seq, counts = read_edge_stream(data("street_grid.csv"))
    tally = {
        ("A", "B"): 2, ("B", "C"): 2, ("C", "D"): 2, ("D", "A"): 2,
        ("B", "A"): 1, ("A", "D"): 1, ("D", "C"): 1, ("C", "B"): 1,
    }
    got = {(seq.alphabet[r], seq.alphabet[c]): w for (r, c), w in counts.items()}
    assert got == tally
    assert seq.render() == "ABCDABADCBCDA"


def test_edge_errors_carry_line_numbers():
    with pytest.raises(IngestError) as err:
        read_edge_stream("from,to\na,b\nc\n")
    assert err.value.location == 3
    with pytest.raises(IngestError) as err:
        read_edge_stream("a,b,-2\n")
    assert err.value.location == 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("pqrs"), st.sampled_from("pqrs"),
                          st.integers(0, 9)), min_size=1, max_size=30))
def test_edge_mass_conserved(rows):
    _, counts = read_edge_stream([(a, b, str(w)) for a, b, w in rows])
    assert counts.total() == sum(w for _, _, w in rows)
