import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prespec.core import Alphabet, SparseCountMatrix, SymbolSequence, dumps, loads
from prespec.errors import (
    AlphabetMismatchError,
    DanglingStateError,
    DimensionMismatchError,
    SequenceTooShortError,
    UnknownStateError,
)
from prespec.markov import (
    ChainConfig,
    MarkovChain,
    build_chain,
    build_context_profiles,
    most_similar,
    profile_similarity,
    simulate,
    transition_prob,
    update_chain,
)


def seq_of(text, alphabet=None):
    return SymbolSequence.from_symbols(text, alphabet)


def word_seq(text):
    return SymbolSequence.from_symbols(text.split())


# -- build_chain -----------------------------------------------------------------


def test_abab_order1():
    ch = build_chain(seq_of("abab"))
    assert transition_prob(ch, "a", "b") == 1
    assert transition_prob(ch, "b", "a") == 1
    assert transition_prob(ch, "a", "a") == 0


def test_aab_order1():
    ch = build_chain(seq_of("aab"))
    assert transition_prob(ch, "a", "a") == 0.5
    assert transition_prob(ch, "a", "b") == 0.5
    assert ch.matrix.dangling[ch.state_id("b")]


def test_abcabc_order2():
    ch = build_chain(seq_of("abcabc"), ChainConfig(order=2))
    assert ch.state_labels() == ["ab", "bc", "ca"]
    assert transition_prob(ch, "ab", "bc") == 1
    assert transition_prob(ch, "bc", "ca") == 1
    assert transition_prob(ch, "ca", "ab") == 1


def test_too_short():
    with pytest.raises(SequenceTooShortError):
        build_chain(seq_of("ab"), ChainConfig(order=2))


def test_unknown_state():
    ch = build_chain(seq_of("abab"))
    with pytest.raises(UnknownStateError):
        transition_prob(ch, "z", "a")


def test_smoothed_transition():
    ch = build_chain(seq_of("aab"), ChainConfig(1, smoothing=1.0))
    # from a: counts a:1 b:1 over 2 states -> (1 + 1) / (2 + 2)
    assert transition_prob(ch, "a", "a") == pytest.approx(0.5, abs=1e-15)
    # from b: no counts -> uniform
    assert transition_prob(ch, "b", "a") == pytest.approx(0.5, abs=1e-15)


def test_order2_overlap_exhaustive():
    # every stream of length <= 7 over {a, b, c}
    for length in range(3, 8):
        for word in itertools.product("abc", repeat=length):
            ch = build_chain(seq_of("".join(word)), ChainConfig(order=2))
            for r, c, _ in ch.edges():
                assert ch.states[r][1:] == ch.states[c][:-1]


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="abcd", min_size=2, max_size=80), st.integers(1, 3))
def test_rows_valid_or_dangling(text, order):
    if len(text) <= order:
        return
    ch = build_chain(seq_of(text), ChainConfig(order))
    sums = ch.matrix.row_sums()
    for i in range(ch.n_states):
        assert ch.matrix.dangling[i] or abs(sums[i] - 1) <= 1e-12


# -- update_chain ----------------------------------------------------------------


def test_update_equals_concatenation():
    ab = Alphabet()
    first = build_chain(seq_of("ab", ab))
    updated = update_chain(first, seq_of("ab", ab))
    assert updated == build_chain(seq_of("abab"))
    assert updated.counts.items() == [((0, 1), 2), ((1, 0), 1)]


def test_update_empty_is_identity():
    ch = build_chain(seq_of("abca"))
    assert update_chain(ch, SymbolSequence([], ch.alphabet)) == ch


def test_update_single_symbol_adds_one_transition():
    ch = build_chain(seq_of("abc"))
    up = update_chain(ch, SymbolSequence([0], ch.alphabet))
    assert up.counts.total() == ch.counts.total() + 1
    assert up.counts[ch.state_id("c"), ch.state_id("a")] == 1


def test_update_grows_alphabet():
    ab = Alphabet()
    ch = build_chain(seq_of("abab", ab))
    up = update_chain(ch, seq_of("bxa", ab))
    assert up == build_chain(seq_of("ababbxa"))
    assert up.alphabet.symbols == ("a", "b", "x")


def test_update_alphabet_mismatch():
    ch = build_chain(seq_of("abab"))
    with pytest.raises(AlphabetMismatchError):
        update_chain(ch, seq_of("ba", Alphabet("ba")))
    grown = Alphabet("abx")
    with pytest.raises(AlphabetMismatchError):
        update_chain(ch, SymbolSequence([2], grown), growable=False)


@settings(max_examples=150, deadline=None)
@given(st.text(alphabet="xyzw", min_size=4, max_size=60), st.data())
def test_update_matches_build(text, data):
    order = data.draw(st.integers(1, 3))
    cut = data.draw(st.integers(order + 1, len(text)))
    if len(text) <= order:
        return
    ab = Alphabet()
    head = seq_of(text[:cut], ab)
    tail = seq_of(text[cut:], ab)
    if len(head) <= order:
        return
    chained = update_chain(build_chain(head, ChainConfig(order)), tail)
    assert chained == build_chain(seq_of(text), ChainConfig(order))
    sums = chained.matrix.row_sums()
    assert all(chained.matrix.dangling[i] or abs(s - 1) <= 1e-12 for i, s in enumerate(sums))


# -- serialization -------------------------------------------------------------------


def test_chain_json_round_trip():
    for cfg in (ChainConfig(1), ChainConfig(2, 0.5)):
        ch = build_chain(seq_of("abracadabra"), cfg)
        text = dumps(ch)
        back = loads(text)
        assert back == ch
        assert dumps(back) == text


def test_chain_json_schema_fields():
    d = build_chain(seq_of("abab")).to_dict()
    assert d["format"] == "prespec/chain/1"
    assert d["states"] == [["a"], ["b"]]
    assert d["rows"] == [[0, [[1, 1.0]]], [1, [[0, 1.0]]]]


def test_from_counts():
    ab = Alphabet("pq")
    ch = MarkovChain.from_counts(ab, SparseCountMatrix(2, 2, {(0, 1): 4, (1, 0): 4, (1, 1): 4}))
    assert transition_prob(ch, "q", "q") == 0.5
    with pytest.raises(DimensionMismatchError):
        MarkovChain.from_counts(ab, SparseCountMatrix(3))


# -- context profiles -------------------------------------------------------------


def test_profile_abab():
    seq = seq_of("abab")
    profiles = build_context_profiles(seq, 1)
    a = profiles[0]
    b_id = seq.alphabet.id("b")
    assert a.distribution(1) == {b_id: 1.0}
    assert a.distribution(-1) == {b_id: 1.0}


def test_profile_single_symbol_sequence_all_empty():
    (prof,) = build_context_profiles(SymbolSequence([0], Alphabet("a")), 2)
    assert all(prof.is_empty(o) for o in prof.offsets)
    assert not prof.vector().any()
    with pytest.raises(SequenceTooShortError):
        build_context_profiles(SymbolSequence([], Alphabet("a")), 1)


def test_offsets_past_the_ends_contribute_nothing():
    for p in build_context_profiles(SymbolSequence([0, 1], Alphabet("ab")), 3):
        assert all(p.is_empty(o) for o in p.offsets if abs(o) > 1)


def test_profile_for_symbol_occurring_once_at_both_ends():
    # single-symbol stream: the profile for each occurrence has nothing around it
    seq = SymbolSequence([0, 1], Alphabet("ab"))
    pa, pb = build_context_profiles(seq, 1)
    assert pa.is_empty(-1) and not pa.is_empty(1)
    assert pb.is_empty(1) and not pb.is_empty(-1)


def test_profile_symmetric_aba():
    seq = seq_of("aba")
    b = build_context_profiles(seq, 1)[1]
    assert b.distribution(-1) == {0: 1.0}
    assert b.distribution(1) == {0: 1.0}


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="abcde", min_size=2, max_size=80), st.integers(1, 4))
def test_profile_mass_conservation(text, window):
    seq = seq_of(text)
    profiles = build_context_profiles(seq, window)
    plus_one = sum(sum(p.counts.get(1, {}).values()) for p in profiles)
    assert plus_one == len(seq) - 1
    for p in profiles:
        for off in p.offsets:
            if not p.is_empty(off):
                assert abs(sum(p.distribution(off).values()) - 1) <= 1e-12


def brute_profile(tokens, word, window, vocab):
    """Dense profile vector for ``word`` built by scanning every position."""
    offsets = list(range(-window, 0)) + list(range(1, window + 1))
    blocks = []
    for off in offsets:
        counts = Counter(
            tokens[i + off]
            for i, t in enumerate(tokens)
            if t == word and 0 <= i + off < len(tokens)
        )
        total = sum(counts.values())
        blocks.append([counts[v] / total if total else 0.0 for v in vocab])
    return np.concatenate(blocks)


def cosine(u, v):
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    return 0.0 if nu == 0 or nv == 0 else float(u @ v / (nu * nv))


def test_similarity_identical_and_disjoint():
    seq = word_seq("p a q p b q r c s")
    prof = {seq.alphabet[p.symbol]: p for p in build_context_profiles(seq, 1)}
    assert profile_similarity(prof["a"], prof["a"]) == pytest.approx(1.0, abs=1e-15)
    # a sits between p,q; c sits between r,s
    assert profile_similarity(prof["a"], prof["c"]) == 0.0


def test_similarity_corpus_matches_brute_force():
    text = "x a y x b y x a y x b y"
    tokens = text.split()
    seq = word_seq(text)
    vocab = list(seq.alphabet.symbols)
    for window in (1, 2):
        prof = {seq.alphabet[p.symbol]: p for p in build_context_profiles(seq, window)}
        expected = cosine(
            brute_profile(tokens, "a", window, vocab), brute_profile(tokens, "b", window, vocab)
        )
        assert expected == pytest.approx(1.0, abs=1e-12)
        assert profile_similarity(prof["a"], prof["b"]) == pytest.approx(expected, abs=1e-12)
        assert np.allclose(prof["a"].vector(), brute_profile(tokens, "a", window, vocab))


def test_similarity_random_matches_brute_force():
    rng = np.random.default_rng(5)
    tokens = [str(t) for t in rng.integers(0, 6, size=300)]
    seq = SymbolSequence.from_symbols(tokens)
    vocab = list(seq.alphabet.symbols)
    prof = {seq.alphabet[p.symbol]: p for p in build_context_profiles(seq, 3)}
    for u, v in itertools.combinations(sorted(prof), 2):
        expected = cosine(brute_profile(tokens, u, 3, vocab), brute_profile(tokens, v, 3, vocab))
        assert profile_similarity(prof[u], prof[v]) == pytest.approx(expected, abs=1e-12)


def test_similarity_mismatch():
    seq = seq_of("abcabc")
    p1 = build_context_profiles(seq, 1)[0]
    p2 = build_context_profiles(seq, 2)[0]
    with pytest.raises(DimensionMismatchError):
        profile_similarity(p1, p2)
    other = build_context_profiles(seq_of("abcd"), 1)[0]
    with pytest.raises(AlphabetMismatchError):
        profile_similarity(p1, other)


def test_most_similar_agrees_with_pairwise():
    seq = word_seq("x a y x b y x a y x c z q c z")
    profiles = build_context_profiles(seq, 1)
    rows = most_similar(profiles, top_k=2)
    by_id = {p.symbol: p for p in profiles}
    for sym, nb, rank, sim in rows:
        assert sim == pytest.approx(profile_similarity(by_id[sym], by_id[nb]), abs=1e-12)
    a, b = seq.alphabet.id("a"), seq.alphabet.id("b")
    assert (a, b, 1) == next((s, n, r) for s, n, r, _ in rows if s == a)


# -- simulate --------------------------------------------------------------------


def test_simulate_deterministic_chain():
    ch = build_chain(seq_of("abab"))
    assert simulate(ch, "a", 4, seed=0).render() == "baba"
    assert len(simulate(ch, "a", 0, seed=0)) == 0


def test_simulate_reproducible():
    ch = build_chain(seq_of("abracadabra alakazam"))
    one = simulate(ch, "a", 200, seed=11, policy="restart-at-start")
    two = simulate(ch, "a", 200, seed=11, policy="restart-at-start")
    assert one == two
    assert one != simulate(ch, "a", 200, seed=12, policy="restart-at-start")


def test_simulate_halts_on_dangling():
    ch = build_chain(seq_of("abc"))
    with pytest.raises(DanglingStateError) as err:
        simulate(ch, "a", 5, seed=0)
    assert "c" in str(err.value)
    with pytest.raises(DanglingStateError):
        simulate(ch, "c", 1, seed=0)


def test_simulate_policies():
    ch = build_chain(seq_of("abc"))
    assert simulate(ch, "a", 6, policy="restart-at-start").render() == "bcabca"
    walk = simulate(ch, "a", 50, seed=3, policy="jump-uniform").render()
    assert len(walk) == 50 and set(walk) <= set("abc")


def test_simulate_only_positive_transitions():
    ch = build_chain(seq_of("abcbcacbabbca" * 3))
    walk = simulate(ch, "a", 500, seed=1).ids.tolist()
    prev = ch.state_id("a")
    for s in walk:
        assert ch.matrix.get(prev, s) > 0
        prev = s


def test_simulate_law_of_large_numbers():
    ab = Alphabet("xyz")
    counts = SparseCountMatrix(3, 3, {(i, j): 1 for i in range(3) for j in range(3)})
    ch = MarkovChain.from_counts(ab, counts)
    ids = [0] + simulate(ch, "x", 10_000, seed=2024).ids.tolist()
    tally = Counter(zip(ids, ids[1:]))
    for i in range(3):
        row = sum(tally[(i, j)] for j in range(3))
        for j in range(3):
            assert abs(tally[(i, j)] / row - ch.matrix.get(i, j)) < 0.02


def test_simulate_order2_emits_next_symbol():
    ch = build_chain(seq_of("abcabc"), ChainConfig(order=2))
    assert simulate(ch, "ab", 4).render() == "cabc"
