"""Order-n Markov chains and co-occurrence context profiles over symbol streams.

States of an order-n chain are the n-grams actually observed, numbered by
first appearance. A transition joins two consecutive n-grams, so for n > 1
the target always begins with the source's last n-1 symbols.
"""

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .core import Alphabet, SparseCountMatrix, SymbolSequence, register, row_normalize
from .errors import (
    AlphabetMismatchError,
    DanglingStateError,
    DimensionMismatchError,
    FormatError,
    InvalidParameterError,
    SequenceTooShortError,
    UnknownStateError,
)
from .rng import CounterRNG

DANGLING_POLICIES = ("halt", "restart-at-start", "jump-uniform")
CHAIN_FORMAT = "prespec/chain/1"


@dataclass(frozen=True)
class ChainConfig:
    order: int = 1
    smoothing: float = 0.0

    def __post_init__(self):
        if int(self.order) < 1:
            raise InvalidParameterError(f"order must be >= 1, got {self.order}")
        if not self.smoothing >= 0:
            raise InvalidParameterError(f"smoothing must be >= 0, got {self.smoothing}")


def _walk_states(ids, order, states, state_index):
    """Intern every n-gram of ``ids`` and return their state ids in order."""
    out = []
    for t in range(len(ids) - order + 1):
        gram = tuple(ids[t : t + order])
        sid = state_index.get(gram)
        if sid is None:
            sid = len(states)
            states.append(gram)
            state_index[gram] = sid
        out.append(sid)
    return out


class MarkovChain:
    """Homogeneous chain: one transition matrix for every time step."""

    def __init__(self, alphabet, order, states, counts, smoothing=0.0, tail=()):
        if counts.shape != (len(states), len(states)):
            raise DimensionMismatchError("count matrix must be states x states")
        self.alphabet = alphabet
        self.order = int(order)
        self.states = [tuple(s) for s in states]
        self.state_index = {s: i for i, s in enumerate(self.states)}
        self.counts = counts
        self.smoothing = float(smoothing)
        self.tail = tuple(tail)
        self.matrix = row_normalize(counts, self.smoothing)

    @classmethod
    def from_counts(cls, alphabet, counts, smoothing=0.0, tail=()):
        """Order-1 chain whose states are the alphabet symbols, in id order."""
        if counts.shape != (len(alphabet), len(alphabet)):
            raise DimensionMismatchError("counts must be alphabet x alphabet")
        states = [(i,) for i in range(len(alphabet))]
        return cls(alphabet.copy(), 1, states, counts.copy(), smoothing, tail)

    @property
    def n_states(self):
        return len(self.states)

    def state_symbols(self, sid):
        return tuple(self.alphabet[i] for i in self.states[sid])

    def state_label(self, sid):
        syms = self.state_symbols(sid)
        if len(syms) == 1:
            return syms[0]
        sep = "" if all(len(s) == 1 for s in syms) else " "
        return sep.join(syms)

    def state_labels(self):
        return [self.state_label(i) for i in range(self.n_states)]

    def state_id(self, state):
        """Resolve a state given as a symbol (order 1), a tuple of symbols,
        or a string of single-character symbols of length ``order``."""
        if isinstance(state, str):
            syms = (state,) if self.order == 1 else tuple(state)
        else:
            syms = tuple(state)
        if len(syms) != self.order:
            raise UnknownStateError(f"state {state!r} does not have {self.order} symbols")
        try:
            gram = tuple(self.alphabet.id(s) for s in syms)
        except KeyError:
            raise UnknownStateError(f"unknown state {state!r}") from None
        sid = self.state_index.get(gram)
        if sid is None:
            raise UnknownStateError(f"unknown state {state!r}")
        return sid

    def edges(self):
        """Observed transitions ``(from_state, to_state, count)``."""
        return [(r, c, w) for (r, c), w in self.counts.items()]

    def __eq__(self, other):
        return (
            isinstance(other, MarkovChain)
            and self.order == other.order
            and self.alphabet == other.alphabet
            and self.states == other.states
            and self.counts == other.counts
            and self.smoothing == other.smoothing
            and self.tail == other.tail
        )

    def __repr__(self):
        return (
            f"MarkovChain(order={self.order}, states={self.n_states}, "
            f"transitions={self.counts.total()})"
        )

    def to_dict(self):
        alphabet = list(self.alphabet.symbols)
        rows = []
        for i in range(self.n_states):
            cols, probs, _ = self.matrix.row(i)
            rows.append([i, [[int(j), float(p)] for j, p in zip(cols, probs)]])
        data = {
            "format": CHAIN_FORMAT,
            "order": self.order,
            "smoothing": self.smoothing,
            "alphabet": alphabet,
            "states": [[alphabet[i] for i in s] for s in self.states],
            "rows": rows,
            "dangling": [int(i) for i in np.flatnonzero(self.matrix.dangling)],
            "counts": [[r, c, w] for (r, c), w in self.counts.items()],
            "tail": [alphabet[i] for i in self.tail],
        }
        if self.smoothing > 0:
            data["remainder"] = self.matrix.remainder.tolist()
        return data

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or data.get("format") != CHAIN_FORMAT:
            raise FormatError(f"expected format {CHAIN_FORMAT!r}")
        try:
            alphabet = Alphabet(data["alphabet"])
            states = [tuple(alphabet.id(s) for s in st) for st in data["states"]]
            n = len(states)
            if "counts" in data:
                counts = SparseCountMatrix(
                    n, n, [((r, c), w) for r, c, w in data["counts"]]
                )
            else:
                # probability-only file: treat probabilities as weights
                counts = SparseCountMatrix(n, n)
                for i, row in data["rows"]:
                    for j, p in row:
                        counts.add(i, j, p)
            tail = tuple(alphabet.id(s) for s in data.get("tail", []))
            return cls(
                alphabet, data["order"], states, counts, data.get("smoothing", 0.0), tail
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed chain document: {exc}") from None


register("chain", MarkovChain)


def load_chain(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", source=str(path), location=exc.lineno)
    return MarkovChain.from_dict(data)


def build_chain(seq, cfg=None):
    """Count consecutive n-gram transitions in ``seq`` and row-normalize."""
    cfg = cfg or ChainConfig()
    ids = seq.ids.tolist()
    if len(ids) <= cfg.order:
        raise SequenceTooShortError(
            f"sequence of length {len(ids)} needs more than {cfg.order} symbols"
        )
    states, index = [], {}
    walk = _walk_states(ids, cfg.order, states, index)
    counts = SparseCountMatrix(len(states))
    counts.update(zip(walk[:-1], walk[1:]))
    tail = tuple(ids[-cfg.order :])
    return MarkovChain(seq.alphabet.copy(), cfg.order, states, counts, cfg.smoothing, tail)


def update_chain(chain, new_symbols, growable=True):
    """Extend ``chain`` with more observations, including the junction
    transition out of the retained tail. Equals ``build_chain`` on the
    concatenated stream."""
    alphabet = new_symbols.alphabet
    if alphabet != chain.alphabet:
        if not growable or not chain.alphabet.is_prefix_of(alphabet):
            raise AlphabetMismatchError(
                "new symbols use an alphabet that does not extend the chain's"
            )
    if len(new_symbols) == 0:
        return chain
    if len(chain.tail) != chain.order:
        raise SequenceTooShortError("chain has no retained tail context to extend")
    states = list(chain.states)
    index = dict(chain.state_index)
    walk = _walk_states(list(chain.tail) + new_symbols.ids.tolist(), chain.order, states, index)
    counts = chain.counts.copy().resize(len(states))
    counts.update(zip(walk[:-1], walk[1:]))
    tail = (list(chain.tail) + new_symbols.ids.tolist())[-chain.order :]
    new_alphabet = alphabet.copy() if alphabet != chain.alphabet else chain.alphabet
    return MarkovChain(new_alphabet, chain.order, states, counts, chain.smoothing, tail)


def transition_prob(chain, source, target):
    return chain.matrix.get(chain.state_id(source), chain.state_id(target))


@dataclass
class ContextProfile:
    """Per-offset co-occurrence counts for one symbol.

    ``counts[offset]`` maps context symbol id to count for offsets
    ``-window..-1, 1..window``. Distributions normalize each offset on its
    own; an offset with no observations is empty.
    """

    symbol: int
    window: int
    alphabet_size: int
    counts: dict = field(default_factory=dict)

    @property
    def offsets(self):
        return list(range(-self.window, 0)) + list(range(1, self.window + 1))

    def is_empty(self, offset):
        return not self.counts.get(offset)

    def distribution(self, offset):
        c = self.counts.get(offset) or {}
        total = sum(c.values())
        return {k: v / total for k, v in sorted(c.items())} if total else {}

    def entries(self):
        """Sparse concatenated vector as ``{flat_position: probability}``.

        Blocks follow offsets ``-N..-1, +1..+N``, each ``alphabet_size`` long.
        """
        out = {}
        for slot, off in enumerate(self.offsets):
            base = slot * self.alphabet_size
            for ctx, p in self.distribution(off).items():
                out[base + ctx] = p
        return out

    def vector(self):
        out = np.zeros(2 * self.window * self.alphabet_size)
        for pos, p in self.entries().items():
            out[pos] = p
        return out


def build_context_profiles(seq, window):
    """One profile per symbol that occurs in ``seq``, in alphabet-id order."""
    window = int(window)
    if window < 1:
        raise InvalidParameterError("window must be a positive integer")
    if len(seq) < 1:
        raise SequenceTooShortError("context profiles need a nonempty sequence")
    ids = seq.ids
    n = len(ids)
    size = len(seq.alphabet)
    profiles = {int(s): ContextProfile(int(s), window, size) for s in np.unique(ids)}
    for off in list(range(-window, 0)) + list(range(1, window + 1)):
        lo, hi = max(0, -off), min(n, n - off)
        if lo >= hi:
            continue
        pairs = Counter(zip(ids[lo:hi].tolist(), ids[lo + off : hi + off].tolist()))
        for (src, ctx), c in pairs.items():
            profiles[src].counts.setdefault(off, {})[ctx] = c
    return [profiles[k] for k in sorted(profiles)]


def _check_compatible(p, q):
    if p.window != q.window:
        raise DimensionMismatchError(f"window mismatch: {p.window} vs {q.window}")
    if p.alphabet_size != q.alphabet_size:
        raise AlphabetMismatchError(
            f"alphabet size mismatch: {p.alphabet_size} vs {q.alphabet_size}"
        )


def profile_similarity(p, q):
    """Cosine similarity of the concatenated offset distributions."""
    _check_compatible(p, q)
    a, b = p.entries(), q.entries()
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0 or nb == 0:
        return 0.0
    if len(b) < len(a):
        a, b = b, a
    dot = sum(v * b.get(k, 0.0) for k, v in a.items())
    return max(-1.0, min(1.0, dot / (na * nb)))


def _profile_matrix(profiles):
    rows, cols, vals = [], [], []
    for r, prof in enumerate(profiles):
        for pos, p in sorted(prof.entries().items()):
            rows.append(r)
            cols.append(pos)
            vals.append(p)
    width = 2 * profiles[0].window * profiles[0].alphabet_size
    m = sp.csr_matrix((vals, (rows, cols)), shape=(len(profiles), width))
    norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=1)).ravel())
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    return sp.diags(inv) @ m


def most_similar(profiles, top_k=5, chunk=256):
    """For each profile, its ``top_k`` most similar other profiles.

    Returns ``[(symbol, neighbor_symbol, rank, similarity), ...]``; ties go
    to the lower symbol id.
    """
    if not profiles:
        return []
    for p in profiles[1:]:
        _check_compatible(profiles[0], p)
    m = _profile_matrix(profiles)
    symbols = np.array([p.symbol for p in profiles])
    out = []
    for start in range(0, len(profiles), chunk):
        block = (m[start : start + chunk] @ m.T).toarray()
        for r, sims in enumerate(block, start=start):
            sims = np.clip(sims, -1.0, 1.0)
            sims[r] = -np.inf
            order = np.lexsort((symbols, -sims))
            ranked = [k for k in order if k != r][:top_k]
            for rank, k in enumerate(ranked, start=1):
                out.append((int(symbols[r]), int(symbols[k]), rank, float(sims[k])))
    return out


def write_profiles_csv(profiles, alphabet, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["word", "offset", "context_word", "prob"])
        for prof in profiles:
            for off in prof.offsets:
                for ctx, p in prof.distribution(off).items():
                    w.writerow([alphabet[prof.symbol], off, alphabet[ctx], repr(p)])


class _Sampler:
    def __init__(self, chain):
        self.chain = chain
        self._cache = {}

    def targets(self, sid):
        hit = self._cache.get(sid)
        if hit is None:
            m = self.chain.matrix
            if m.remainder[sid] > 0:
                targets = np.arange(m.n)
                probs = m.row_dense(sid)
            else:
                targets, probs, _ = m.row(sid)
            hit = (targets, np.cumsum(probs))
            self._cache[sid] = hit
        return hit

    def step(self, sid, u):
        targets, cum = self.targets(sid)
        k = int(np.searchsorted(cum, u * cum[-1], side="right"))
        return int(targets[min(k, len(targets) - 1)])


def simulate(chain, start, steps, seed=0, policy="halt"):
    """Random walk of ``steps`` transitions from ``start``.

    Emits the newest symbol of each visited state. When the walk reaches a
    dangling state ``policy`` decides: ``halt`` raises
    :class:`DanglingStateError`; ``restart-at-start`` moves to ``start``;
    ``jump-uniform`` moves to a uniformly drawn state. A move made by the
    policy counts as a step and emits that state's newest symbol.
    """
    if policy not in DANGLING_POLICIES:
        raise InvalidParameterError(f"unknown dangling policy {policy!r}")
    steps = int(steps)
    if steps < 0:
        raise InvalidParameterError("steps must be nonnegative")
    sid = start if isinstance(start, (int, np.integer)) else chain.state_id(start)
    if not 0 <= sid < chain.n_states:
        raise UnknownStateError(f"unknown state {start!r}")
    if chain.matrix.dangling[sid]:
        raise DanglingStateError(chain.state_label(sid))
    start_id = sid
    rng = CounterRNG(seed)
    sampler = _Sampler(chain)
    emitted = []
    for _ in range(steps):
        u = rng.random()
        if chain.matrix.dangling[sid]:
            if policy == "halt":
                raise DanglingStateError(
                    chain.state_label(sid),
                    f"walk reached dangling state {chain.state_label(sid)!r} "
                    f"after {len(emitted)} steps",
                )
            sid = start_id if policy == "restart-at-start" else min(
                int(u * chain.n_states), chain.n_states - 1
            )
        else:
            sid = sampler.step(sid, u)
        emitted.append(chain.states[sid][-1])
    return SymbolSequence(emitted, chain.alphabet)
