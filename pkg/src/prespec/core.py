"""Shared symbol, count and probability types.

Everything here serializes to versioned JSON dictionaries tagged
``{"format": "prespec/<type>/1"}``; :func:`dumps` / :func:`loads` dispatch
on that tag.
"""

import json
from collections import Counter

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatchError, FormatError, InvalidParameterError

NORMALIZATION_ATOL = 1e-12


def _fmt(kind):
    return f"prespec/{kind}/1"


def _check_format(data, kind):
    tag = data.get("format") if isinstance(data, dict) else None
    if tag != _fmt(kind):
        raise FormatError(f"expected format {_fmt(kind)!r}, got {tag!r}")


class Alphabet:
    """Interned symbol universe. Ids are dense and follow first insertion."""

    def __init__(self, symbols=()):
        self._symbols = []
        self._index = {}
        for s in symbols:
            if s in self._index:
                raise InvalidParameterError(f"duplicate symbol {s!r}")
            self.add(s)

    def add(self, symbol):
        """Return the id of ``symbol``, interning it if new."""
        idx = self._index.get(symbol)
        if idx is None:
            idx = len(self._symbols)
            self._symbols.append(symbol)
            self._index[symbol] = idx
        return idx

    def id(self, symbol):
        return self._index[symbol]

    def get(self, symbol, default=None):
        return self._index.get(symbol, default)

    @property
    def symbols(self):
        return tuple(self._symbols)

    def __getitem__(self, idx):
        return self._symbols[idx]

    def __contains__(self, symbol):
        return symbol in self._index

    def __len__(self):
        return len(self._symbols)

    def __iter__(self):
        return iter(self._symbols)

    def __eq__(self, other):
        return isinstance(other, Alphabet) and self._symbols == other._symbols

    def __repr__(self):
        head = ", ".join(repr(s) for s in self._symbols[:8])
        more = ", ..." if len(self) > 8 else ""
        return f"Alphabet([{head}{more}])"

    def copy(self):
        return Alphabet(self._symbols)

    def is_prefix_of(self, other):
        n = len(self._symbols)
        return len(other) >= n and list(other.symbols[:n]) == self._symbols

    def to_dict(self):
        return {"format": _fmt("alphabet"), "symbols": list(self._symbols)}

    @classmethod
    def from_dict(cls, data):
        _check_format(data, "alphabet")
        return cls(data["symbols"])


class SymbolSequence:
    """Ordered observations, stored as ids into an :class:`Alphabet`."""

    def __init__(self, ids, alphabet):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        if ids.size and (ids.min() < 0 or ids.max() >= len(alphabet)):
            raise InvalidParameterError("symbol id outside alphabet")
        ids.setflags(write=False)
        self.ids = ids
        self.alphabet = alphabet

    @classmethod
    def from_symbols(cls, symbols, alphabet=None):
        alphabet = Alphabet() if alphabet is None else alphabet
        return cls([alphabet.add(s) for s in symbols], alphabet)

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids.tolist())

    def __eq__(self, other):
        return (
            isinstance(other, SymbolSequence)
            and np.array_equal(self.ids, other.ids)
            and self.alphabet == other.alphabet
        )

    def __repr__(self):
        return f"SymbolSequence(len={len(self)}, alphabet_size={len(self.alphabet)})"

    def symbols(self):
        return [self.alphabet[i] for i in self.ids.tolist()]

    def render(self, sep=""):
        return sep.join(self.symbols())

    def to_dict(self):
        return {
            "format": _fmt("symbol_sequence"),
            "alphabet": list(self.alphabet.symbols),
            "ids": self.ids.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        _check_format(data, "symbol_sequence")
        return cls(data["ids"], Alphabet(data["alphabet"]))


def _as_count(w):
    if isinstance(w, (bool, np.bool_)):
        raise InvalidParameterError("count must be numeric")
    if isinstance(w, (int, np.integer)):
        return int(w)
    w = float(w)
    if not np.isfinite(w):
        raise InvalidParameterError("count must be finite")
    return int(w) if w.is_integer() else w


class SparseCountMatrix:
    """Nonnegative counts keyed by ``(row, col)``; zero entries are never stored.

    Integer weights stay Python ints, so sums are exact. Single writer.
    """

    def __init__(self, n_rows, n_cols=None, entries=None):
        n_cols = n_rows if n_cols is None else n_cols
        if n_rows < 0 or n_cols < 0:
            raise InvalidParameterError("matrix dimensions must be nonnegative")
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self._entries = {}
        if entries:
            items = entries.items() if isinstance(entries, dict) else entries
            for (r, c), w in items:
                self.add(r, c, w)

    def add(self, row, col, weight=1):
        if not (0 <= row < self.n_rows and 0 <= col < self.n_cols):
            raise DimensionMismatchError(
                f"entry ({row}, {col}) outside {self.n_rows}x{self.n_cols} matrix"
            )
        weight = _as_count(weight)
        if weight < 0:
            raise InvalidParameterError(f"negative count {weight} at ({row}, {col})")
        if weight == 0:
            return
        key = (int(row), int(col))
        self._entries[key] = self._entries.get(key, 0) + weight

    def update(self, pairs):
        """Add one to each ``(row, col)`` in ``pairs``."""
        for (r, c), w in Counter(pairs).items():
            self.add(r, c, w)

    def resize(self, n_rows, n_cols=None):
        """Grow in place. Existing entries keep their coordinates."""
        n_cols = n_rows if n_cols is None else n_cols
        if n_rows < self.n_rows or n_cols < self.n_cols:
            raise DimensionMismatchError("count matrices can only grow")
        self.n_rows, self.n_cols = int(n_rows), int(n_cols)
        return self

    def __getitem__(self, key):
        return self._entries.get(tuple(key), 0)

    def __len__(self):
        return len(self._entries)

    def __eq__(self, other):
        return (
            isinstance(other, SparseCountMatrix)
            and self.shape == other.shape
            and self._entries == other._entries
        )

    def __repr__(self):
        return f"SparseCountMatrix({self.n_rows}x{self.n_cols}, nnz={len(self)})"

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def items(self):
        """Entries in row-major order."""
        return sorted(self._entries.items())

    def total(self):
        return sum(self._entries.values())

    def row_totals(self):
        totals = [0] * self.n_rows
        for (r, _), w in self._entries.items():
            totals[r] += w
        return totals

    def copy(self):
        out = SparseCountMatrix(self.n_rows, self.n_cols)
        out._entries = dict(self._entries)
        return out

    def scaled(self, factor):
        if factor <= 0:
            raise InvalidParameterError("scale factor must be positive")
        return SparseCountMatrix(
            self.n_rows, self.n_cols, {k: v * factor for k, v in self._entries.items()}
        )

    def to_dense(self):
        out = np.zeros(self.shape)
        for (r, c), w in self._entries.items():
            out[r, c] = w
        return out

    def to_dict(self):
        return {
            "format": _fmt("count_matrix"),
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "entries": [[r, c, w] for (r, c), w in self.items()],
        }

    @classmethod
    def from_dict(cls, data):
        _check_format(data, "count_matrix")
        return cls(
            data["n_rows"], data["n_cols"], [((r, c), w) for r, c, w in data["entries"]]
        )


def merge_counts(a, b):
    """Entrywise sum of two equally shaped count matrices."""
    if a.shape != b.shape:
        raise DimensionMismatchError(f"cannot merge {a.shape} with {b.shape}")
    out = a.copy()
    for (r, c), w in b._entries.items():
        out._entries[(r, c)] = out._entries.get((r, c), 0) + w
    return out


class StochasticMatrix:
    """Row-stochastic matrix kept sparse.

    Row ``i`` is ``sparse[i, :] + remainder[i]`` on every column. The
    remainder carries add-alpha smoothing without densifying. Rows with no
    mass and no smoothing are flagged dangling and are all zero.
    """

    def __init__(self, sparse, remainder=None, dangling=None):
        sparse = sp.csr_matrix(sparse, dtype=np.float64)
        n_rows, n = sparse.shape
        if n_rows != n:
            raise DimensionMismatchError("stochastic matrix must be square")
        sparse.sort_indices()
        self.sparse = sparse
        self.n = n
        self.remainder = (
            np.zeros(n) if remainder is None else np.asarray(remainder, dtype=np.float64)
        )
        if dangling is None:
            mass = np.asarray(sparse.sum(axis=1)).ravel() + self.remainder * n
            dangling = mass == 0
        self.dangling = np.asarray(dangling, dtype=bool)
        if self.remainder.shape != (n,) or self.dangling.shape != (n,):
            raise DimensionMismatchError("row metadata length must equal n")

    @classmethod
    def from_dense(cls, matrix, atol=NORMALIZATION_ATOL):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError("stochastic matrix must be square")
        if np.any(matrix < 0) or np.any(matrix > 1):
            raise InvalidParameterError("probabilities must lie in [0, 1]")
        sums = matrix.sum(axis=1)
        dangling = sums == 0
        if np.any(np.abs(sums[~dangling] - 1) > atol):
            raise InvalidParameterError("rows must sum to 1 or be all zero")
        return cls(sp.csr_matrix(matrix), dangling=dangling)

    @property
    def row_kind(self):
        return ["dangling" if d else "normalized" for d in self.dangling]

    @property
    def has_dangling(self):
        return bool(self.dangling.any())

    def get(self, i, j):
        return float(self.sparse[i, j] + self.remainder[i])

    def row(self, i):
        """``(cols, probs, remainder)`` for row ``i``."""
        lo, hi = self.sparse.indptr[i], self.sparse.indptr[i + 1]
        return self.sparse.indices[lo:hi].copy(), self.sparse.data[lo:hi].copy(), float(
            self.remainder[i]
        )

    def row_dense(self, i):
        out = np.full(self.n, self.remainder[i])
        cols, probs, _ = self.row(i)
        out[cols] += probs
        return out

    def row_sums(self):
        return np.asarray(self.sparse.sum(axis=1)).ravel() + self.remainder * self.n

    def left_multiply(self, x):
        """``x @ P`` for a row vector ``x`` (distribution over states)."""
        x = np.asarray(x, dtype=np.float64)
        return self.sparse.T @ x + float(x @ self.remainder)

    def to_dense(self):
        return self.sparse.toarray() + self.remainder[:, None]

    def __eq__(self, other):
        return (
            isinstance(other, StochasticMatrix)
            and self.n == other.n
            and (self.sparse != other.sparse).nnz == 0
            and np.array_equal(self.remainder, other.remainder)
            and np.array_equal(self.dangling, other.dangling)
        )

    def to_dict(self):
        rows = []
        for i in range(self.n):
            cols, probs, _ = self.row(i)
            rows.append([[int(c), float(p)] for c, p in zip(cols, probs)])
        return {
            "format": _fmt("stochastic_matrix"),
            "n": self.n,
            "rows": rows,
            "remainder": self.remainder.tolist(),
            "dangling": [int(i) for i in np.flatnonzero(self.dangling)],
        }

    @classmethod
    def from_dict(cls, data):
        _check_format(data, "stochastic_matrix")
        n = data["n"]
        r_idx, c_idx, vals = [], [], []
        for i, row in enumerate(data["rows"]):
            for j, p in row:
                r_idx.append(i)
                c_idx.append(j)
                vals.append(p)
        sparse = sp.csr_matrix((vals, (r_idx, c_idx)), shape=(n, n), dtype=np.float64)
        dangling = np.zeros(n, dtype=bool)
        dangling[data["dangling"]] = True
        return cls(sparse, data["remainder"], dangling)


def row_normalize(counts, smoothing=0.0):
    """Turn transition counts into a :class:`StochasticMatrix`.

    With ``smoothing = alpha > 0`` entry ``(i, j)`` is
    ``(count + alpha) / (row_total + alpha * n)``; the ``alpha`` part is kept
    as a per-row remainder. With ``alpha = 0`` empty rows are dangling.
    """
    smoothing = float(smoothing)
    if not smoothing >= 0:
        raise InvalidParameterError(f"smoothing must be >= 0, got {smoothing}")
    n_rows, n = counts.shape
    if n_rows != n:
        raise DimensionMismatchError("transition counts must be square")
    totals = np.array([float(t) for t in counts.row_totals()], dtype=np.float64)
    denom = totals + smoothing * n
    items = counts.items()
    rows = np.fromiter((r for (r, _), _ in items), dtype=np.int64, count=len(items))
    cols = np.fromiter((c for (_, c), _ in items), dtype=np.int64, count=len(items))
    vals = np.fromiter((float(w) for _, w in items), dtype=np.float64, count=len(items))
    if len(items):
        vals = vals / denom[rows]
    sparse = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    remainder = np.zeros(n)
    if smoothing > 0 and n:
        remainder = smoothing / denom
    dangling = denom == 0
    return StochasticMatrix(sparse, remainder, dangling)


class ProbabilityVector:
    """Dense nonnegative vector summing to one."""

    def __init__(self, values, atol=NORMALIZATION_ATOL):
        values = np.array(values, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise InvalidParameterError("probability vector must be nonempty")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise InvalidParameterError("probabilities must be finite and nonnegative")
        if abs(values.sum() - 1.0) > atol:
            raise InvalidParameterError(f"probabilities sum to {values.sum()!r}, not 1")
        values.setflags(write=False)
        self.values = values

    @classmethod
    def uniform(cls, n):
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def normalized(cls, weights):
        weights = np.asarray(weights, dtype=np.float64)
        return cls(weights / weights.sum())

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __eq__(self, other):
        return isinstance(other, ProbabilityVector) and np.array_equal(
            self.values, other.values
        )

    def __repr__(self):
        return f"ProbabilityVector({self.values.tolist()!r})"

    def to_dict(self):
        return {"format": _fmt("probability_vector"), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data):
        _check_format(data, "probability_vector")
        return cls(data["values"])


def l1_distance(p, q):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionMismatchError(f"length mismatch: {p.shape} vs {q.shape}")
    return float(np.abs(p - q).sum())


_TYPES = {
    _fmt("alphabet"): Alphabet,
    _fmt("symbol_sequence"): SymbolSequence,
    _fmt("count_matrix"): SparseCountMatrix,
    _fmt("stochastic_matrix"): StochasticMatrix,
    _fmt("probability_vector"): ProbabilityVector,
}


def register(kind, cls):
    _TYPES[_fmt(kind)] = cls


def dumps(obj, indent=None):
    """Deterministic JSON text for any serializable prespec object."""
    return json.dumps(obj.to_dict(), indent=indent, sort_keys=False, ensure_ascii=False)


def loads(text):
    data = json.loads(text)
    tag = data.get("format") if isinstance(data, dict) else None
    cls = _TYPES.get(tag)
    if cls is None:
        raise FormatError(f"unknown format tag {tag!r}")
    return cls.from_dict(data)
