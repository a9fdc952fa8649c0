"""Turn text, numeric series and edge lists into sequences and frames."""

import csv
import io
import os
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import Alphabet, SparseCountMatrix, SymbolSequence
from .errors import IngestError, InvalidParameterError

TOKEN_MODES = ("char", "word", "edge")
NORMALIZE_MODES = ("none", "zscore")


@dataclass(frozen=True)
class TokenizerConfig:
    """How raw text becomes symbols.

    ``char`` mode emits one symbol per character; ``word`` splits on
    whitespace; ``edge`` treats every non-empty line as one symbol (an edge
    or node id of a recorded track). ``letters`` restricts what counts as a
    letter when ``strip_non_letters`` is on; ``None`` means Unicode
    alphabetic characters.
    """

    mode: str = "char"
    lowercase: bool = False
    strip_non_letters: bool = False
    letters: str = None

    def __post_init__(self):
        if self.mode not in TOKEN_MODES:
            raise InvalidParameterError(f"unknown tokenizer mode {self.mode!r}")

    def is_letter(self, ch):
        if self.letters is not None:
            return ch in self.letters
        return ch.isalpha()


@dataclass
class IngestReport:
    skipped_tokens: int = 0
    skipped_symbols: Counter = field(default_factory=Counter)
    dropped_frames: int = 0
    dropped_samples: int = 0

    def to_dict(self):
        return {
            "format": "prespec/ingest_report/1",
            "skipped_tokens": self.skipped_tokens,
            "skipped_symbols": dict(sorted(self.skipped_symbols.items())),
            "dropped_frames": self.dropped_frames,
            "dropped_samples": self.dropped_samples,
        }


def decode_text(data, source=None):
    if isinstance(data, str):
        return data
    try:
        return bytes(data).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise IngestError(
            f"invalid UTF-8 at byte offset {exc.start}", source=source, location=exc.start
        ) from None


def _raw_tokens(text, cfg):
    if cfg.lowercase:
        text = text.lower()
    if cfg.mode == "char":
        if cfg.strip_non_letters:
            return [ch for ch in text if cfg.is_letter(ch)]
        return list(text)
    if cfg.mode == "word":
        words = text.split()
        if cfg.strip_non_letters:
            words = ["".join(ch for ch in w if cfg.is_letter(ch)) for w in words]
            words = [w for w in words if w]
        return words
    return [line.strip() for line in text.splitlines() if line.strip()]


def tokenize(text, cfg=None, alphabet=None, growable=True, source=None):
    """Tokenize ``text`` (str or UTF-8 bytes) into a :class:`SymbolSequence`.

    Returns ``(sequence, report)``. With ``growable=False`` symbols missing
    from ``alphabet`` are skipped and tallied in the report.
    """
    cfg = cfg or TokenizerConfig()
    alphabet = Alphabet() if alphabet is None else alphabet
    report = IngestReport()
    ids = []
    for tok in _raw_tokens(decode_text(text, source), cfg):
        if growable:
            ids.append(alphabet.add(tok))
            continue
        idx = alphabet.get(tok)
        if idx is None:
            report.skipped_tokens += 1
            report.skipped_symbols[tok] += 1
        else:
            ids.append(idx)
    return SymbolSequence(ids, alphabet), report


def read_text(path, cfg=None, alphabet=None, growable=True):
    with open(path, "rb") as fh:
        data = fh.read()
    return tokenize(data, cfg, alphabet, growable, source=os.fspath(path))


@dataclass(frozen=True)
class FrameConfig:
    frame_len: int
    hop: int = None
    normalize: str = "none"

    def __post_init__(self):
        if self.hop is None:
            object.__setattr__(self, "hop", self.frame_len)
        if int(self.frame_len) <= 0 or int(self.hop) <= 0:
            raise InvalidParameterError("frame_len and hop must be positive")
        if self.normalize not in NORMALIZE_MODES:
            raise InvalidParameterError(f"unknown normalization {self.normalize!r}")

    def n_frames(self, length):
        if length < self.frame_len:
            return 0
        return (length - self.frame_len) // self.hop + 1

    def to_dict(self):
        return {"frame_len": self.frame_len, "hop": self.hop, "normalize": self.normalize}

    @classmethod
    def from_dict(cls, data):
        return cls(int(data["frame_len"]), int(data["hop"]), data.get("normalize", "none"))


@dataclass
class FrameSet:
    frames: np.ndarray
    offsets: np.ndarray
    config: FrameConfig
    report: IngestReport = field(default_factory=IngestReport)

    def __len__(self):
        return len(self.frames)

    @property
    def dim(self):
        return self.frames.shape[1]


def zscore(frames):
    """Row-wise z-normalization; constant rows become zeros."""
    frames = np.asarray(frames, dtype=np.float64)
    mean = frames.mean(axis=1, keepdims=True)
    centered = frames - mean
    std = np.sqrt((centered**2).mean(axis=1, keepdims=True))
    scale = np.max(np.abs(frames), axis=1, keepdims=True)
    # spread at rounding level counts as constant
    flat = std <= 1e-12 * np.maximum(scale, 1.0)
    out = np.divide(centered, std, out=np.zeros_like(centered), where=~flat)
    return out


def frame_signal(series, cfg):
    series = np.asarray(series, dtype=np.float64).reshape(-1)
    n = cfg.n_frames(len(series))
    if n == 0:
        raise IngestError(
            f"series of length {len(series)} is shorter than frame_len {cfg.frame_len}"
        )
    offsets = np.arange(n, dtype=np.int64) * cfg.hop
    frames = series[offsets[:, None] + np.arange(cfg.frame_len)]
    if cfg.normalize == "zscore":
        frames = zscore(frames)
    covered = int(offsets[-1]) + cfg.frame_len
    tail = len(series) - n * cfg.hop  # samples from the first partial start onward
    report = IngestReport(
        dropped_frames=max(0, -(-tail // cfg.hop)),
        dropped_samples=len(series) - covered,
    )
    return FrameSet(frames, offsets, cfg, report)


def read_signal(path):
    """One-column CSV of reals. Blank lines and a non-numeric header are ignored."""
    source = os.fspath(path)
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 1:
                raise IngestError("expected one column", source=source, location=lineno)
            try:
                value = float(row[0])
            except ValueError:
                if lineno == 1 and not values:
                    continue
                raise IngestError(
                    f"not a number: {row[0]!r}", source=source, location=lineno
                ) from None
            if not np.isfinite(value):
                raise IngestError("non-finite value", source=source, location=lineno)
            values.append(value)
    return np.array(values, dtype=np.float64)


def _is_path(rows):
    return isinstance(rows, os.PathLike) or (
        isinstance(rows, str) and "\n" not in rows and os.path.isfile(rows)
    )


def _edge_rows(rows):
    if _is_path(rows):
        with open(rows, newline="", encoding="utf-8") as fh:
            yield from csv.reader(fh)
    elif isinstance(rows, str):
        yield from csv.reader(io.StringIO(rows))
    else:
        for row in rows:
            yield [str(c) for c in row]


def read_edge_stream(rows, alphabet=None):
    """Parse ``from,to[,weight]`` rows into a walk and weighted edge counts.

    ``rows`` is a path, CSV text, or an iterable of tuples. The walk visits
    ``from`` then ``to`` of every row, skipping ``from`` when it repeats the
    previous ``to``. A first row of ``from,to[,weight]`` is a header.
    Returns ``(sequence, counts)``.
    """
    source = os.fspath(rows) if _is_path(rows) else None
    alphabet = Alphabet() if alphabet is None else alphabet
    edges = []
    walk = []
    for lineno, row in enumerate(_edge_rows(rows), start=1):
        row = [c.strip() for c in row]
        if not row or not any(row):
            continue
        if lineno == 1 and [c.lower() for c in row[:2]] == ["from", "to"]:
            continue
        if len(row) not in (2, 3) or not row[0] or not row[1]:
            raise IngestError(
                "expected from,to[,weight]", source=source, location=lineno
            )
        weight = 1
        if len(row) == 3:
            try:
                weight = float(row[2])
            except ValueError:
                raise IngestError(
                    f"bad weight {row[2]!r}", source=source, location=lineno
                ) from None
            if not np.isfinite(weight) or weight < 0:
                raise IngestError(
                    f"weight must be finite and nonnegative, got {row[2]}",
                    source=source,
                    location=lineno,
                )
            if weight.is_integer():
                weight = int(weight)
        a, b = alphabet.add(row[0]), alphabet.add(row[1])
        if not walk or walk[-1] != a:
            walk.append(a)
        walk.append(b)
        edges.append((a, b, weight))
    counts = SparseCountMatrix(len(alphabet))
    for a, b, w in edges:
        counts.add(a, b, w)
    return SymbolSequence(walk, alphabet), counts
