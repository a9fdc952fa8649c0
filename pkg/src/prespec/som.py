"""Self-organizing map codebooks over signal frames.

A trained map is a dictionary of observed dynamic forms: every frame of a
signal is replaced by the flat index of its best matching prototype, and
the index stream can be read back as a signal or modeled as a chain.

Lattice is rectangular, flat index ``row * grid_w + col``. Neighborhoods
are Gaussian in Euclidean lattice distance. Learning rate and radius decay
exponentially over the ``T`` updates of a run,
``v(t) = v_start * (v_end / v_start) ** (t / (T - 1))``, so the last update
uses the end value.
"""

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Alphabet, SymbolSequence
from .errors import (
    DimensionMismatchError,
    FormatError,
    InvalidParameterError,
)
from .ingest import FrameConfig, FrameSet, frame_signal
from .markov import ChainConfig, build_chain
from .rng import CounterRNG

SOM_FORMAT = "prespec/som/1"
TRAIN_MODES = ("online", "batch")


@dataclass(frozen=True)
class SomConfig:
    grid_w: int
    grid_h: int
    dim: int
    epochs: int = 10
    lr_start: float = 0.5
    lr_end: float = 0.01
    radius_start: float = None  # default max(grid_w, grid_h) / 2
    radius_end: float = 1.0
    seed: int = 0
    mode: str = "online"

    def __post_init__(self):
        if min(self.grid_w, self.grid_h, self.dim) < 1:
            raise InvalidParameterError("grid_w, grid_h and dim must be positive")
        if self.epochs < 1:
            raise InvalidParameterError("epochs must be at least 1")
        if self.radius_start is None:
            object.__setattr__(
                self, "radius_start", max(max(self.grid_w, self.grid_h) / 2, self.radius_end)
            )
        if not 1 >= self.lr_start >= self.lr_end >= 0:
            raise InvalidParameterError("need 1 >= lr_start >= lr_end >= 0")
        if self.lr_end == 0 and self.lr_start != 0:
            raise InvalidParameterError("an exponential schedule cannot decay to 0")
        if not self.radius_start >= self.radius_end > 0:
            raise InvalidParameterError("need radius_start >= radius_end > 0")
        if self.mode not in TRAIN_MODES:
            raise InvalidParameterError(f"unknown training mode {self.mode!r}")

    @property
    def n_nodes(self):
        return self.grid_w * self.grid_h

    def to_dict(self):
        return asdict(self)


def _schedule(start, end, t, total):
    if start == 0:
        return 0.0
    frac = t / (total - 1) if total > 1 else 0.0
    return start * (end / start) ** frac


@dataclass(eq=False)
class SomGrid:
    config: SomConfig
    prototypes: np.ndarray  # (grid_h * grid_w, dim)
    trained_samples: int = 0
    _coords: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        if self.prototypes.shape != (self.config.n_nodes, self.config.dim):
            raise DimensionMismatchError(
                f"prototypes shape {self.prototypes.shape} does not match "
                f"{self.config.n_nodes}x{self.config.dim}"
            )
        if not np.all(np.isfinite(self.prototypes)):
            raise InvalidParameterError("prototype entries must be finite")

    @property
    def w(self):
        return self.config.grid_w

    @property
    def h(self):
        return self.config.grid_h

    @property
    def dim(self):
        return self.config.dim

    @property
    def n_nodes(self):
        return self.config.n_nodes

    def flat(self, row, col):
        return row * self.w + col

    def position(self, flat):
        return divmod(int(flat), self.w)

    @property
    def coords(self):
        """``(n_nodes, 2)`` array of ``(row, col)``."""
        if self._coords is None:
            idx = np.arange(self.n_nodes)
            self._coords = np.stack([idx // self.w, idx % self.w], axis=1).astype(float)
        return self._coords

    def lattice_sqdist(self):
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return (diff**2).sum(axis=2)

    def with_prototypes(self, prototypes, trained_samples):
        return SomGrid(self.config, prototypes, trained_samples)

    def to_dict(self):
        return {
            "format": SOM_FORMAT,
            "w": self.w,
            "h": self.h,
            "dim": self.dim,
            "prototypes": self.prototypes.tolist(),
            "trained_samples": self.trained_samples,
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or data.get("format") != SOM_FORMAT:
            raise FormatError(f"expected format {SOM_FORMAT!r}")
        try:
            cfg = dict(data.get("config") or {})
            cfg.update(grid_w=data["w"], grid_h=data["h"], dim=data["dim"])
            return cls(SomConfig(**cfg), np.array(data["prototypes"], dtype=np.float64),
                       int(data.get("trained_samples", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed codebook: {exc}") from None


def load_grid(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", source=str(path), location=exc.lineno)
    return SomGrid.from_dict(data)


def _frames(data):
    arr = data.frames if isinstance(data, FrameSet) else np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def _check_dim(grid_or_cfg, frames):
    dim = grid_or_cfg.dim
    if frames.shape[1] != dim:
        raise DimensionMismatchError(f"frames have length {frames.shape[1]}, map expects {dim}")


def init_grid(cfg, data):
    """Prototypes drawn uniformly, with replacement, from the data frames."""
    frames = _frames(data)
    if len(frames) == 0:
        raise InvalidParameterError("cannot initialize a map from empty data")
    _check_dim(cfg, frames)
    picks = CounterRNG(cfg.seed).integers(len(frames), size=cfg.n_nodes)
    return SomGrid(cfg, frames[picks].copy(), 0)


def _sqdist(prototypes, frames, chunk=2048):
    out = np.empty((len(frames), len(prototypes)))
    for s in range(0, len(frames), chunk):
        diff = frames[s : s + chunk, None, :] - prototypes[None, :, :]
        out[s : s + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def bmu(grid, v):
    """Flat index of the nearest prototype; ties go to the lowest index."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape[0] != grid.dim:
        raise DimensionMismatchError(f"vector has length {v.shape[0]}, map expects {grid.dim}")
    diff = grid.prototypes - v
    return int(np.argmin(np.einsum("ij,ij->i", diff, diff)))


def bmus(grid, data):
    frames = _frames(data)
    _check_dim(grid, frames)
    if len(frames) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argmin(_sqdist(grid.prototypes, frames), axis=1)


def train(grid, data, cfg=None, debug=False):
    """Train a copy of ``grid`` on ``data`` in data order.

    Online: per sample, ``w_j += lr(t) * h_j(t) * (x - w_j)`` with the
    Gaussian neighborhood around the sample's BMU. Batch: per epoch every
    prototype becomes the neighborhood-weighted mean of all samples. With
    ``debug`` each online step asserts that the BMU moved closer.
    """
    cfg = cfg or grid.config
    frames = _frames(data)
    _check_dim(grid, frames)
    if len(frames) == 0:
        raise InvalidParameterError("cannot train on empty data")
    if (cfg.grid_w, cfg.grid_h, cfg.dim) != (grid.w, grid.h, grid.dim):
        raise DimensionMismatchError("training config does not match the grid shape")
    protos = grid.prototypes.copy()
    lattice = grid.lattice_sqdist()
    n = len(frames)
    if cfg.mode == "online":
        total = cfg.epochs * n
        t = 0
        for _ in range(cfg.epochs):
            for x in frames:
                lr = _schedule(cfg.lr_start, cfg.lr_end, t, total)
                t += 1
                if lr == 0:
                    continue
                radius = _schedule(cfg.radius_start, cfg.radius_end, t - 1, total)
                diff = x - protos
                winner = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
                h = np.exp(-lattice[winner] / (2.0 * radius * radius))
                before = float(diff[winner] @ diff[winner]) if debug else 0.0
                protos += (lr * h)[:, None] * diff
                if debug and before > 0 and 0 < lr <= 1:
                    after = float(((x - protos[winner]) ** 2).sum())
                    assert after < before, "online step did not contract the BMU"
    else:
        for epoch in range(cfg.epochs):
            radius = _schedule(cfg.radius_start, cfg.radius_end, epoch, cfg.epochs)
            winners = np.argmin(_sqdist(protos, frames), axis=1)
            sums = np.zeros_like(protos)
            np.add.at(sums, winners, frames)
            hits = np.bincount(winners, minlength=grid.n_nodes).astype(float)
            h = np.exp(-lattice / (2.0 * radius * radius))
            num = h @ sums
            den = h @ hits
            ok = den > 0
            protos[ok] = num[ok] / den[ok, None]
    return grid.with_prototypes(protos, grid.trained_samples + cfg.epochs * n)


def quantization_error(grid, data):
    """Mean Euclidean distance from each frame to its BMU prototype."""
    frames = _frames(data)
    if len(frames) == 0:
        raise InvalidParameterError("quantization error of empty data")
    _check_dim(grid, frames)
    d2 = _sqdist(grid.prototypes, frames)
    return float(np.sqrt(d2.min(axis=1)).mean())


def topographic_error(grid, data):
    """Share of frames whose two nearest prototypes are not 8-neighbors."""
    frames = _frames(data)
    if len(frames) == 0:
        raise InvalidParameterError("topographic error of empty data")
    if grid.n_nodes < 2:
        raise InvalidParameterError("topographic error needs at least 2 nodes")
    _check_dim(grid, frames)
    d2 = _sqdist(grid.prototypes, frames)
    order = np.argsort(d2, axis=1, kind="stable")[:, :2]
    rc = grid.coords[order]  # (frames, 2, 2)
    gap = np.abs(rc[:, 0, :] - rc[:, 1, :]).max(axis=1)
    return float(np.mean(gap > 1))


def u_matrix(grid):
    """``(grid_h, grid_w)`` mean distance from each node to its 8-neighbors."""
    out = np.zeros((grid.h, grid.w))
    P = grid.prototypes.reshape(grid.h, grid.w, grid.dim)
    for r in range(grid.h):
        for c in range(grid.w):
            dists = [
                np.linalg.norm(P[r, c] - P[rr, cc])
                for rr in range(max(0, r - 1), min(grid.h, r + 2))
                for cc in range(max(0, c - 1), min(grid.w, c + 2))
                if (rr, cc) != (r, c)
            ]
            out[r, c] = np.mean(dists) if dists else 0.0
    return out


@dataclass(eq=False)
class Encoding:
    indexes: np.ndarray
    offsets: np.ndarray
    frame_cfg: FrameConfig
    grid: SomGrid

    def __len__(self):
        return len(self.indexes)

    @property
    def signal_span(self):
        """Samples covered by the frames."""
        if len(self.indexes) == 0:
            return 0
        return int(self.offsets[-1]) + self.frame_cfg.frame_len


def encode(grid, signal, frame_cfg):
    frames = frame_signal(signal, frame_cfg)
    return Encoding(bmus(grid, frames), frames.offsets, frame_cfg, grid)


def reconstruct(encoding):
    """Read the indexed prototypes back as a signal.

    Non-overlapping frames are concatenated; overlapping ones are averaged
    sample by sample. Gapped framings (hop > frame_len) cannot be read back.
    """
    cfg = encoding.frame_cfg
    if cfg.hop > cfg.frame_len:
        raise InvalidParameterError("cannot reconstruct a framing with gaps (hop > frame_len)")
    protos = encoding.grid.prototypes
    if encoding.grid.dim != cfg.frame_len:
        raise DimensionMismatchError("codebook dimension differs from frame length")
    length = encoding.signal_span
    if cfg.hop == cfg.frame_len:
        return protos[encoding.indexes].reshape(-1)[:length].copy()
    total = np.zeros(length)
    weight = np.zeros(length)
    for off, idx in zip(encoding.offsets, encoding.indexes):
        total[off : off + cfg.frame_len] += protos[idx]
        weight[off : off + cfg.frame_len] += 1.0
    return total / weight


def index_sequence(encoding):
    """Index stream as symbols ``"0", "7", ...`` in first-appearance order."""
    return SymbolSequence.from_symbols([str(int(i)) for i in encoding.indexes], Alphabet())


def symbolic_chain(encoding, order=1):
    return build_chain(index_sequence(encoding), ChainConfig(order=order))


def write_encoding_csv(encoding, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_offset", "flat_index"])
        for off, idx in zip(encoding.offsets.tolist(), encoding.indexes.tolist()):
            w.writerow([off, idx])


def write_u_matrix_csv(umat, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row"] + [f"c{c}" for c in range(umat.shape[1])])
        for r, vals in enumerate(umat):
            w.writerow([r] + [repr(float(v)) for v in vals])

