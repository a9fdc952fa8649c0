"""Fixed-basis reference models and the codebook-vs-basis comparison.

The truncated Fourier series

    s(t) = a0 / 2 + sum_k [a_k cos(k w t) + b_k sin(k w t)],  w = 2 pi / period

is fitted to one uniformly sampled period, and a straight line
``y = a x + c`` is fitted by ordinary least squares. ``compare_models``
measures both against SOM codebook reconstruction on the same samples.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, InvalidParameterError
from .som import encode, reconstruct


@dataclass
class FourierFit:
    a0: float
    a: np.ndarray
    b: np.ndarray
    fundamental_period: float
    n_terms: int
    n_samples: int = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if not len(self.a) == len(self.b) == self.n_terms:
            raise DimensionMismatchError("coefficient lists must have n_terms entries")
        if not self.fundamental_period > 0:
            raise InvalidParameterError("fundamental period must be positive")

    @property
    def omega(self):
        return 2 * np.pi / self.fundamental_period

    @property
    def dof(self):
        return 2 * self.n_terms + 1

    def to_dict(self):
        return {
            "format": "prespec/fourier_fit/1",
            "a0": self.a0,
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "fundamental_period": self.fundamental_period,
            "n_terms": self.n_terms,
            "n_samples": self.n_samples,
        }


def fourier_fit(signal, n_terms, period=None):
    """Discrete Fourier coefficients of one sampled period.

    ``a_k = (2/N) sum_t s_t cos(k w t)``, ``b_k = (2/N) sum_t s_t sin(k w t)``
    with samples at ``t = j * period / N``. ``period`` defaults to ``N``
    (unit sample spacing).
    """
    s = np.asarray(signal, dtype=np.float64).reshape(-1)
    N = len(s)
    n_terms = int(n_terms)
    if n_terms < 0:
        raise InvalidParameterError("n_terms must be nonnegative")
    if N < 2 * n_terms + 1:
        raise InvalidParameterError(
            f"{N} samples cannot determine {n_terms} harmonics (need {2 * n_terms + 1})"
        )
    spectrum = np.fft.rfft(s)
    scale = 2.0 / N
    return FourierFit(
        a0=float(scale * spectrum[0].real),
        a=scale * spectrum[1 : n_terms + 1].real,
        b=-scale * spectrum[1 : n_terms + 1].imag,
        fundamental_period=float(N if period is None else period),
        n_terms=n_terms,
        n_samples=N,
    )


def fourier_reconstruct(fit, n_samples=None):
    """Evaluate the truncated series on ``n_samples`` uniform points of one period."""
    n_samples = fit.n_samples if n_samples is None else int(n_samples)
    if n_samples is None or n_samples < 1:
        raise InvalidParameterError("n_samples must be at least 1")
    t = np.arange(n_samples) * (fit.fundamental_period / n_samples)
    k = np.arange(1, fit.n_terms + 1)
    phase = fit.omega * np.outer(t, k)
    return fit.a0 / 2 + np.cos(phase) @ fit.a + np.sin(phase) @ fit.b


def rmse(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"shape mismatch {x.shape} vs {y.shape}")
    return float(np.sqrt(np.mean((x - y) ** 2)))


@dataclass
class LineFit:
    slope: float
    intercept: float
    residuals: np.ndarray
    sse: float

    def predict(self, x):
        return self.slope * np.asarray(x, dtype=np.float64) + self.intercept


def line_fit(points, y=None):
    """Ordinary least squares line through ``(x, y)`` points.

    Accepts an ``(n, 2)`` array of points, or ``x`` and ``y`` separately.
    """
    if y is None:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DimensionMismatchError("points must be an (n, 2) array")
        x, y = pts[:, 0], pts[:, 1]
    else:
        x = np.asarray(points, dtype=np.float64).reshape(-1)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if x.shape != y.shape:
            raise DimensionMismatchError("x and y must have equal length")
    if len(x) < 2:
        raise InvalidParameterError("a line needs at least two points")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise InvalidParameterError("all x values are equal; the line would be vertical")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    residuals = y - (slope * x + intercept)
    return LineFit(slope, intercept, residuals, float(residuals @ residuals))


def _index_bytes(n_codes):
    for width in (1, 2, 4, 8):
        if n_codes <= 256**width:
            return width
    return 8


@dataclass
class ComparisonReport:
    signal_id: str
    n_samples: int
    som_rmse: float
    fourier_rmse: list  # [(n_terms, rmse), ...]
    codebook_size: int
    frame_len: int
    n_frames: int
    models: list = field(default_factory=list)

    def to_dict(self):
        return {
            "format": "prespec/comparison/1",
            "signal_id": self.signal_id,
            "n_samples": self.n_samples,
            "som_rmse": self.som_rmse,
            "fourier_rmse": [[n, r] for n, r in self.fourier_rmse],
            "codebook_size": self.codebook_size,
            "frame_len": self.frame_len,
            "n_frames": self.n_frames,
            "models": self.models,
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "dof", "rmse"])
            for m in self.models:
                w.writerow([m["model"], m["dof"], repr(m["rmse"])])


def compare_models(signal, som_grid, frame_cfg, fourier_terms, signal_id="signal"):
    """RMSE of codebook reconstruction against Fourier fits of several sizes.

    Both models are scored on the samples the framing covers. Model size:
    the codebook costs ``codebook_size * dim`` reals (plus one index per
    frame), a Fourier fit ``2n + 1`` reals. Bytes assume float64 reals and
    the narrowest unsigned integer that holds every index.
    """
    if frame_cfg.normalize != "none":
        raise InvalidParameterError("comparison needs unnormalized frames")
    s = np.asarray(signal, dtype=np.float64).reshape(-1)
    enc = encode(som_grid, s, frame_cfg)
    recon = reconstruct(enc)
    covered = s[: len(recon)]
    som_err = rmse(recon, covered)
    k, dim = som_grid.n_nodes, som_grid.dim
    models = [
        {
            "model": "som",
            "n_terms": None,
            "dof": k * dim,
            "bytes": 8 * k * dim + len(enc) * _index_bytes(k),
            "rmse": som_err,
        }
    ]
    fourier = []
    for n in fourier_terms:
        fit = fourier_fit(covered, n)
        err = rmse(fourier_reconstruct(fit, len(covered)), covered)
        fourier.append((int(n), err))
        models.append(
            {"model": f"fourier_{n}", "n_terms": int(n), "dof": fit.dof,
             "bytes": 8 * fit.dof, "rmse": err}
        )
    return ComparisonReport(
        signal_id=signal_id,
        n_samples=len(covered),
        som_rmse=som_err,
        fourier_rmse=fourier,
        codebook_size=k,
        frame_len=frame_cfg.frame_len,
        n_frames=len(enc),
        models=models,
    )
