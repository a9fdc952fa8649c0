"""Object-dependent models learned from data streams.

Markov chains and co-occurrence profiles over symbols, eigenvector
rankings, and self-organizing map codebooks over signal frames, with
fixed-basis baselines (Fourier series, least-squares line) to compare
against.
"""

__version__ = "0.1.0"
