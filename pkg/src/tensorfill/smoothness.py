"""Gaussian-kernel smoothness penalty on CP factor rows.

Each factor row is pulled towards a kernel-weighted average of its
neighbours within a window of ``S`` rows (the row itself excluded)::

    w(i, s) = K(i, s) / sum_{s'} K(i, s'),   K(i, s) = exp(-(i - s)^2 / (2 sigma^2))
    smoothed_i = sum_s w(i, s) a_s
    penalty = sum_n sum_i ||a_i - smoothed_i||^2

With the weights as a matrix ``W`` (zero diagonal), the per-mode penalty
is ``||(I - W) A||_F^2`` and its gradient is ``2 (I - W)^T (I - W) A``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "SmoothnessConfig",
    "KernelWeights",
    "kernel_weights",
    "smoothed_row",
    "smoothness_penalty",
    "smoothness_gradient",
    "SmoothnessRegularizer",
]


@dataclass(frozen=True)
class SmoothnessConfig:
    """Penalty strength ``lam``, window ``window`` and kernel width ``sigma``.

    ``modes`` restricts smoothing to a subset of modes (``None`` = all);
    useful for categorical axes whose order carries no meaning.
    """

    lam: float = 0.1
    window: int = 1
    sigma: float = 1.0
    modes: tuple | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if int(self.window) < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.modes is not None:
            object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))

    def smoothed_modes(self, n_modes: int) -> list:
        return list(range(n_modes)) if self.modes is None else [m for m in self.modes if m < n_modes]


@dataclass(frozen=True, eq=False)
class KernelWeights:
    """Normalized neighbour weights for one mode.

    ``neighbors[i]`` is a list of ``(s, w)`` pairs; ``matrix`` is the same
    information as a dense ``(I, I)`` array with zero diagonal.
    """

    size: int
    window: int
    sigma: float
    neighbors: tuple
    matrix: np.ndarray

    def residual_operator(self) -> np.ndarray:
        """``I - W`` with rows lacking neighbours zeroed."""
        op = np.eye(self.size) - self.matrix
        for i, nb in enumerate(self.neighbors):
            if not nb:
                op[i] = 0.0
        return op


@lru_cache(maxsize=256)
def kernel_weights(size: int, window: int = 1, sigma: float = 1.0) -> KernelWeights:
    """Gaussian neighbour weights for a mode of ``size`` rows.

    Rows of a size-1 mode have no neighbours; their penalty term is 0.

    >>> kw = kernel_weights(5, 1, 1.0)
    >>> kw.neighbors[2]
    ((1, 0.5), (3, 0.5))
    """
    size, window, sigma = int(size), int(window), float(sigma)
    if size < 1 or window < 1 or sigma <= 0:
        raise ValueError("need size >= 1, window >= 1 and sigma > 0")
    mat = np.zeros((size, size))
    rows = []
    for i in range(size):
        nbrs = [s for s in range(max(0, i - window), min(size, i + window + 1)) if s != i]
        k = np.array([np.exp(-((i - s) ** 2) / (2.0 * sigma**2)) for s in nbrs])
        w = k / k.sum() if nbrs else k
        mat[i, nbrs] = w
        rows.append(tuple(zip(nbrs, w.tolist())))
    mat.setflags(write=False)
    return KernelWeights(size, window, sigma, tuple(rows), mat)


def smoothed_row(factor, i: int, weights: KernelWeights) -> np.ndarray:
    factor = np.asarray(factor, dtype=np.float64)
    if factor.shape[0] != weights.size:
        raise ValueError(f"factor has {factor.shape[0]} rows, weights built for {weights.size}")
    out = np.zeros(factor.shape[1])
    for s, w in weights.neighbors[i]:
        out += w * factor[s]
    return out


def _operators(factors, config):
    for n in config.smoothed_modes(len(factors)):
        kw = kernel_weights(factors[n].shape[0], config.window, config.sigma)
        yield n, kw.residual_operator()


def smoothness_penalty(factors, config: SmoothnessConfig) -> float:
    """Unscaled penalty (``lam`` not applied)."""
    total = 0.0
    for n, op in _operators(factors, config):
        total += float(np.sum((op @ factors[n]) ** 2))
    return total


def smoothness_gradient(factors, config: SmoothnessConfig) -> list:
    """Gradient of :func:`smoothness_penalty`, one array per factor."""
    grads = [np.zeros_like(f) for f in factors]
    for n, op in _operators(factors, config):
        grads[n] = 2.0 * op.T @ (op @ factors[n])
    return grads


class SmoothnessRegularizer:
    """Training hook adding ``lam * penalty`` to a CP model's objective."""

    def __init__(self, config: SmoothnessConfig):
        self.config = config

    @property
    def lam(self) -> float:
        return self.config.lam

    def _factors(self, model):
        if getattr(model, "family", None) != "cp":
            raise TypeError("smoothness regularization is defined for CP models only")
        return model.factors

    def penalty(self, model) -> float:
        return self.lam * smoothness_penalty(self._factors(model), self.config)

    def gradient(self, model) -> dict:
        grads = smoothness_gradient(self._factors(model), self.config)
        return {f"factor{n}": self.lam * g for n, g in enumerate(grads)}
