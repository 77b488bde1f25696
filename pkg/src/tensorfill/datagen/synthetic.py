"""Synthetic low-rank and smooth benchmark tensors."""
from __future__ import annotations

import numpy as np

from ..tensor import DenseTensor, check_shape

__all__ = ["generate_lowrank", "generate_smooth", "smooth_lipschitz_bounds", "cp_tensor"]


def cp_tensor(factors) -> np.ndarray:
    """Dense array ``sum_k prod_n A_n[:, k]`` from a list of factor matrices."""
    out = None
    for n, f in enumerate(factors):
        shp = [1] * len(factors) + [f.shape[1]]
        shp[n] = f.shape[0]
        term = f.reshape(shp)
        out = term if out is None else out * term
    return out.sum(axis=-1)


def generate_lowrank(shape, true_rank: int, noise: float = 0.0, seed: int = 0, name: str = "") -> DenseTensor:
    """Sum of ``true_rank`` random non-negative outer products plus noise.

    Factor entries are uniform on ``[0, 1)``. The noiseless part is divided
    by its maximum so it lies in ``[0, 1]`` without changing its rank
    (a min-max shift would add a constant, i.e. a rank-one term). Gaussian
    noise with standard deviation ``noise`` is added afterwards.
    """
    shape = check_shape(shape)
    if int(true_rank) < 1:
        raise ValueError(f"true_rank must be >= 1, got {true_rank}")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    factors = [rng.uniform(0.0, 1.0, size=(d, int(true_rank))) for d in shape]
    x = cp_tensor(factors)
    scale = float(x.max())
    x = x / scale
    if noise > 0:
        x = x + rng.normal(0.0, noise, size=shape)
    meta = {"generator": "lowrank", "true_rank": int(true_rank), "noise": float(noise),
            "seed": int(seed), "scale": scale}
    return DenseTensor(x, name=name or f"lowrank_r{true_rank}", meta=meta)


def _smooth_params(shape, seed, terms):
    rng = np.random.default_rng(seed)
    slopes = rng.uniform(0.5, 1.5, size=(terms, len(shape)))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=terms)
    return slopes, phases


def generate_smooth(shape, frequency: float = 1.0, seed: int = 0, terms: int = 3, name: str = "") -> DenseTensor:
    """Smooth grid tensor built from low-frequency plane waves.

    ``g(t) = mean_k sin(2 pi f sum_n a_kn t_n + phi_k)`` with ``t_n = i_n / I_n``,
    min-max scaled to ``[0, 1]``. ``frequency=0`` gives a constant tensor
    (all entries 0.5).
    """
    shape = check_shape(shape)
    if frequency < 0:
        raise ValueError("frequency must be >= 0")
    slopes, phases = _smooth_params(shape, seed, terms)
    grids = np.meshgrid(*[np.arange(d) / d for d in shape], indexing="ij")
    g = np.zeros(shape)
    for k in range(terms):
        arg = sum(slopes[k, n] * grids[n] for n in range(len(shape)))
        g += np.sin(2.0 * np.pi * frequency * arg + phases[k])
    g /= terms
    lo, hi = float(g.min()), float(g.max())
    if frequency == 0 or hi - lo < 1e-12:
        x = np.full(shape, 0.5)
    else:
        x = (g - lo) / (hi - lo)
    meta = {"generator": "smooth", "frequency": float(frequency), "seed": int(seed),
            "terms": int(terms), "min": lo, "max": hi}
    return DenseTensor(x, name=name or "smooth", meta=meta)


def smooth_lipschitz_bounds(tensor: DenseTensor) -> list:
    """Per-mode bound on ``|x[.., i, ..] - x[.., i+1, ..]|`` for a
    :func:`generate_smooth` tensor, from its recorded parameters.

    Each sine has derivative at most ``2 pi f a_kn`` in ``t_n``; a unit
    step in ``i_n`` moves ``t_n`` by ``1 / I_n``.
    """
    m = tensor.meta
    if m.get("generator") != "smooth":
        raise ValueError("tensor was not produced by generate_smooth")
    span = m["max"] - m["min"]
    if m["frequency"] == 0 or span < 1e-12:
        return [0.0] * tensor.order
    slopes, _ = _smooth_params(tensor.shape, m["seed"], m["terms"])
    out = []
    for n, d in enumerate(tensor.shape):
        raw = 2.0 * np.pi * m["frequency"] * slopes[:, n].mean() / d
        out.append(float(raw / span))
    return out
