"""Completion model families: CP, Tucker, tensor train and a CoSTCo-style
neural model.

Every model exposes the same small surface:

* ``predict(indices)`` -- batched per-entry predictions, ``(M, N) -> (M,)``
* ``gradient(indices, upstream)`` -- gradient of ``sum_m upstream[m] *
  predict(indices)[m]`` with respect to every parameter, accumulated over
  the batch and returned as a dict keyed like ``params``
* ``reconstruct()`` -- the full dense tensor

Parameters live in ``model.params`` (an ordered dict of float64 arrays) and
are updated in place by the optimizer.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .sptn import atomic_write_text, format_value, parse_value
from .tensor import (
    DenseTensor,
    IndexOutOfBoundsError,
    ShapeError,
    all_indices,
    check_shape,
)

__all__ = [
    "ModelInit",
    "CompletionModel",
    "CPModel",
    "TuckerModel",
    "TTModel",
    "NeuralModel",
    "FAMILIES",
    "init_model",
    "save_model",
    "load_model",
    "dumps_model",
    "loads_model",
]


def _einsum(spec, *ops):
    # no BLAS dispatch: per-row results must not depend on batch size
    return np.einsum(spec, *ops, optimize=False)


@dataclass(frozen=True)
class ModelInit:
    """Seeded i.i.d. uniform initialization.

    ``"uniform-positive"`` draws from ``[0, scale]``, ``"uniform-symmetric"``
    from ``[-scale, scale]``. The positive default avoids the sign traps a
    masked CP fit of non-negative data falls into from mixed-sign starts.
    """

    seed: int = 0
    scale: float = 0.5
    distribution: str = "uniform-positive"

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError(f"init scale must be >= 0, got {self.scale}")
        if self.distribution not in ("uniform-positive", "uniform-symmetric"):
            raise ValueError(f"unsupported init distribution {self.distribution!r}")

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        low = 0.0 if self.distribution == "uniform-positive" else -1.0
        return rng.uniform(low, 1.0, size=size) * self.scale


class CompletionModel:
    """Shared plumbing for all model families."""

    family = ""

    def __init__(self, shape, params: dict, seed: int | None = None):
        self.shape = check_shape(shape)
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.seed = seed
        self._validate()

    # subclasses
    def _validate(self):
        pass

    def config(self) -> dict:
        raise NotImplementedError

    def predict(self, indices) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, indices, upstream) -> dict:
        raise NotImplementedError

    @classmethod
    def param_shapes(cls, shape, **config) -> dict:
        raise NotImplementedError

    # shared
    def _indices(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim == 1:
            idx = idx.reshape(1, -1)
        if idx.ndim != 2 or idx.shape[1] != len(self.shape):
            raise ShapeError(f"indices must have shape (M, {len(self.shape)}), got {idx.shape}")
        if idx.size and (np.any(idx < 0) or np.any(idx >= np.asarray(self.shape))):
            raise IndexOutOfBoundsError(f"index out of bounds for shape {self.shape}")
        return idx

    def _upstream(self, upstream, m) -> np.ndarray:
        u = np.asarray(upstream, dtype=np.float64)
        return np.broadcast_to(u, (m,)) if u.ndim == 0 else u.reshape(m)

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def predict_entry(self, index) -> float:
        return float(self.predict(np.asarray(index, dtype=np.int64).reshape(1, -1))[0])

    def entry_gradient(self, index, upstream: float = 1.0) -> dict:
        return self.gradient(np.asarray(index, dtype=np.int64).reshape(1, -1), [upstream])

    def reconstruct(self, shape=None) -> DenseTensor:
        if shape is not None and tuple(shape) != self.shape:
            raise ShapeError(f"model shape {self.shape} does not match requested {tuple(shape)}")
        return DenseTensor(self.predict(all_indices(self.shape)).reshape(self.shape))

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def get_flat(self) -> np.ndarray:
        return np.concatenate([v.reshape(-1) for v in self.params.values()])

    def set_flat(self, vec) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_params:
            raise ShapeError(f"expected {self.n_params} values, got {vec.size}")
        pos = 0
        for k, v in self.params.items():
            v[...] = vec[pos:pos + v.size].reshape(v.shape)
            pos += v.size

    def flat_gradient(self, grads: dict) -> np.ndarray:
        return np.concatenate([grads[k].reshape(-1) for k in self.params])

    def copy(self):
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.params = {k: v.copy() for k, v in self.params.items()}
        return new

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape}, {self.config()})"


class CPModel(CompletionModel):
    """Rank-``R`` canonical polyadic model: ``x[i] = sum_k prod_n A_n[i_n, k]``."""

    family = "cp"

    @classmethod
    def param_shapes(cls, shape, rank):
        if int(rank) < 1:
            raise ValueError(f"CP rank must be >= 1, got {rank}")
        return {f"factor{n}": (d, int(rank)) for n, d in enumerate(shape)}

    def _validate(self):
        expected = self.param_shapes(self.shape, self.rank)
        for k, s in expected.items():
            if self.params[k].shape != s:
                raise ShapeError(f"{k} has shape {self.params[k].shape}, expected {s}")

    @property
    def rank(self) -> int:
        return self.params["factor0"].shape[1]

    @property
    def factors(self) -> list:
        return [self.params[f"factor{n}"] for n in range(len(self.shape))]

    def config(self):
        return {"rank": self.rank}

    def predict(self, indices):
        idx = self._indices(indices)
        prod = self.factors[0][idx[:, 0]].copy()
        for n in range(1, len(self.shape)):
            prod *= self.factors[n][idx[:, n]]
        return prod.sum(axis=1)

    def gradient(self, indices, upstream):
        idx = self._indices(indices)
        u = self._upstream(upstream, idx.shape[0])
        rows = [f[idx[:, n]] for n, f in enumerate(self.factors)]
        n_modes = len(rows)
        # leave-one-out products without division
        left = [np.ones_like(rows[0])]
        for n in range(n_modes - 1):
            left.append(left[-1] * rows[n])
        right = np.ones_like(rows[0])
        grads = self.zero_grads()
        for n in reversed(range(n_modes)):
            np.add.at(grads[f"factor{n}"], idx[:, n], (left[n] * right) * u[:, None])
            right = right * rows[n]
        return grads


class TuckerModel(CompletionModel):
    """Tucker model: a dense core multiplied by one factor matrix per mode."""

    family = "tucker"

    @classmethod
    def param_shapes(cls, shape, ranks):
        ranks = _per_mode(ranks, len(shape), "Tucker")
        out = {"core": tuple(ranks)}
        out.update({f"factor{n}": (d, r) for n, (d, r) in enumerate(zip(shape, ranks))})
        return out

    def _validate(self):
        expected = self.param_shapes(self.shape, self.ranks)
        for k, s in expected.items():
            if self.params[k].shape != s:
                raise ShapeError(f"{k} has shape {self.params[k].shape}, expected {s}")

    @property
    def ranks(self) -> list:
        return list(self.params["core"].shape)

    def config(self):
        return {"ranks": self.ranks}

    def _rows(self, idx):
        return [self.params[f"factor{n}"][idx[:, n]] for n in range(len(self.shape))]

    def _contract(self, rows, skip=None):
        """Contract the core with every row batch except mode ``skip``.

        Returns ``(M,)``, or ``(M, R_skip)`` when ``skip`` is given.
        """
        core = self.params["core"]
        modes = list(range(core.ndim))
        if skip is not None:
            core = np.moveaxis(core, skip, 0)
            modes = [skip] + [n for n in modes if n != skip]
        m = rows[0].shape[0]
        t = np.broadcast_to(core, (m,) + core.shape)
        stop = 1 if skip is not None else 0
        for pos in range(len(modes) - 1, stop - 1, -1):
            t = _einsum("m...r,mr->m...", t, rows[modes[pos]])
        return t

    def predict(self, indices):
        idx = self._indices(indices)
        return self._contract(self._rows(idx))

    def gradient(self, indices, upstream):
        idx = self._indices(indices)
        u = self._upstream(upstream, idx.shape[0])
        rows = self._rows(idx)
        grads = self.zero_grads()
        outer = rows[0] * u[:, None]
        for r in rows[1:]:
            outer = _einsum("ma,mb->mab", outer, r).reshape(outer.shape[0], -1)
        grads["core"] = outer.sum(axis=0).reshape(self.params["core"].shape)
        for n in range(len(self.shape)):
            g = self._contract(rows, skip=n) * u[:, None]
            np.add.at(grads[f"factor{n}"], idx[:, n], g)
        return grads


class TTModel(CompletionModel):
    """Tensor-train model with cores ``G_n`` of shape ``(r_{n-1}, I_n, r_n)``."""

    family = "tt"

    @classmethod
    def param_shapes(cls, shape, ranks):
        bonds = _tt_bonds(ranks, len(shape))
        return {f"core{n}": (bonds[n], d, bonds[n + 1]) for n, d in enumerate(shape)}

    def _validate(self):
        n_modes = len(self.shape)
        cores = [self.params[f"core{n}"] for n in range(n_modes)]
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ShapeError("boundary TT bond dimensions must be 1")
        for n in range(n_modes):
            if cores[n].ndim != 3 or cores[n].shape[1] != self.shape[n]:
                raise ShapeError(f"core{n} has shape {cores[n].shape}")
            if n and cores[n - 1].shape[2] != cores[n].shape[0]:
                raise ShapeError(f"bond mismatch between core{n - 1} and core{n}")

    @property
    def ranks(self) -> list:
        """Interior bond dimensions ``r_1 .. r_{N-1}``."""
        return [self.params[f"core{n}"].shape[2] for n in range(len(self.shape) - 1)]

    def config(self):
        return {"ranks": self.ranks}

    def _slices(self, idx):
        return [self.params[f"core{n}"][:, idx[:, n], :].transpose(1, 0, 2)
                for n in range(len(self.shape))]

    def predict(self, indices):
        idx = self._indices(indices)
        s = self._slices(idx)
        v = s[0][:, 0, :]
        for g in s[1:]:
            v = _einsum("ma,mab->mb", v, g)
        return v[:, 0].copy()

    def gradient(self, indices, upstream):
        idx = self._indices(indices)
        u = self._upstream(upstream, idx.shape[0])
        s = self._slices(idx)
        m, n_modes = idx.shape[0], len(s)
        lefts = [np.ones((m, 1))]
        for g in s[:-1]:
            lefts.append(_einsum("ma,mab->mb", lefts[-1], g))
        rights = [None] * n_modes
        rights[-1] = np.ones((m, 1))
        for n in range(n_modes - 2, -1, -1):
            rights[n] = _einsum("mab,mb->ma", s[n + 1], rights[n + 1])
        grads = self.zero_grads()
        for n in range(n_modes):
            g = lefts[n][:, :, None] * rights[n][:, None, :] * u[:, None, None]
            np.add.at(grads[f"core{n}"].transpose(1, 0, 2), idx[:, n], g)
        return grads


class NeuralModel(CompletionModel):
    """CoSTCo-style model: per-mode embeddings and a small convolutional head.

    The ``N`` embedding rows of an index form an ``N x R`` map. A ``1 x R``
    convolution lifts each row to ``C`` channels, an ``N x 1`` convolution
    aggregates across modes, and two dense layers produce the scalar.
    All hidden activations are rectifiers.
    """

    family = "neural"

    @classmethod
    def param_shapes(cls, shape, rank, channels=32, hidden=32):
        rank, channels, hidden = int(rank), int(channels), int(hidden)
        if min(rank, channels, hidden) < 1:
            raise ValueError("neural rank, channels and hidden width must be >= 1")
        n_modes = len(shape)
        out = {f"embed{n}": (d, rank) for n, d in enumerate(shape)}
        out.update({
            "conv1_w": (channels, rank),
            "conv1_b": (channels,),
            "conv2_w": (channels, n_modes, channels),
            "conv2_b": (channels,),
            "fc1_w": (channels, hidden),
            "fc1_b": (hidden,),
            "fc2_w": (hidden,),
            "fc2_b": (1,),
        })
        return out

    def _validate(self):
        expected = self.param_shapes(self.shape, **self.config())
        for k, s in expected.items():
            if self.params[k].shape != s:
                raise ShapeError(f"{k} has shape {self.params[k].shape}, expected {s}")

    def config(self):
        return {
            "rank": self.params["embed0"].shape[1],
            "channels": self.params["conv1_w"].shape[0],
            "hidden": self.params["fc1_w"].shape[1],
        }

    def _forward(self, idx):
        p = self.params
        h0 = np.stack([p[f"embed{n}"][idx[:, n]] for n in range(len(self.shape))], axis=1)
        z1 = _einsum("mnr,cr->mnc", h0, p["conv1_w"]) + p["conv1_b"]
        a1 = np.maximum(z1, 0.0)
        z2 = _einsum("mnc,dnc->md", a1, p["conv2_w"]) + p["conv2_b"]
        a2 = np.maximum(z2, 0.0)
        z3 = _einsum("mc,ch->mh", a2, p["fc1_w"]) + p["fc1_b"]
        a3 = np.maximum(z3, 0.0)
        y = _einsum("mh,h->m", a3, p["fc2_w"]) + p["fc2_b"][0]
        return y, (h0, z1, a1, z2, a2, z3, a3)

    def predict(self, indices):
        return self._forward(self._indices(indices))[0]

    def gradient(self, indices, upstream):
        idx = self._indices(indices)
        u = self._upstream(upstream, idx.shape[0])
        p = self.params
        _, (h0, z1, a1, z2, a2, z3, a3) = self._forward(idx)
        g = self.zero_grads()
        g["fc2_w"] = _einsum("m,mh->h", u, a3)
        g["fc2_b"] = np.array([u.sum()])
        d3 = u[:, None] * p["fc2_w"][None, :] * (z3 > 0)
        g["fc1_w"] = _einsum("mc,mh->ch", a2, d3)
        g["fc1_b"] = d3.sum(axis=0)
        d2 = _einsum("mh,ch->mc", d3, p["fc1_w"]) * (z2 > 0)
        g["conv2_w"] = _einsum("mnc,md->dnc", a1, d2)
        g["conv2_b"] = d2.sum(axis=0)
        d1 = _einsum("md,dnc->mnc", d2, p["conv2_w"]) * (z1 > 0)
        g["conv1_w"] = _einsum("mnc,mnr->cr", d1, h0)
        g["conv1_b"] = d1.sum(axis=(0, 1))
        dh0 = _einsum("mnc,cr->mnr", d1, p["conv1_w"])
        for n in range(len(self.shape)):
            np.add.at(g[f"embed{n}"], idx[:, n], dh0[:, n, :])
        return g


FAMILIES = {
    "cp": CPModel,
    "tucker": TuckerModel,
    "tt": TTModel,
    "neural": NeuralModel,
}
_ALIASES = {"cpd": "cp", "cpd-s": "cp", "cpds": "cp", "costco": "neural", "tensor-train": "tt"}


def _family(name: str) -> type:
    key = _ALIASES.get(name.lower(), name.lower())
    if key not in FAMILIES:
        raise ValueError(f"unknown model family {name!r}")
    return FAMILIES[key]


def _per_mode(ranks, n_modes, what):
    if np.isscalar(ranks):
        ranks = [int(ranks)] * n_modes
    ranks = [int(r) for r in ranks]
    if len(ranks) != n_modes:
        raise ValueError(f"{what} needs {n_modes} ranks, got {len(ranks)}")
    if any(r < 1 for r in ranks):
        raise ValueError(f"{what} ranks must be >= 1, got {ranks}")
    return ranks


def _tt_bonds(ranks, n_modes):
    """Full bond list ``[1, r_1, ..., r_{N-1}, 1]``."""
    if np.isscalar(ranks):
        inner = [int(ranks)] * (n_modes - 1)
    else:
        ranks = [int(r) for r in ranks]
        if len(ranks) == n_modes + 1:
            if ranks[0] != 1 or ranks[-1] != 1:
                raise ValueError(f"TT boundary bonds must be 1, got {ranks}")
            inner = ranks[1:-1]
        elif len(ranks) == n_modes - 1:
            inner = ranks
        else:
            raise ValueError(
                f"TT ranks for order {n_modes} need {n_modes - 1} interior or "
                f"{n_modes + 1} full bond dimensions, got {len(ranks)}"
            )
    if any(r < 1 for r in inner):
        raise ValueError(f"TT ranks must be >= 1, got {inner}")
    return [1] + inner + [1]


def init_model(family: str, shape, rank=None, init: ModelInit | None = None, **config) -> CompletionModel:
    """Build a model with i.i.d. uniform parameters drawn per ``init``.

    ``rank`` is an int for CP and neural models, an int or per-mode list
    for Tucker, and an int or bond list for TT. Extra keyword arguments
    (``channels``, ``hidden``) go to the neural head.

    >>> m = init_model("cp", (3, 4, 5), 5)
    >>> [f.shape for f in m.factors]
    [(3, 5), (4, 5), (5, 5)]
    """
    cls = _family(family)
    shape = check_shape(shape)
    init = init or ModelInit()
    if cls in (CPModel, NeuralModel):
        shapes = cls.param_shapes(shape, rank, **config)
    else:
        shapes = cls.param_shapes(shape, rank)
    rng = np.random.default_rng(init.seed)
    params = {k: init.draw(rng, s) for k, s in shapes.items()}
    return cls(shape, params, seed=init.seed)


def dumps_model(model: CompletionModel) -> str:
    header = {
        "family": model.family,
        "shape": list(model.shape),
        "config": model.config(),
        "seed": model.seed,
        "params": [[k, list(v.shape)] for k, v in model.params.items()],
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    lines.extend(format_value(v) for v in model.get_flat().tolist())
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> CompletionModel:
    lines = text.rstrip("\n").split("\n")
    header = json.loads(lines[0])
    cls = _family(header["family"])
    values = np.array([parse_value(x) for x in lines[1:]], dtype=np.float64)
    params, pos = {}, 0
    for name, shp in header["params"]:
        size = int(np.prod(shp, dtype=np.int64))
        params[name] = values[pos:pos + size].reshape(shp)
        pos += size
    if pos != values.size:
        raise ValueError(f"checkpoint has {values.size} values, header describes {pos}")
    return cls(header["shape"], params, seed=header["seed"])


def save_model(model: CompletionModel, path) -> None:
    atomic_write_text(path, dumps_model(model))


def load_model(path) -> CompletionModel:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
