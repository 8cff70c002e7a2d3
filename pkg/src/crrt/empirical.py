"""Random vectors as finite weighted sample ensembles.

Every expectation is an exact weighted sum over the realizations, so the
error identities of the transform hold to machine precision on the
training ensemble. Realizations are stored column-wise: an ensemble of a
``d``-dimensional random vector with ``q`` outcomes is a ``d x q`` matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, MismatchedEnsembles

WEIGHT_TOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Weighted finite sample of a random vector.

    Parameters
    ----------
    data : array_like, shape (d, q)
        One realization per column. 1-D input is read as a scalar ensemble.
    weights : array_like, shape (q,), optional
        Probability of each outcome; uniform when omitted.
    label : str
    """

    data: np.ndarray
    weights: np.ndarray = None
    label: str = ""
    mean_removed: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2:
            raise InputError(f"ensemble data must be 2-D, got shape {data.shape}")
        d, q = data.shape
        if d < 1 or q < 1:
            raise InputError(f"ensemble needs d >= 1 and q >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InputError(f"ensemble {self.label!r} has non-finite entries")
        if self.weights is None:
            w = np.full(q, 1.0 / q)
        else:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.shape != (q,):
                raise InputError(f"expected {q} weights, got {w.shape[0]}")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise InputError("weights must be finite and nonnegative")
            if abs(w.sum() - 1.0) > WEIGHT_TOL:
                raise InputError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "weights", _frozen(w))
        if self.mean_removed is not None:
            object.__setattr__(self, "mean_removed", _frozen(self.mean_removed))

    @property
    def d(self) -> int:
        return self.data.shape[0]

    @property
    def q(self) -> int:
        return self.data.shape[1]

    def with_data(self, data, label=None) -> "Ensemble":
        """New ensemble on the same outcomes and weights."""
        return Ensemble(data, self.weights, self.label if label is None else label)

    def __sub__(self, other: "Ensemble") -> "Ensemble":
        check_compatible(self, other)
        return self.with_data(self.data - other.data, f"{self.label}-{other.label}")

    def __add__(self, other: "Ensemble") -> "Ensemble":
        check_compatible(self, other)
        return self.with_data(self.data + other.data, f"{self.label}+{other.label}")

    def permuted(self, order) -> "Ensemble":
        order = np.asarray(order)
        return Ensemble(self.data[:, order], self.weights[order], self.label)


def check_compatible(g: Ensemble, h: Ensemble) -> None:
    """Raise MismatchedEnsembles unless g and h live on the same outcomes."""
    if g.q != h.q:
        raise MismatchedEnsembles(
            f"ensembles {g.label!r} and {h.label!r} have {g.q} and {h.q} realizations"
        )
    if g.weights is not h.weights and not np.array_equal(g.weights, h.weights):
        raise MismatchedEnsembles(
            f"ensembles {g.label!r} and {h.label!r} carry different weights"
        )


def mean(g: Ensemble) -> np.ndarray:
    """E[g] = sum_j w_j g(:, j)."""
    return g.data @ g.weights


def raw_cross(g: Ensemble, h: Ensemble) -> np.ndarray:
    """Raw second moment E[g h^T], shape (d_g, d_h)."""
    check_compatible(g, h)
    return (g.data * g.weights) @ h.data.T


def centered_cross(g: Ensemble, h: Ensemble) -> np.ndarray:
    """Cross-covariance E[g h^T] - E[g] E[h]^T.

    Evaluated on mean-removed data, which is algebraically identical and
    avoids cancellation when the means dominate.
    """
    check_compatible(g, h)
    gc = g.data - mean(g)[:, None]
    if h is g:
        c = (gc * g.weights) @ gc.T
        return 0.5 * (c + c.T)
    hc = h.data - mean(h)[:, None]
    return (gc * g.weights) @ hc.T


def mse(g: Ensemble, h: Ensemble) -> float:
    """E[||g - h||^2]."""
    check_compatible(g, h)
    if g.d != h.d:
        raise MismatchedEnsembles(f"dimension {g.d} vs {h.d}")
    diff = g.data - h.data
    return float(np.sum(diff * diff, axis=0) @ g.weights)


def center(g: Ensemble) -> Ensemble:
    """Zero-mean copy of g; the removed mean is kept on ``mean_removed``."""
    mu = mean(g)
    return Ensemble(g.data - mu[:, None], g.weights, g.label, mean_removed=mu)


class MomentSet:
    """Lazily computed, cached moments of a family of labelled ensembles.

    All registered ensembles must share outcomes and weights.
    """

    def __init__(self, *ensembles: Ensemble):
        self._ens = {}
        self._mean = {}
        self._raw = {}
        self._centered = {}
        for e in ensembles:
            self.add(e)

    def add(self, e: Ensemble, label: str | None = None) -> None:
        label = e.label if label is None else label
        if not label:
            raise InputError("MomentSet entries need a label")
        for other in self._ens.values():
            check_compatible(e, other)
            break
        self._ens[label] = e

    def __getitem__(self, label) -> Ensemble:
        return self._ens[label]

    def __contains__(self, label) -> bool:
        return label in self._ens

    def mean_of(self, label) -> np.ndarray:
        if label not in self._mean:
            self._mean[label] = mean(self._ens[label])
        return self._mean[label]

    def raw_cross(self, a, b) -> np.ndarray:
        key = (a, b)
        if key not in self._raw:
            if (b, a) in self._raw:
                return self._raw[(b, a)].T
            self._raw[key] = raw_cross(self._ens[a], self._ens[b])
        return self._raw[key]

    def centered_cross(self, a, b) -> np.ndarray:
        key = (a, b)
        if key not in self._centered:
            if (b, a) in self._centered:
                return self._centered[(b, a)].T
            ga, gb = self._ens[a], self._ens[b]
            self._centered[key] = centered_cross(ga, ga if a == b else gb)
        return self._centered[key]
