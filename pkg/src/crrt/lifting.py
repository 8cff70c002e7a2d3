"""Lifting operators mapping the observation y into the views u_k."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .empirical import Ensemble, check_compatible
from .errors import InputError, UnresolvedReference


class LiftKind(enum.IntEnum):
    IDENTITY = 0
    HADAMARD_POWER = 1
    COSINE = 2
    EXTERNAL = 3
    RECURSIVE = 4


@dataclass(frozen=True)
class LiftSpec:
    """One lifting operator.

    ``param`` is the power or frequency for HADAMARD_POWER / COSINE;
    ``ref`` names the entry of the reference table resolved by
    :func:`apply_lift` for EXTERNAL (an ensemble or array of realizations)
    and RECURSIVE (a fitted model whose prediction is the view).
    """

    kind: LiftKind
    param: int = 0
    ref: str = ""

    def __post_init__(self):
        if self.kind in (LiftKind.HADAMARD_POWER, LiftKind.COSINE) and self.param < 1:
            raise InputError(f"{self.kind.name} lift needs param >= 1, got {self.param}")

    @classmethod
    def identity(cls):
        return cls(LiftKind.IDENTITY)

    @classmethod
    def power(cls, k):
        return cls(LiftKind.HADAMARD_POWER, int(k))

    @classmethod
    def cosine(cls, k):
        return cls(LiftKind.COSINE, int(k))

    @classmethod
    def external(cls, ref):
        return cls(LiftKind.EXTERNAL, ref=ref)

    @classmethod
    def parse(cls, text: str) -> "LiftSpec":
        """Parse ``identity``, ``power K`` or ``cos K``."""
        parts = text.replace(":", " ").split()
        if not parts:
            raise InputError("empty lift description")
        name = parts[0].lower()
        if name == "identity" and len(parts) == 1:
            return cls.identity()
        if name in ("power", "cos", "cosine") and len(parts) == 2:
            try:
                k = int(parts[1])
            except ValueError:
                raise InputError(f"lift parameter must be an integer: {text!r}") from None
            return cls.power(k) if name == "power" else cls.cosine(k)
        raise InputError(f"unknown lift {text!r} (expected identity, power K or cos K)")

    def __str__(self):
        if self.kind == LiftKind.IDENTITY:
            return "identity"
        if self.kind == LiftKind.HADAMARD_POWER:
            return f"power {self.param}"
        if self.kind == LiftKind.COSINE:
            return f"cos {self.param}"
        return f"{self.kind.name.lower()} {self.ref}"


def lift_array(spec: LiftSpec, y: np.ndarray, refs=None) -> np.ndarray:
    """Apply a lift to a raw ``(n, q)`` array of realizations."""
    if spec.kind == LiftKind.IDENTITY:
        return y
    if spec.kind == LiftKind.HADAMARD_POWER:
        return y**spec.param
    if spec.kind == LiftKind.COSINE:
        return np.cos(spec.param * y)
    if refs is None or spec.ref not in refs:
        raise UnresolvedReference(f"lift reference {spec.ref!r} is not available")
    target = refs[spec.ref]
    if spec.kind == LiftKind.EXTERNAL:
        return target.data if isinstance(target, Ensemble) else np.asarray(target, float)
    from .transform import predict

    return predict(target, y, refs)


def apply_lift(spec: LiftSpec, y: Ensemble, refs=None) -> Ensemble:
    """Lift an ensemble pointwise; reference lifts must match y's outcomes."""
    if spec.kind == LiftKind.EXTERNAL:
        target = (refs or {}).get(spec.ref)
        if target is None:
            raise UnresolvedReference(f"lift reference {spec.ref!r} is not available")
        if isinstance(target, Ensemble):
            check_compatible(y, target)
            return target
    out = lift_array(spec, y.data, refs)
    if out.shape[1] != y.q:
        raise InputError(f"lift {spec} produced {out.shape[1]} realizations, expected {y.q}")
    return y.with_data(out, f"{spec}({y.label})")


def build_recursive_lifts(x: Ensemble, y: Ensemble, p: int, mode="general",
                          return_models=False):
    """Recursive pre-estimates u_1 = y, u_j = estimate of x from u_1..u_{j-1}.

    Each estimate is the unconstrained optimal transform on the views built
    so far (whitened chain for ``mode="invertible"``, pseudo-inverse chain
    for ``mode="general"``).

    Returns the views; with ``return_models=True`` also the LiftSpecs and
    reference table that regenerate them from new observations.
    """
    from . import ortho, transform

    if p < 1:
        raise InputError("p must be at least 1")
    if mode not in ("invertible", "general"):
        raise InputError(f"mode must be 'invertible' or 'general', got {mode!r}")
    check_compatible(x, y)
    specs = [LiftSpec.identity()]
    refs = {}
    us = [y]
    for j in range(2, p + 1):
        if mode == "invertible":
            sys = ortho.orthonormalize(us)
        else:
            sys = ortho.orthogonalize(us)
        model = transform.fit(x, sys, None, lifts=list(specs))
        est = transform.predict_views(model, [u.data for u in us])
        name = f"x{j - 1}"
        refs[name] = model
        specs.append(LiftSpec(LiftKind.RECURSIVE, j - 1, name))
        us.append(y.with_data(est, name))
    if return_models:
        return us, specs, refs
    return us
