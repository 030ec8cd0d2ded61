"""Numerical tolerances shared across modules.

The defaults are collected in one frozen record so that command-line runs can
override them and embed them in the configuration hash.
"""
from __future__ import annotations

from dataclasses import dataclass, replace, asdict


@dataclass(frozen=True)
class Tolerances:
    grid: float = 1e-10        # grid invariants and zero-mean membership
    real: float = 1e-8         # "real" flag on profiles
    tail: float = 1e-10        # relative value / spectral energy allowed at the grid edge
    resample: float = 1e-9     # round-trip error accepted by resample
    eigen: float = 1e-8        # eigenpair residual
    doubling: float = 1e-3     # |delta lambda| under grid doubling
    overlap: float = 0.5       # eigenvector overlap for branch tracking

    def updated(self, **kw) -> "Tolerances":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT_TOL = Tolerances()
