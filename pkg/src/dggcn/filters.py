"""Distance-dependent filter ingredients: shifted softplus, cosine cutoff,
Gaussian radial basis expansion, and the fixed power-law edge weight.

Note on the cutoff: the formula is w = 0.5 * (cos(pi * d / d_cutoff) + 1),
which runs from 1 at d = 0 to 0 at d = d_cutoff and is clamped to 0 beyond.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ssp  # re-export: taped when given a Tensor  # noqa: F401
from .errors import ConfigError, GraphError


@dataclass(frozen=True)
class GaussianBasis:
    """Uniform grid of Gaussian centers on [0, d_cutoff].

    gamma defaults to 1 / (2 * spacing^2) so adjacent Gaussians overlap at
    about 0.88 of peak height.
    """

    num_gaussians: int
    d_cutoff: float
    gamma: float
    centers: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def create(cls, num_gaussians: int = 50, d_cutoff: float = 10.0,
               gamma: float | None = None) -> "GaussianBasis":
        if num_gaussians < 2:
            raise ConfigError(f"need at least 2 gaussians, got {num_gaussians}")
        if d_cutoff <= 0:
            raise ConfigError(f"d_cutoff must be positive, got {d_cutoff}")
        centers = np.linspace(0.0, d_cutoff, num_gaussians)
        if gamma is None:
            spacing = centers[1] - centers[0]
            gamma = 1.0 / (2.0 * spacing * spacing)
        if gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {gamma}")
        return cls(num_gaussians, float(d_cutoff), float(gamma), centers)

    def __post_init__(self):
        c = self.centers
        if c.shape != (self.num_gaussians,) or c[0] != 0.0 or c[-1] != self.d_cutoff:
            raise ConfigError("centers must span [0, d_cutoff]")
        if np.any(np.diff(c) <= 0):
            raise ConfigError("centers must be strictly increasing")

    def to_dict(self) -> dict:
        return {"num_gaussians": self.num_gaussians, "d_cutoff": self.d_cutoff,
                "gamma": self.gamma}

    @classmethod
    def from_dict(cls, obj: dict) -> "GaussianBasis":
        return cls.create(obj["num_gaussians"], obj["d_cutoff"], obj["gamma"])


def cutoff_weight(d, d_cutoff: float):
    """Cosine cutoff: 1 at d=0, 0 at d=d_cutoff, 0 beyond."""
    if d_cutoff <= 0:
        raise ConfigError(f"d_cutoff must be positive, got {d_cutoff}")
    d = np.asarray(d, dtype=np.float64)
    w = 0.5 * (np.cos(np.pi * d / d_cutoff) + 1.0)
    w = np.where(d > d_cutoff, 0.0, w)
    return w if w.shape else float(w)


def rbf_expand(d, basis: GaussianBasis) -> np.ndarray:
    """Expand distances in the Gaussian basis.

    Scalar d -> (num_gaussians,); array of shape (E,) -> (E, num_gaussians).
    """
    d = np.asarray(d, dtype=np.float64)
    diff = d[..., None] - basis.centers
    return np.exp(-basis.gamma * diff * diff)


def powerlaw_weight(d, r0: float, n: float):
    """Fixed geometric edge weight (r0 / d)^n, decaying with distance."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise GraphError("powerlaw_weight requires d > 0")
    w = (r0 / d) ** n
    return w if w.shape else float(w)
