"""Named problem setups shared by the CLI, the probes and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError
from .fem import CoefficientSet


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    constants: dict = field(default_factory=dict)
    tau: float = 0.5
    total_mass: float = 1.0
    # time-dependent source and flux for the evolution problem
    source: Callable | None = None
    flux: Callable | None = None

    def coefficients(self, **overrides) -> CoefficientSet:
        data = dict(self.constants)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return CoefficientSet(**data)


def _heat_source(t, x):
    return (1.0 + np.sin(3.0 * t)) * np.ones(len(x))


def _heat_flux(t, x, normal):
    return np.cos(t) * np.ones(len(x))


PRESETS = {
    p.name: p
    for p in (
        Preset(
            "laplacian-robin",
            "-Laplace u = 1, Robin flux 1 with beta = 1 on the terminal edges",
            {"alpha": 1.0, "lam": 0.0, "beta": 1.0, "f0": 1.0, "g": 1.0},
            source=lambda t, x: np.ones(len(x)),
            flux=lambda t, x, n: np.ones(len(x)),
        ),
        Preset(
            "laplacian-source",
            "-Laplace u = 1 with homogeneous Robin condition",
            {"alpha": 1.0, "beta": 1.0, "f0": 1.0, "g": 0.0},
        ),
        Preset(
            "convection-robin",
            "constant drift (1, 1/2) with reaction 1 and Robin flux 1",
            {"alpha": 1.0, "eta": (1.0, 0.5), "lam": 1.0, "beta": 1.0, "f0": 1.0, "g": 1.0},
        ),
        Preset(
            "anisotropic",
            "constant symmetric anisotropic diffusion, beta = 2",
            {"alpha": ((2.0, 0.5), (0.5, 1.0)), "beta": 2.0, "f0": 1.0, "g": 1.0},
        ),
        Preset(
            "heat",
            "heat flow with oscillating source 1 + sin 3t and flux cos t",
            {"alpha": 1.0, "beta": 1.0, "f0": 1.0, "g": 1.0},
            source=_heat_source,
            flux=_heat_flux,
        ),
    )
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
