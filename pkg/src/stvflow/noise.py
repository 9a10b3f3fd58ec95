"""Noise discretization: Wiener increments, mode interpolants, running sums.

The driving noise is a finite sum of spatial modes, each multiplied by an
independent scalar Wiener process.  Modes are interpolated once on the
macro mesh; since adaptation never coarsens below the macro triangulation
the interpolants are exactly representable on every adapted mesh, and the
running noise accumulator transfers without loss.

Per-path randomness comes from a counter-based Philox stream keyed by
(base seed, path index), so paths are reproducible independently of
execution order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fem import FeFunction, FemError, transfer
from .mesh import Mesh

__all__ = [
    "NoiseMode",
    "NoiseModel",
    "NoiseError",
    "path_rng",
    "wiener_increments",
    "sigma_h",
    "accumulate",
    "g_perturbation",
]


class NoiseError(Exception):
    """Raised for invalid noise parameters."""


@dataclass(frozen=True)
class NoiseMode:
    """One spatial noise mode with analytic point evaluation.

    value(t, points) returns the field at time t on (n, 2) points;
    grad(t, points) returns the spatial gradient, shape (n, 2).  The
    gradient is needed by the H1-type noise indicator.
    """

    value: Callable[[float, np.ndarray], np.ndarray]
    grad: Callable[[float, np.ndarray], np.ndarray]
    label: str = "mode"


def _sine_mode(kx: int, ky: int) -> NoiseMode:
    wx, wy = kx * np.pi, ky * np.pi

    def value(t: float, p: np.ndarray) -> np.ndarray:
        return np.sin(wx * p[:, 0]) * np.sin(wy * p[:, 1])

    def grad(t: float, p: np.ndarray) -> np.ndarray:
        out = np.empty_like(p)
        out[:, 0] = wx * np.cos(wx * p[:, 0]) * np.sin(wy * p[:, 1])
        out[:, 1] = wy * np.sin(wx * p[:, 0]) * np.cos(wy * p[:, 1])
        return out

    return NoiseMode(value, grad, label=f"sin{kx}x_sin{ky}y")


@dataclass(frozen=True)
class NoiseModel:
    """Amplitude-scaled collection of modes, one Wiener driver per mode."""

    modes: tuple = ()
    amplitude: float = 0.0
    time_constant: bool = True

    def __post_init__(self):
        if self.amplitude < 0:
            raise NoiseError("amplitude must be non-negative")

    @property
    def n_drivers(self) -> int:
        return len(self.modes)

    @classmethod
    def preset(cls, name: str, amplitude: float) -> "NoiseModel":
        if name == "sine-modes":
            return cls(modes=(_sine_mode(4, 4), _sine_mode(5, 5)), amplitude=amplitude)
        if name == "none":
            return cls(modes=(), amplitude=0.0)
        raise NoiseError(f"unknown noise preset {name!r}")


def path_rng(base_seed: int, path_index: int) -> np.random.Generator:
    """Independent reproducible stream for one sample path."""
    ss = np.random.SeedSequence([int(base_seed), int(path_index)])
    return np.random.Generator(np.random.Philox(ss))


def wiener_increments(rng: np.random.Generator, tau: float, n_drivers: int) -> np.ndarray:
    """One N(0, tau) increment per driver."""
    if tau <= 0:
        raise NoiseError("tau must be positive")
    return rng.normal(0.0, np.sqrt(tau), size=n_drivers)


def sigma_h(model: NoiseModel, macro: Mesh, t: float = 0.0) -> list:
    """Nodal interpolants of the amplitude-scaled modes on the macro mesh.

    The amplitude multiplies after interpolation.  Results are cached on
    the mesh for time-constant models.
    """
    if macro.generation != 0:
        raise NoiseError("mode interpolants live on the macro mesh")
    key = ("sigma_h", id(model))
    if model.time_constant:
        cached = macro._cache.get(key)
        if cached is not None:
            return cached
    out = []
    for mode in model.modes:
        vals = model.amplitude * np.asarray(mode.value(t, macro.coords))
        vals[macro.boundary_vertex] = 0.0  # zero trace holds exactly, not just to rounding
        out.append(FeFunction(macro, vals))
    if model.time_constant:
        macro._cache[key] = out
    return out


def accumulate(prev: FeFunction | None, modes_on_mesh: list, dW: np.ndarray, mesh: Mesh) -> FeFunction:
    """Advance the running noise sum by sigma_h . dW on the given mesh.

    prev may live on an earlier mesh; because the sum lies in the macro
    space the transfer is lossless.
    """
    if len(modes_on_mesh) != len(dW):
        raise NoiseError("one increment per mode required")
    if prev is None:
        vals = np.zeros(mesh.nv)
    else:
        vals = transfer(prev, mesh).values
    for f, inc in zip(modes_on_mesh, dW):
        if f.mesh is not mesh:
            raise FemError("mode interpolant lives on a different mesh")
        vals = vals + inc * f.values
    return FeFunction(mesh, vals)


def g_perturbation(rng: np.random.Generator, macro: Mesh, amplitude: float = 0.1) -> FeFunction:
    """Uniform nodal perturbation on the macro mesh, zero on the boundary.

    Draws amplitude * U(-1, 1) at every macro vertex (boundary included,
    to keep the stream layout independent of the mesh boundary), then
    zeroes the boundary values so the perturbed obstacle keeps a zero
    trace.
    """
    if macro.generation != 0:
        raise NoiseError("perturbation is drawn on the macro mesh")
    if amplitude < 0:
        raise NoiseError("amplitude must be non-negative")
    vals = amplitude * rng.uniform(-1.0, 1.0, size=macro.nv)
    vals[macro.boundary_vertex] = 0.0
    return FeFunction(macro, vals)

