"""Run configuration: every scalar and functional parameter of an experiment.

Functional parameters (noise modes, obstacle data) are named presets so a
configuration file stays a flat, serializable key-value document.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

__all__ = ["RunConfig", "ConfigError", "tolerance_level"]

_SCHEMES = ("si", "fix3", "fix")
_NOISE_PRESETS = ("sine-modes", "none")
_G_PRESETS = ("circle", "zero")

DEFAULT_SNAPSHOT_TIMES = (0.0, 0.0017, 0.0026, 0.0038, 0.05)


class ConfigError(Exception):
    """Raised for malformed or inconsistent run configurations."""


def tolerance_level(k: int) -> tuple[float, float]:
    """Tolerance pair (TOL_h, TOL_tau) at refinement level k: 2^-k * (2, 0.25)."""
    if k < 0:
        raise ConfigError("tolerance level must be >= 0")
    return (2.0 ** (-k) * 2.0, 2.0 ** (-k) * 0.25)


@dataclass
class RunConfig:
    """Parameters of one simulation campaign.

    The defaults reproduce the reference experiment: unit square, final
    time 0.05, fidelity weight 200, initial step 1e-5, regularization
    2^-5, noise amplitude 0.25, macro grid of 32 x 32 squares, two sine
    noise modes, circle obstacle with a uniform nodal perturbation.
    """

    T: float = 0.05
    lam: float = 200.0
    eps: float = 2.0 ** -5
    sigma_amp: float = 0.25
    tau0: float = 1e-5
    macro_n: int = 32
    tol_level: int = 0
    tol_h: float | None = None          # explicit override of the level pair
    tol_tau: float | None = None
    fp_tol: float = 1e-4
    scheme: str = "fix"
    paths: int = 10
    seed: int = 1
    snapshot_times: tuple = DEFAULT_SNAPSHOT_TIMES
    out_dir: str = "out"
    adaptive: bool = True
    noise_preset: str = "sine-modes"
    g_preset: str = "circle"
    g_noise_amp: float = 0.1
    tau_min: float = 1e-8
    tau_max: float | None = None        # defaults to T/10
    cg_tol: float = 1e-10
    fp_cap: int = 30

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (self.T > 0):
            raise ConfigError("T must be positive")
        if self.lam < 0:
            raise ConfigError("lam must be non-negative")
        if not (self.eps > 0):
            raise ConfigError("eps must be positive")
        if self.sigma_amp < 0:
            raise ConfigError("sigma_amp must be non-negative")
        if not (self.tau0 > 0):
            raise ConfigError("tau0 must be positive")
        if self.macro_n < 1:
            raise ConfigError("macro_n must be >= 1")
        if self.tol_level < 0:
            raise ConfigError("tol_level must be >= 0")
        if (self.tol_h is None) != (self.tol_tau is None):
            raise ConfigError("tol_h and tol_tau must be overridden together")
        if self.tol_h is not None and (self.tol_h <= 0 or self.tol_tau <= 0):
            raise ConfigError("explicit tolerances must be positive")
        if not (self.fp_tol > 0):
            raise ConfigError("fp_tol must be positive")
        if self.scheme not in _SCHEMES:
            raise ConfigError(f"scheme must be one of {_SCHEMES}")
        if self.paths < 1:
            raise ConfigError("paths must be >= 1")
        if self.noise_preset not in _NOISE_PRESETS:
            raise ConfigError(f"noise_preset must be one of {_NOISE_PRESETS}")
        if self.g_preset not in _G_PRESETS:
            raise ConfigError(f"g_preset must be one of {_G_PRESETS}")
        if self.g_noise_amp < 0:
            raise ConfigError("g_noise_amp must be non-negative")
        if not (self.tau_min > 0):
            raise ConfigError("tau_min must be positive")
        if self.tau_max is not None and self.tau_max < self.tau_min:
            raise ConfigError("tau_max must be >= tau_min")
        if not (0 < self.cg_tol < 1):
            raise ConfigError("cg_tol must lie in (0, 1)")
        if self.fp_cap < 1:
            raise ConfigError("fp_cap must be >= 1")
        if any(t < 0 or t > self.T for t in self.snapshot_times):
            raise ConfigError("snapshot times must lie in [0, T]")

    # -- derived values ----------------------------------------------------

    @property
    def tolerances(self) -> tuple[float, float]:
        if self.tol_h is not None:
            return (self.tol_h, self.tol_tau)
        return tolerance_level(self.tol_level)

    @property
    def tau_cap(self) -> float:
        return self.T / 10.0 if self.tau_max is None else self.tau_max

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["snapshot_times"] = list(self.snapshot_times)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "snapshot_times" in d:
            d["snapshot_times"] = tuple(d["snapshot_times"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config file must contain a JSON object")
        return cls.from_dict(d)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)
