"""Experiment configuration: one JSON document per run.

Every field has a default so that ``{}`` is a valid configuration. Unknown
keys are rejected rather than silently dropped.

Fields
------
kernel : dict
    ``{"name": <kernel>, ...params}`` with the parameters accepted by
    :func:`superres.kernels.make_kernel`. Default ``{"name": "gaussian2d"}``.
spikes : dict
    ``{"positions": [[...], ...] | null, "amplitudes": [...] | null}``.
    ``null`` positions select a kernel-specific preset geometry
    (:data:`DEFAULT_SPIKES`); ``null`` amplitudes mean all ones.
t : float
    Scale of the cluster, spikes sit at ``z0 + t (Z - z0)``. Default 1.
lambda : float
    Regularization for a single solve. Default 1e-3.
lambdas : list of float or null
    Optional schedule for a lambda path (decreasing). Default null.
t_list : list of float
    Scales for convergence studies and sweeps.
seed : int
    Seed of the noise measure. Default 0.
grid : int
    Points per axis of evaluation grids. Default 128.
out : str
    Output directory. Default ``"out"``.
nonneg : bool
    Restrict amplitudes to be non-negative. Default false.
max_iters : int
    Frank-Wolfe iteration cap. Default 40.
noise_ratio : float or null
    If set, the noise is scaled so that ``||w|| = noise_ratio * lambda``;
    otherwise ``y = Phi m0 + lambda w``. Default null.
sweep_c : float
    Constant in ``lambda = c t^4`` for the two-spike sweep. Default 0.1.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .kernels import KERNELS


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


# preset geometries, given in the unscaled frame
DEFAULT_SPIKES = {
    "gaussian2d": [[0.1, -0.2], [0.5, 0.6]],
    "lowpass_torus": [[0.0], [0.1]],
    "gmixture1d": [[0.0, 2.0], [0.1, 2.2]],
    "neuro_disc": [[0.37, 0.28], [0.435, 0.29]],
}

DEFAULT_T_LIST = [1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01]


@dataclass
class ExperimentConfig:
    kernel: dict = field(default_factory=lambda: {"name": "gaussian2d"})
    spikes: dict = field(default_factory=lambda: {"positions": None, "amplitudes": None})
    t: float = 1.0
    lam: float = 1e-3
    lambdas: list | None = None
    t_list: list = field(default_factory=lambda: list(DEFAULT_T_LIST))
    seed: int = 0
    grid: int = 128
    out: str = "out"
    nonneg: bool = False
    max_iters: int = 40
    noise_ratio: float | None = None
    sweep_c: float = 0.1

    # JSON uses "lambda"; the attribute cannot
    _renames = {"lam": "lambda"}

    def __post_init__(self):
        self.validate()

    # -- validation ----------------------------------------------------------
    def validate(self):
        if not isinstance(self.kernel, dict) or "name" not in self.kernel:
            raise ConfigError("kernel must be an object with a 'name'")
        if self.kernel["name"] not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel['name']!r}; choose from {sorted(KERNELS)}")
        if not isinstance(self.spikes, dict) or set(self.spikes) - {"positions", "amplitudes"}:
            raise ConfigError("spikes must be an object with 'positions' and 'amplitudes'")
        self.spikes.setdefault("positions", None)
        self.spikes.setdefault("amplitudes", None)
        pos, amp = self.spikes["positions"], self.spikes["amplitudes"]
        if pos is not None:
            P = np.asarray(pos, dtype=float)
            if P.ndim != 2 or len(P) == 0 or not np.all(np.isfinite(P)):
                raise ConfigError("spike positions must be a non-empty list of points")
            if amp is not None and len(amp) != len(P):
                raise ConfigError("need one amplitude per spike")
        if not self.t > 0:
            raise ConfigError("t must be positive")
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if self.lambdas is not None and (len(self.lambdas) == 0 or min(self.lambdas) <= 0):
            raise ConfigError("lambdas must be a non-empty list of positive values")
        if len(self.t_list) == 0 or min(self.t_list) <= 0:
            raise ConfigError("t_list must be a non-empty list of positive values")
        if int(self.grid) != self.grid or self.grid < 4:
            raise ConfigError("grid must be an integer >= 4")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError("max_iters must be a positive integer")
        if self.noise_ratio is not None and self.noise_ratio < 0:
            raise ConfigError("noise_ratio must be non-negative")
        if not self.sweep_c > 0:
            raise ConfigError("sweep_c must be positive")

    # -- derived -------------------------------------------------------------
    @property
    def kernel_name(self) -> str:
        return self.kernel["name"]

    @property
    def kernel_params(self) -> dict:
        return {k: v for k, v in self.kernel.items() if k != "name"}

    def make_kernel(self):
        from .kernels import make_kernel

        try:
            return make_kernel(self.kernel_name, **self.kernel_params)
        except TypeError as err:
            raise ConfigError(f"bad parameters for {self.kernel_name}: {err}") from None

    def positions(self) -> np.ndarray:
        pos = self.spikes["positions"]
        if pos is None:
            pos = DEFAULT_SPIKES[self.kernel_name]
        return np.asarray(pos, dtype=float)

    def amplitudes(self) -> np.ndarray:
        amp = self.spikes["amplitudes"]
        return np.ones(len(self.positions())) if amp is None else np.asarray(amp, dtype=float)

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        for attr, key in self._renames.items():
            d[key] = d.pop(attr)
        return d

    def to_json(self, indent=2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        data = copy.deepcopy(data)
        inverse = {v: k for k, v in cls._renames.items()}
        names = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            attr = inverse.get(key, key)
            if attr not in names or key in cls._renames:
                raise ConfigError(f"unknown configuration key {key!r}")
            kwargs[attr] = value
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(str(err)) from None

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"malformed JSON: {err}") from None
        return cls.from_dict(data)

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        for attr, value in changes.items():
            d[self._renames.get(attr, attr)] = value
        return ExperimentConfig.from_dict(d)


def load_spikes(text: str) -> dict:
    """Parse a spikes file: a list of points or ``{"positions", "amplitudes"}``."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"malformed spikes JSON: {err}") from None
    if isinstance(data, list):
        data = {"positions": data, "amplitudes": None}
    if not isinstance(data, dict) or "positions" not in data:
        raise ConfigError("spikes file must be a list of points or an object with 'positions'")
    extra = set(data) - {"positions", "amplitudes"}
    if extra:
        raise ConfigError(f"unknown keys in spikes file: {sorted(extra)}")
    return {"positions": data["positions"], "amplitudes": data.get("amplitudes")}
