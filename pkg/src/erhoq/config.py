"""Run configuration: a flat YAML mapping of scalar keys.

Example::

    n_sites: 5
    h0_J_z: 1.0
    h0_mu_x: 1.0
    h0_mu_z: 0.0
    h1_J_z: 1.0
    h1_mu_x: -1.0
    h1_mu_z: 0.0
    beta: 1.0
    delta_beta: 0.04
    n_initial: 5000
    seed: 0
    trotter_dt: 0.1
    t_max: 3.0

Further switches of the evolution Hamiltonian go in ``h1_switches`` as a list
of ``[t, J_z, mu_x, mu_z]`` rows.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import yaml

from ._util import is_whole_multiple
from .backend import ExecutionMode, NoiseModel
from .dmqmc import DEFAULT_MAX_POPULATION, DmqmcParams
from .errors import ConfigError
from .estimator import time_grid
from .spin_model import HamiltonianParams, Lattice, Schedule

REQUIRED = (
    "n_sites",
    "h0_J_z", "h0_mu_x", "h0_mu_z",
    "h1_J_z", "h1_mu_x", "h1_mu_z",
    "beta", "delta_beta", "n_initial", "trotter_dt",
)


@dataclass
class RunConfig:
    n_sites: int
    h0_J_z: float
    h0_mu_x: float
    h0_mu_z: float
    h1_J_z: float
    h1_mu_x: float
    h1_mu_z: float
    beta: float
    delta_beta: float
    n_initial: int
    trotter_dt: float
    seed: int = 0
    h1_switches: list | None = None
    n_blocks: int | None = None
    annihilation: bool = True
    max_population: int = DEFAULT_MAX_POPULATION
    t_max: float = 3.0
    grid_dt: float | None = None
    shots: int | None = None
    shot_seed: int | None = None
    per_psip: bool = False
    readout_flip: float = 0.0
    angle_bias: float = 0.0
    angle_bias_linear: float = 0.0
    bootstrap_resamples: int = 1000
    bootstrap_seed: int | None = None
    rescale: bool = False
    calibrate: bool = False
    reference: str = "exact"
    population_file: str = "population.txt"
    out: str = "results.csv"
    exact_out: str | None = None
    svg: str | None = None

    def __post_init__(self):
        if self.reference not in ("exact", "discretized"):
            raise ConfigError(f"reference must be 'exact' or 'discretized', got {self.reference!r}")
        spacing = self.grid_dt or self.trotter_dt
        if not is_whole_multiple(spacing, self.trotter_dt):
            raise ConfigError(f"grid spacing {spacing} is not a multiple of trotter_dt {self.trotter_dt}")
        try:
            self.lattice
            self.schedule
            self.dmqmc_params
            self.noise
            self.mode
            self.times
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def lattice(self) -> Lattice:
        return Lattice(self.n_sites)

    @property
    def h0(self) -> HamiltonianParams:
        return HamiltonianParams(self.h0_J_z, self.h0_mu_x, self.h0_mu_z)

    @property
    def schedule(self) -> Schedule:
        segments = [(0.0, HamiltonianParams(self.h1_J_z, self.h1_mu_x, self.h1_mu_z))]
        for row in self.h1_switches or []:
            t, j, mx, mz = (float(v) for v in row)
            segments.append((t, HamiltonianParams(j, mx, mz)))
        return Schedule(self.h0, tuple(segments))

    @property
    def dmqmc_params(self) -> DmqmcParams:
        return DmqmcParams(
            self.beta, self.delta_beta, self.n_initial, self.seed,
            n_blocks=self.n_blocks, annihilation=self.annihilation, max_population=self.max_population,
        )

    @property
    def noise(self) -> NoiseModel:
        return NoiseModel(self.readout_flip, self.angle_bias, self.angle_bias_linear)

    @property
    def mode(self) -> ExecutionMode:
        seed = self.seed if self.shot_seed is None else self.shot_seed
        return ExecutionMode(self.shots, seed)

    @property
    def times(self) -> tuple:
        return time_grid(self.t_max, self.grid_dt or self.trotter_dt)

    @property
    def resample_seed(self) -> int:
        return self.seed if self.bootstrap_seed is None else self.bootstrap_seed


_FIELD_NAMES = {f.name for f in fields(RunConfig)}


def config_from_mapping(data: dict, overrides: dict | None = None) -> RunConfig:
    data = dict(data or {})
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(data) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for key in REQUIRED:
        if key not in data:
            raise ConfigError(f"missing config key: {key}")
    try:
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config must be a key-value mapping")
    return config_from_mapping(data, overrides)
