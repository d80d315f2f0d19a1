"""Thermal-state dynamics by density matrix Monte Carlo plus per-element quantum evolution."""

from .backend import Circuit, ExecutionMode, Gate, NoiseModel, execute, prepare_pure_state, trotter_circuit
from .dmqmc import DmqmcParams, Psip, PsipPopulation, init_population, run, step, trace_estimate
from .errors import (
    BranchMismatch,
    DimensionTooLarge,
    DivisionByZeroAtT0,
    NonDivisibleTime,
    PopulationExplosion,
    PopulationFileError,
    ZeroTrace,
)
from .estimator import (
    EvolutionJob,
    ObservableSeries,
    bootstrap,
    calibrate,
    expectation_series,
    psip_expectation,
    rescale_by_t0,
    time_grid,
)
from .spin_model import HamiltonianParams, Lattice, Schedule, SpinBasisState

__version__ = "0.1.0"
