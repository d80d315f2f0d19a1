"""Thermal expectation values from a psip population and per-psip quantum programs.

Each distinct population entry |b><a| is hermitised and evaluated as pure
states: a diagonal entry needs one program (prepare |a>), an off-diagonal one
needs two, for u = (|a> + |b>)/sqrt(2) and v = (|a> - |b>)/sqrt(2). Its
contribution per unit weight is

    (<u|O(t)|u> - <v|O(t)|v>) / 2  =  Re <a|O(t)|b>

and the estimate is the weighted sum divided by the population trace.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field, replace

import numpy as np

from ._util import is_whole_multiple, parallel_map
from .backend import (
    NOISELESS,
    ExecutionMode,
    NoiseModel,
    exact_mx,
    histogram_mean,
    prepare_pure_state,
    sample_mx_histograms,
    schedule_circuit,
    simulate,
)
from .dmqmc import PsipPopulation, format_population, trace_estimate
from .errors import DivisionByZeroAtT0, NonDivisibleTime
from .oracle import dense_hamiltonian, exact_observable, magnetization_x, thermal_state, trotterized_observable
from .spin_model import HamiltonianParams, Lattice, Schedule, SpinBasisState

_STATE_BUDGET = 1 << 22  # amplitudes per simulation chunk


def time_grid(t_max: float, spacing: float) -> tuple:
    """0, spacing, 2*spacing, ..., t_max."""
    if spacing <= 0 or t_max < 0:
        raise ValueError("need spacing > 0 and t_max >= 0")
    if not is_whole_multiple(t_max, spacing):
        raise NonDivisibleTime(f"t_max={t_max} is not a multiple of grid spacing {spacing}")
    k = int(round(t_max / spacing))
    return tuple(round(i * spacing, 12) for i in range(k + 1))


@dataclass(frozen=True)
class EvolutionJob:
    population: PsipPopulation
    schedule: Schedule
    times: tuple
    trotter_dt: float
    noise: NoiseModel = NOISELESS
    mode: ExecutionMode = ExecutionMode()
    per_psip: bool = False
    threads: int | None = None

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times:
            raise ValueError("time grid is empty")
        if times[0] < 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("time grid must be nonnegative and increasing")
        if self.trotter_dt <= 0:
            raise ValueError("trotter_dt must be positive")
        for t in times + tuple(s for s, _ in self.schedule.segments):
            if not is_whole_multiple(t, self.trotter_dt):
                raise NonDivisibleTime(f"t={t} is not a whole number of Trotter steps of {self.trotter_dt}")
        object.__setattr__(self, "times", times)

    @property
    def lattice(self) -> Lattice:
        return Lattice(self.population.n)


@dataclass
class ObservableSeries:
    t: np.ndarray
    m_x: np.ndarray
    stat_err: np.ndarray
    sys_err: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.m_x = np.asarray(self.m_x, dtype=float)
        self.stat_err = np.broadcast_to(np.asarray(self.stat_err, dtype=float), self.t.shape).copy()
        self.sys_err = np.broadcast_to(np.asarray(self.sys_err, dtype=float), self.t.shape).copy()
        if self.m_x.shape != self.t.shape:
            raise ValueError("series length does not match its time grid")
        if np.any(self.stat_err < 0) or np.any(self.sys_err < 0):
            raise ValueError("errors must be nonnegative")

    def __len__(self):
        return len(self.t)

    @property
    def total_err(self) -> np.ndarray:
        return np.hypot(self.stat_err, self.sys_err)

    def to_csv(self) -> str:
        out = io.StringIO()
        for key in sorted(self.meta):
            out.write(f"# {key}: {self.meta[key]}\n")
        out.write("t,m_x,stat_err,sys_err\n")
        for row in zip(self.t, self.m_x, self.stat_err, self.sys_err):
            out.write(",".join(repr(float(v)) for v in row) + "\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ObservableSeries":
        meta, rows = {}, []
        lines = iter(text.splitlines())
        for line in lines:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            elif line.strip():
                if line.strip() != "t,m_x,stat_err,sys_err":
                    raise ValueError(f"unexpected CSV header {line!r}")
                break
        for line in lines:
            if line.strip():
                rows.append([float(v) for v in line.split(",")])
        data = np.array(rows, dtype=float).reshape(-1, 4)
        return cls(data[:, 0], data[:, 1], data[:, 2], data[:, 3], meta)


@dataclass
class KeyEvaluation:
    """Backend results for every distinct population entry.

    ``state_key``/``state_coeff`` map each executed program onto its entry;
    ``state_values`` holds per-time m_x estimates and, in shot mode,
    ``state_hist`` the raw shot histograms.
    """

    keys: np.ndarray  # (K, 2): row, col
    times: tuple
    state_key: np.ndarray
    state_coeff: np.ndarray
    state_values: np.ndarray  # (S, T)
    state_hist: np.ndarray | None = None  # (S, T, n + 1)

    @property
    def key_values(self) -> np.ndarray:
        """Per-entry contribution per unit weight, shape ``(K, T)``."""
        return key_values_from_states(self.state_values, self.state_key, self.state_coeff, len(self.keys))


def key_values_from_states(values, state_key, state_coeff, n_keys):
    out = np.zeros((n_keys,) + values.shape[1:])
    np.add.at(out, state_key, state_coeff.reshape((-1,) + (1,) * (values.ndim - 1)) * values)
    return out


def _programs(keys, n):
    """One (key index, coefficient, prep circuit) per program to run."""
    programs = []
    for k, (row, col) in enumerate(keys.tolist()):
        a, b = SpinBasisState(col, n), SpinBasisState(row, n)
        if row == col:
            programs.append((k, 1.0, prepare_pure_state(a, b, "diagonal")))
        else:
            programs.append((k, 0.5, prepare_pure_state(a, b, "u")))
            programs.append((k, -0.5, prepare_pure_state(a, b, "v")))
    return programs


def evaluate_keys(job: EvolutionJob, times=None) -> KeyEvaluation:
    """Run every program of the population through the backend on a time grid.

    States are evolved incrementally between grid points, so the program for
    time t_k is the prep circuit followed by the Trotter circuit up to t_k.
    """
    times = job.times if times is None else tuple(float(t) for t in times)
    pop, n, lat = job.population, job.population.n, job.lattice
    keys = np.unique(np.stack([pop.row, pop.col], axis=1), axis=0)
    programs = _programs(keys, n)
    state_key = np.array([p[0] for p in programs], dtype=np.int64)
    state_coeff = np.array([p[1] for p in programs])

    shots = None
    if not job.mode.exact:
        shots = np.full(len(programs), job.mode.shots, dtype=np.int64)
        if job.per_psip:
            net = pop.weights
            size = np.array([abs(net.get((r, c), 0)) for r, c in keys.tolist()], dtype=np.int64)
            shots = shots * np.maximum(size[state_key], 1)

    segments = []
    previous = 0.0
    for t in times:
        segments.append(schedule_circuit(job.schedule, lat, previous, t, job.trotter_dt))
        previous = t

    chunk = max(1, _STATE_BUDGET >> n)
    spans = [(i, min(i + chunk, len(programs))) for i in range(0, len(programs), chunk)]

    def work(index_span):
        index, (lo, hi) = index_span
        states = np.concatenate([simulate(p[2], job.noise) for p in programs[lo:hi]])
        values = np.empty((hi - lo, len(times)))
        hists = None if shots is None else np.empty((hi - lo, len(times), n + 1), dtype=np.int64)
        for k, circuit in enumerate(segments):
            states = simulate(circuit, job.noise, states)
            if shots is None:
                values[:, k] = exact_mx(states, n, job.noise.readout_flip)
            else:
                rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([job.mode.seed, index, k])))
                hists[:, k] = sample_mx_histograms(states, n, shots[lo:hi], job.noise.readout_flip, rng)
                values[:, k] = histogram_mean(hists[:, k])
        return values, hists

    results = parallel_map(work, list(enumerate(spans)), job.threads)
    values = np.concatenate([r[0] for r in results])
    hist = None if shots is None else np.concatenate([r[1] for r in results])
    return KeyEvaluation(keys, times, state_key, state_coeff, values, hist)


def _entry_key_index(pop: PsipPopulation, keys: np.ndarray) -> np.ndarray:
    n = pop.n
    code = (keys[:, 0] << n) | keys[:, 1]
    return np.searchsorted(code, (pop.row << n) | pop.col)


def _block_sums(pop: PsipPopulation, evaluation: KeyEvaluation):
    """Per-block numerators ``(B, T)`` and traces ``(B,)``."""
    idx = _entry_key_index(pop, evaluation.keys)
    contrib = pop.weight[:, None] * evaluation.key_values[idx]
    blocks = max(pop.n_blocks, int(pop.block.max()) + 1 if len(pop) else 1)
    num = np.zeros((blocks, contrib.shape[1]))
    np.add.at(num, pop.block, contrib)
    diagonal = pop.row == pop.col
    trace = np.bincount(pop.block[diagonal], weights=pop.weight[diagonal], minlength=blocks)
    return num, trace


def _estimate(pop, evaluation):
    trace = trace_estimate(pop)
    num, _ = _block_sums(pop, evaluation)
    return num.sum(axis=0) / trace


def psip_expectation(job: EvolutionJob, t: float, evaluation: KeyEvaluation | None = None) -> float:
    trace_estimate(job.population)
    if evaluation is None or t not in evaluation.times:
        evaluation = evaluate_keys(job, times=(t,))
    k = evaluation.times.index(t)
    return float(_estimate(job.population, evaluation)[k])


def _meta(job: EvolutionJob) -> dict:
    pop = job.population
    return {
        "population_sha256": hashlib.sha256(format_population(pop).encode()).hexdigest(),
        "psips": pop.total_weight,
        "trace": int(trace_estimate(pop)),
        "dmqmc_seed": pop.seed,
        "beta": pop.beta,
        "n_blocks": pop.n_blocks,
        "trotter_dt": job.trotter_dt,
        "shots": "exact" if job.mode.exact else job.mode.shots,
        "shot_seed": job.mode.seed,
        "per_psip": job.per_psip,
        "readout_flip": job.noise.readout_flip,
        "angle_bias": job.noise.angle_bias,
        "angle_bias_linear": job.noise.angle_bias_linear,
    }


def expectation_series(job: EvolutionJob, evaluation: KeyEvaluation | None = None) -> ObservableSeries:
    """Point estimates on the whole grid from one fixed population (no error bars)."""
    if evaluation is None:
        evaluation = evaluate_keys(job)
    values = _estimate(job.population, evaluation)
    return ObservableSeries(np.array(job.times), values, 0.0, 0.0, _meta(job))


def _ratio_std(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        est = num / den[:, None]
    est = est[den != 0]
    if len(est) < 2:
        return np.zeros(num.shape[1])
    return _spread(est)


def _spread(samples):
    """Standard deviation over axis 0, exactly zero for constant columns."""
    std = samples.std(axis=0, ddof=1)
    std[np.ptp(samples, axis=0) == 0] = 0.0
    return std


def _population_spread(pop, evaluation, n_resamples, rng, batch=64):
    """Bootstrap spread from resampling the population.

    With several lineage blocks the blocks are the resampling unit; a
    single-block population falls back to resampling individual psips.
    """
    num, trace = _block_sums(pop, evaluation)
    if pop.n_blocks > 1:
        b = len(trace)
        counts = rng.multinomial(b, np.full(b, 1.0 / b), size=n_resamples)
        return _ratio_std(counts @ num, counts @ trace)

    idx = _entry_key_index(pop, evaluation.keys)
    values = evaluation.key_values[idx]
    size = np.abs(pop.weight)
    total = int(size.sum())
    sign = np.sign(pop.weight)
    diagonal = (pop.row == pop.col).astype(float)
    nums, dens = [], []
    for start in range(0, n_resamples, batch):
        draws = rng.multinomial(total, size / total, size=min(batch, n_resamples - start)) * sign
        nums.append(draws @ values)
        dens.append(draws @ diagonal)
    return _ratio_std(np.concatenate(nums), np.concatenate(dens))


def _shot_spread(pop, evaluation, n_resamples, rng):
    """Bootstrap spread from resampling shot outcomes with the population fixed."""
    if evaluation.state_hist is None:
        return np.zeros(len(evaluation.times))
    trace = trace_estimate(pop)
    net = pop.weights
    key_weight = np.array([net.get((r, c), 0) for r, c in evaluation.keys.tolist()], dtype=float)
    hist = evaluation.state_hist
    shots = hist.sum(axis=-1)
    probs = hist / shots[..., None]
    samples = np.empty((n_resamples, len(evaluation.times)))
    for r in range(n_resamples):
        means = histogram_mean(rng.multinomial(shots, probs))
        kv = key_values_from_states(means, evaluation.state_key, evaluation.state_coeff, len(evaluation.keys))
        samples[r] = key_weight @ kv / trace
    return _spread(samples)


def bootstrap(job: EvolutionJob, n_resamples: int = 1000, seed: int = 0,
              evaluation: KeyEvaluation | None = None) -> ObservableSeries:
    """Series with bootstrap standard errors.

    The population and shot components are resampled separately and combined
    in quadrature. One set of resample indices is shared by every time point,
    so the errors carry the correlation across t that a common population
    induces.
    """
    if n_resamples < 100:
        raise ValueError("n_resamples must be >= 100")
    if evaluation is None:
        evaluation = evaluate_keys(job)
    series = expectation_series(job, evaluation)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xB007])))
    psip_err = _population_spread(job.population, evaluation, n_resamples, rng)
    shot_err = _shot_spread(job.population, evaluation, n_resamples, rng)
    series.stat_err = np.hypot(psip_err, shot_err)
    series.meta.update(bootstrap_resamples=n_resamples, bootstrap_seed=seed)
    return series


def rescale_by_t0(series: ObservableSeries) -> ObservableSeries:
    """Divide values and errors by the t=0 value (cancels symmetric readout loss)."""
    zero = np.flatnonzero(series.t == 0.0)
    if len(zero) == 0:
        raise ValueError("series has no t=0 point")
    m0 = series.m_x[zero[0]]
    if m0 == 0:
        raise DivisionByZeroAtT0("value at t=0 is zero")
    meta = dict(series.meta, rescaled_by=repr(float(m0)))
    return ObservableSeries(
        series.t.copy(), series.m_x / m0, series.stat_err / abs(m0), series.sys_err / abs(m0), meta
    )


# --- calibration ----------------------------------------------------------------

def diagonal_schedule(schedule: Schedule) -> Schedule:
    """Same schedule with the transverse field removed (diagonal in the Z basis)."""
    return Schedule(
        schedule.initial,
        tuple((t, HamiltonianParams(p.J_z, 0.0, p.mu_z)) for t, p in schedule.segments),
    )


def reference_series(schedule: Schedule, lat: Lattice, beta: float, times,
                     delta_beta: float | None = None, trotter_dt: float | None = None) -> np.ndarray:
    """Oracle m_x(t) for the thermal state of ``schedule.initial`` evolved by ``schedule``.

    By default both the thermal state and the evolution are exact. Passing
    ``delta_beta`` and/or ``trotter_dt`` reproduces the corresponding
    discretisation of the stochastic pipeline instead, which isolates its
    statistical error.
    """
    rho = thermal_state(dense_hamiltonian(schedule.initial, lat), beta, delta_beta)
    observable = magnetization_x(lat.n)
    if trotter_dt is None:
        return np.array([exact_observable(schedule, lat, rho, observable, t) for t in times])
    return np.array([trotterized_observable(schedule, lat, rho, observable, t, trotter_dt) for t in times])


@dataclass
class Calibration:
    t: np.ndarray
    simulated: np.ndarray
    reference: np.ndarray
    differences: np.ndarray
    systematic: float

    @property
    def running_systematic(self) -> np.ndarray:
        """Quadrature average of the differences up to each time."""
        return np.sqrt(np.cumsum(self.differences ** 2) / np.arange(1, len(self.differences) + 1))


def quadrature_average(differences) -> float:
    d = np.asarray(differences, dtype=float)
    return float(np.sqrt(np.mean(d ** 2)))


def calibrate(job: EvolutionJob, rescale: bool = False) -> Calibration:
    """Run the pipeline with the diagonal Hamiltonian and compare with the exact answer.

    For a single spin the calibration Hamiltonian is -mu_z sigma_z. Differences
    between the simulated and exact series at each time are reduced to their
    root-mean-square, which is the systematic error attached to the physics run.
    """
    cal_job = replace(job, schedule=diagonal_schedule(job.schedule))
    simulated = expectation_series(cal_job)
    reference = reference_series(cal_job.schedule, job.lattice, job.population.beta, job.times)
    sim = simulated.m_x
    if rescale:
        sim = rescale_by_t0(simulated).m_x
        if reference[0] == 0:
            raise DivisionByZeroAtT0("exact calibration value at t=0 is zero")
        reference = reference / reference[0]
    differences = sim - reference
    return Calibration(np.array(job.times), sim, reference, differences, quadrature_average(differences))
