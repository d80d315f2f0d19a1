"""Density matrix quantum Monte Carlo for e^{-beta H_0}.

The density matrix is sampled by signed walkers ("psips") living on basis
operators |row><col|. One step of size ``delta_beta`` is the stochastic form of

    rho -> rho - (delta_beta / 2) (H rho + rho H)

and is carried out by four independent events per psip: spawning along the
column (acting with H on the row index), spawning along the row (acting on the
column index), and dying or cloning according to the sign of the summed
diagonal energy. All events read the start-of-step population; children act
from the next step on.

Psips are stored as net integer weights. Each initial psip is assigned to one
of ``n_blocks`` lineage blocks and all descendants inherit the block; blocks are
independent sub-populations, which is what the bootstrap resamples.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from ._util import atomic_write_text, is_whole_multiple, parallel_map
from .errors import PopulationExplosion, PopulationFileError, ZeroTrace
from .spin_model import (
    HamiltonianParams,
    Lattice,
    SpinBasisState,
    bits_from_string,
    bits_to_string,
    diagonal_energies,
    off_diagonal_moves,
)

DEFAULT_MAX_POPULATION = 10_000_000
DEFAULT_MAX_BLOCKS = 100
_BLOCKS_PER_CHUNK = 8
_INIT_STREAM = 0
_STEP_STREAM = 1


@dataclass(frozen=True)
class DmqmcParams:
    beta: float
    delta_beta: float
    n_initial: int
    seed: int = 0
    n_blocks: int | None = None
    annihilation: bool = True
    max_population: int = DEFAULT_MAX_POPULATION

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not self.delta_beta > 0:
            raise ValueError(f"delta_beta must be > 0, got {self.delta_beta}")
        if not is_whole_multiple(self.beta, self.delta_beta):
            raise ValueError(f"beta={self.beta} is not a whole number of steps of {self.delta_beta}")
        if self.n_initial < 1:
            raise ValueError("n_initial must be >= 1")
        if self.n_blocks is not None and not 1 <= self.n_blocks <= self.n_initial:
            raise ValueError("n_blocks must lie in [1, n_initial]")

    @property
    def n_steps(self) -> int:
        return int(round(self.beta / self.delta_beta))

    @property
    def blocks(self) -> int:
        if self.n_blocks is not None:
            return self.n_blocks
        return min(self.n_initial, DEFAULT_MAX_BLOCKS)


@dataclass(frozen=True)
class Psip:
    row: SpinBasisState
    col: SpinBasisState
    sign: int

    def __post_init__(self):
        if self.row.n != self.col.n:
            raise ValueError("row and column states have different site counts")
        if self.sign not in (1, -1):
            raise ValueError("psip sign must be +1 or -1")


@dataclass
class PsipPopulation:
    """Sparse signed approximation to a density matrix.

    Entries are parallel int64 arrays ``block``, ``row``, ``col``, ``weight``.
    No entry has zero weight.
    """

    n: int
    block: np.ndarray
    row: np.ndarray
    col: np.ndarray
    weight: np.ndarray
    beta: float = 0.0
    seed: int = 0
    n_initial: int = 0
    n_blocks: int = 1

    def __post_init__(self):
        self.block = np.asarray(self.block, dtype=np.int64)
        self.row = np.asarray(self.row, dtype=np.int64)
        self.col = np.asarray(self.col, dtype=np.int64)
        self.weight = np.asarray(self.weight, dtype=np.int64)
        if not (len(self.block) == len(self.row) == len(self.col) == len(self.weight)):
            raise ValueError("population arrays differ in length")
        if np.any(self.weight == 0):
            raise ValueError("population entries must have nonzero weight")

    @classmethod
    def from_weights(cls, n, weights, **meta) -> "PsipPopulation":
        """Single-block population from a ``{(row, col): weight}`` map."""
        items = sorted((k, int(w)) for k, w in weights.items() if w != 0)
        rows = [k[0] for k, _ in items]
        cols = [k[1] for k, _ in items]
        return cls(n, np.zeros(len(items), np.int64), rows, cols, [w for _, w in items], **meta)

    @classmethod
    def from_psips(cls, psips, **meta) -> "PsipPopulation":
        psips = list(psips)
        if not psips:
            raise ValueError("need at least one psip")
        weights: dict = {}
        for p in psips:
            key = (p.row.bits, p.col.bits)
            weights[key] = weights.get(key, 0) + p.sign
        return cls.from_weights(psips[0].row.n, weights, **meta)

    @property
    def weights(self) -> dict:
        """Net weight per ``(row, col)``, summed over blocks."""
        out: dict = {}
        for r, c, w in zip(self.row.tolist(), self.col.tolist(), self.weight.tolist()):
            out[(r, c)] = out.get((r, c), 0) + w
        return {k: w for k, w in sorted(out.items()) if w != 0}

    @property
    def total_weight(self) -> int:
        return int(np.abs(self.weight).sum())

    def __len__(self):
        return len(self.weight)

    def psips(self):
        """Expand into individual psips, one per unit of weight."""
        for (r, c), w in self.weights.items():
            for _ in range(abs(w)):
                yield Psip(SpinBasisState(r, self.n), SpinBasisState(c, self.n), 1 if w > 0 else -1)


@dataclass
class EventCounts:
    """Tallies of the four psip events, for instrumented runs."""

    psips: int = 0
    column_spawns: int = 0
    row_spawns: int = 0
    deaths: int = 0
    clones: int = 0
    spawns_by_target: dict = field(default_factory=dict)

    def add(self, other: "EventCounts"):
        self.psips += other.psips
        self.column_spawns += other.column_spawns
        self.row_spawns += other.row_spawns
        self.deaths += other.deaths
        self.clones += other.clones
        for k, v in other.spawns_by_target.items():
            self.spawns_by_target[k] = self.spawns_by_target.get(k, 0) + v


def _rng(*words) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(w) for w in words])))


def _aggregate(block, row, col, weight, annihilation=True):
    """Sum weights on coincident entries and drop zeros; output is sorted."""
    if len(weight) == 0:
        return block, row, col, weight
    keys = [col, row, block]
    if not annihilation:
        keys.insert(0, weight > 0)
    order = np.lexsort(keys)
    block, row, col, weight = block[order], row[order], col[order], weight[order]
    change = (np.diff(block) != 0) | (np.diff(row) != 0) | (np.diff(col) != 0)
    if not annihilation:
        change |= np.diff(weight > 0) != 0
    starts = np.concatenate(([0], np.flatnonzero(change) + 1))
    weight = np.add.reduceat(weight, starts)
    keep = weight != 0
    return block[starts][keep], row[starts][keep], col[starts][keep], weight[keep]


def _sort_entries(block, row, col, weight):
    order = np.lexsort((weight, col, row, block))
    return block[order], row[order], col[order], weight[order]


def init_population(params: DmqmcParams, n: int) -> PsipPopulation:
    """Place ``n_initial`` positive psips uniformly at random on the diagonal."""
    rng = _rng(params.seed, _INIT_STREAM)
    sites = rng.integers(0, 1 << n, size=params.n_initial, dtype=np.int64)
    blocks = np.arange(params.n_initial, dtype=np.int64) % params.blocks
    entries = _aggregate(blocks, sites, sites.copy(), np.ones_like(sites))
    return PsipPopulation(
        n, *entries, beta=0.0, seed=params.seed, n_initial=params.n_initial, n_blocks=params.blocks
    )


def _event_counts(rng, psips, prob):
    """Events among ``psips`` trials with per-trial rate ``prob`` (may exceed 1).

    Each psip fires floor(prob) times plus once more with probability
    prob - floor(prob).
    """
    whole = np.floor(prob)
    frac = prob - whole
    return psips * whole.astype(np.int64) + rng.binomial(psips, frac)


def _step_chunk(entries, rng, moves, lat, h0, delta_beta, annihilation, stats):
    block, row, col, weight = entries
    size = np.abs(weight)
    sign = np.sign(weight)
    out_b, out_r, out_c, out_w = [block], [row], [col], [weight]
    local = EventCounts(psips=int(size.sum())) if stats is not None else None

    for mask, element in moves:
        prob = np.full(len(weight), 0.5 * abs(element) * delta_beta)
        child_sign = -int(np.sign(element))
        for axis in ("column", "row"):
            k = _event_counts(rng, size, prob)
            hit = k > 0
            if not hit.any():
                continue
            if axis == "column":
                new_row, new_col = row[hit] ^ mask, col[hit]
            else:
                new_row, new_col = row[hit], col[hit] ^ mask
            out_b.append(block[hit])
            out_r.append(new_row)
            out_c.append(new_col)
            out_w.append(sign[hit] * child_sign * k[hit])
            if local is not None:
                total = int(k.sum())
                if axis == "column":
                    local.column_spawns += total
                else:
                    local.row_spawns += total
                key = (axis, mask)
                local.spawns_by_target[key] = local.spawns_by_target.get(key, 0) + total

    diag = diagonal_energies(row, h0, lat) + diagonal_energies(col, h0, lat)
    k = _event_counts(rng, size, 0.5 * np.abs(diag) * delta_beta)
    hit = k > 0
    if hit.any():
        out_b.append(block[hit])
        out_r.append(row[hit])
        out_c.append(col[hit])
        out_w.append(-np.sign(diag[hit]).astype(np.int64) * sign[hit] * k[hit])
        if local is not None:
            local.deaths += int(k[diag > 0].sum())
            local.clones += int(k[diag < 0].sum())

    merged = _aggregate(
        np.concatenate(out_b), np.concatenate(out_r), np.concatenate(out_c), np.concatenate(out_w),
        annihilation=annihilation,
    )
    return merged, local


def step(
    pop: PsipPopulation,
    params: DmqmcParams,
    h0: HamiltonianParams,
    lat: Lattice,
    stats: EventCounts | None = None,
    threads=None,
) -> PsipPopulation:
    """Advance the population by one imaginary-time step ``delta_beta``.

    Random numbers come from a Philox stream keyed by (seed, step index, chunk
    of lineage blocks), so results do not depend on ``threads``.
    """
    if len(pop) == 0:
        raise ValueError("cannot step an empty population")
    if pop.n != lat.n:
        raise ValueError("population and lattice site counts differ")
    step_index = int(round(pop.beta / params.delta_beta))
    moves = off_diagonal_moves(h0, lat)
    pop_block, pop_row, pop_col, pop_weight = _sort_entries(pop.block, pop.row, pop.col, pop.weight)

    chunk_of = pop_block // _BLOCKS_PER_CHUNK
    bounds = np.flatnonzero(np.diff(chunk_of)) + 1
    starts = np.concatenate(([0], bounds))
    stops = np.concatenate((bounds, [len(pop)]))

    def work(span):
        a, b = span
        rng = _rng(pop.seed, _STEP_STREAM, step_index, chunk_of[a])
        entries = (pop_block[a:b], pop_row[a:b], pop_col[a:b], pop_weight[a:b])
        return _step_chunk(entries, rng, moves, lat, h0, params.delta_beta, params.annihilation, stats)

    results = parallel_map(work, zip(starts.tolist(), stops.tolist()), threads)
    parts = [r[0] for r in results]
    if stats is not None:
        for _, local in results:
            stats.add(local)
    block, row, col, weight = (np.concatenate([p[i] for p in parts]) for i in range(4))
    new = PsipPopulation(
        pop.n, block, row, col, weight,
        beta=(step_index + 1) * params.delta_beta,
        seed=pop.seed, n_initial=pop.n_initial, n_blocks=pop.n_blocks,
    )
    if new.total_weight > params.max_population:
        raise PopulationExplosion(
            f"total psip weight {new.total_weight} exceeds {params.max_population} at beta={new.beta:.6g}; "
            "reduce delta_beta or beta, or raise the ceiling"
        )
    return new


def run(params: DmqmcParams, h0: HamiltonianParams, lat: Lattice, threads=None, stats=None) -> PsipPopulation:
    pop = init_population(params, lat.n)
    for _ in range(params.n_steps):
        pop = step(pop, params, h0, lat, stats=stats, threads=threads)
    pop.beta = params.beta
    return pop


def trace_estimate(pop: PsipPopulation) -> float:
    diagonal = pop.row == pop.col
    trace = int(pop.weight[diagonal].sum())
    if trace == 0:
        raise ZeroTrace("population has zero trace")
    return float(trace)


# --- population file -----------------------------------------------------------

_HEADER_KEYS = ("N", "beta", "seed", "n_initial", "n_blocks")


def format_population(pop: PsipPopulation) -> str:
    lines = [
        f"N={pop.n}",
        f"beta={float(pop.beta)!r}",
        f"seed={int(pop.seed)}",
        f"n_initial={int(pop.n_initial)}",
        f"n_blocks={int(pop.n_blocks)}",
    ]
    block, row, col, weight = _sort_entries(pop.block, pop.row, pop.col, pop.weight)
    with_block = pop.n_blocks > 1
    for b, r, c, w in zip(block.tolist(), row.tolist(), col.tolist(), weight.tolist()):
        line = f"{bits_to_string(r, pop.n)} {bits_to_string(c, pop.n)} {w:+d}"
        lines.append(f"{line} {b}" if with_block else line)
    return "\n".join(lines) + "\n"


def parse_population(text: str) -> PsipPopulation:
    """Parse the line-oriented population format.

    Entry lines are ``<row bits> <col bits> <signed weight> [block]`` with
    site 0 first; the block column is optional and defaults to 0.
    """
    header: dict = {}
    block, row, col, weight = [], [], [], []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _HEADER_KEYS:
                raise PopulationFileError(f"unknown header key {key!r}", number)
            try:
                header[key] = float(value) if key == "beta" else int(value)
            except ValueError:
                raise PopulationFileError(f"bad value for {key}: {value.strip()!r}", number) from None
            continue
        if "N" not in header:
            raise PopulationFileError("entry before N= header", number)
        n = header["N"]
        fields = line.split()
        if len(fields) not in (3, 4):
            raise PopulationFileError(f"expected 3 or 4 fields, got {len(fields)}", number)
        r, c = fields[0], fields[1]
        for bits in (r, c):
            if len(bits) != n or set(bits) - {"0", "1"}:
                raise PopulationFileError(f"bad bit string {bits!r} for N={n}", number)
        try:
            w = int(fields[2])
            b = int(fields[3]) if len(fields) == 4 else 0
        except ValueError:
            raise PopulationFileError("weight and block must be integers", number) from None
        if w == 0:
            raise PopulationFileError("zero weight entry", number)
        if b < 0 or b >= header.get("n_blocks", 1):
            raise PopulationFileError(f"block index {b} out of range", number)
        row.append(bits_from_string(r))
        col.append(bits_from_string(c))
        weight.append(w)
        block.append(b)
    for key in ("N", "beta", "seed", "n_initial"):
        if key not in header:
            raise PopulationFileError(f"missing header {key}=")
    if not 1 <= header["N"] <= 24 or header["beta"] < 0 or not math.isfinite(header["beta"]):
        raise PopulationFileError("header values out of range")
    return PsipPopulation(
        header["N"], block, row, col, weight,
        beta=header["beta"], seed=header["seed"], n_initial=header["n_initial"],
        n_blocks=header.get("n_blocks", 1),
    )


def write_population(pop: PsipPopulation, path) -> str:
    """Write the population file atomically; returns the SHA-256 of its contents."""
    text = format_population(pop)
    atomic_write_text(path, text)
    return hashlib.sha256(text.encode()).hexdigest()


def read_population(path) -> PsipPopulation:
    with open(path, encoding="utf-8") as fh:
        return parse_population(fh.read())
