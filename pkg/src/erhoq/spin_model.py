"""Periodic 1D Heisenberg (Ising-type) spin chain in transverse and longitudinal fields.

    H = -J_z sum_<ij> s^z_i s^z_j - mu_x sum_i s^x_i - mu_z sum_i s^z_i

Basis states are integers: bit ``i`` of the integer is site ``i``. Bit 0 means
spin up (s = +1), bit 1 means spin down (s = -1). Every module in the package
uses this convention; the statevector simulator treats bit ``i`` as qubit ``i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_SITES = 24


@dataclass(frozen=True)
class SpinBasisState:
    bits: int
    n: int

    def __post_init__(self):
        if not 1 <= self.n <= MAX_SITES:
            raise ValueError(f"site count must be in [1, {MAX_SITES}], got {self.n}")
        if not 0 <= self.bits < (1 << self.n):
            raise ValueError(f"bit pattern {self.bits} out of range for {self.n} sites")

    @classmethod
    def from_string(cls, s: str) -> "SpinBasisState":
        """Parse a 0/1 string with site 0 first."""
        if not s or set(s) - {"0", "1"}:
            raise ValueError(f"not a bit string: {s!r}")
        return cls(bits_from_string(s), len(s))

    def to_string(self) -> str:
        return bits_to_string(self.bits, self.n)

    def spins(self) -> np.ndarray:
        return 1 - 2 * ((self.bits >> np.arange(self.n)) & 1)

    def flip(self, site: int) -> "SpinBasisState":
        return SpinBasisState(self.bits ^ (1 << site), self.n)


def bits_to_string(bits: int, n: int) -> str:
    return "".join("1" if (bits >> i) & 1 else "0" for i in range(n))


def bits_from_string(s: str) -> int:
    return sum(1 << i for i, ch in enumerate(s) if ch == "1")


@dataclass(frozen=True)
class HamiltonianParams:
    J_z: float = 0.0
    mu_x: float = 0.0
    mu_z: float = 0.0

    def __post_init__(self):
        for name in ("J_z", "mu_x", "mu_z"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")


@dataclass(frozen=True)
class Lattice:
    """Periodic chain. N=1 has no bonds and N=2 a single bond."""

    n: int
    bonds: tuple = field(init=False)

    def __post_init__(self):
        if not 1 <= self.n <= MAX_SITES:
            raise ValueError(f"site count must be in [1, {MAX_SITES}], got {self.n}")
        if self.n == 1:
            bonds = ()
        elif self.n == 2:
            bonds = ((0, 1),)
        else:
            bonds = tuple((i, (i + 1) % self.n) for i in range(self.n))
        object.__setattr__(self, "bonds", bonds)


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant Hamiltonian history.

    ``initial`` defines H_0 (the thermal state). ``segments`` is a sequence of
    ``(switch_time, params)``; the first entry must start at t=0 and each segment
    holds until the next switch time.
    """

    initial: HamiltonianParams
    segments: tuple

    def __post_init__(self):
        segments = tuple((float(t), p) for t, p in self.segments)
        if not segments:
            raise ValueError("schedule needs at least one evolution segment")
        if segments[0][0] != 0.0:
            raise ValueError("first schedule segment must start at t=0")
        times = [t for t, _ in segments]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("schedule switch times must be strictly increasing")
        object.__setattr__(self, "segments", segments)

    @classmethod
    def quench(cls, initial: HamiltonianParams, evolved: HamiltonianParams) -> "Schedule":
        return cls(initial, ((0.0, evolved),))

    @property
    def evolved(self) -> HamiltonianParams:
        return self.segments[0][1]

    def params_at(self, t: float) -> HamiltonianParams:
        """Parameters acting on the interval starting at ``t``."""
        current = self.segments[0][1]
        for start, p in self.segments:
            if start <= t + 1e-12:
                current = p
        return current

    def pieces(self, t_start: float, t_end: float):
        """Yield ``(a, b, params)`` for the constant pieces covering [t_start, t_end]."""
        edges = [t_start] + [s for s, _ in self.segments if t_start < s < t_end] + [t_end]
        for a, b in zip(edges, edges[1:]):
            if b > a:
                yield a, b, self.params_at(a)


def diagonal_element(a: SpinBasisState, p: HamiltonianParams, lat: Lattice) -> float:
    if a.n != lat.n:
        raise ValueError("state and lattice site counts differ")
    return float(diagonal_energies(np.array([a.bits]), p, lat)[0])


def diagonal_energies(states: np.ndarray, p: HamiltonianParams, lat: Lattice) -> np.ndarray:
    """Vectorised <a|H|a> for an integer array of basis states."""
    states = np.asarray(states, dtype=np.int64)
    spins = 1 - 2 * ((states[:, None] >> np.arange(lat.n)) & 1)
    energy = -p.mu_z * spins.sum(axis=1).astype(float)
    for i, j in lat.bonds:
        energy -= p.J_z * spins[:, i] * spins[:, j]
    return energy


def off_diagonal_moves(p: HamiltonianParams, lat: Lattice) -> list[tuple[int, float]]:
    """Off-diagonal connections as ``(flip mask, matrix element)`` pairs.

    The same list serves every basis state: the transverse field flips one
    spin and contributes ``-mu_x``.
    """
    if p.mu_x == 0:
        return []
    return [(1 << i, -p.mu_x) for i in range(lat.n)]


def column_connections(b: SpinBasisState, p: HamiltonianParams, lat: Lattice):
    """All ``(c, <c|H|b>)`` with c != b and a nonzero element."""
    if b.n != lat.n:
        raise ValueError("state and lattice site counts differ")
    return [(SpinBasisState(b.bits ^ mask, b.n), element) for mask, element in off_diagonal_moves(p, lat)]


@dataclass(frozen=True)
class PauliSum:
    """A real linear combination of Pauli strings on a chain.

    ``x_terms`` holds ``(coeff, site)`` for sigma_x, ``z_terms`` holds
    ``(coeff, site)`` for sigma_z and ``zz_terms`` holds ``(coeff, i, j)``.
    """

    n: int
    x_terms: tuple = ()
    z_terms: tuple = ()
    zz_terms: tuple = ()


def trotter_split(p: HamiltonianParams, lat: Lattice) -> tuple[PauliSum, PauliSum]:
    """Split H into the transverse part H_x and the computational-basis-diagonal part H_z."""
    hx = PauliSum(lat.n, x_terms=tuple((-p.mu_x, i) for i in range(lat.n)) if p.mu_x else ())
    hz = PauliSum(
        lat.n,
        z_terms=tuple((-p.mu_z, i) for i in range(lat.n)) if p.mu_z else (),
        zz_terms=tuple((-p.J_z, i, j) for i, j in lat.bonds) if p.J_z else (),
    )
    return hx, hz
