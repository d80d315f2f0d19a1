"""Dense exact-diagonalisation reference.

Operators are dense ``2**N x 2**N`` complex matrices in the package's basis
ordering (bit ``i`` of the row index is site ``i``), so the Kronecker products
run from site N-1 down to site 0.
"""

from __future__ import annotations

from functools import reduce

import numpy as np

from ._util import is_whole_multiple
from .errors import DimensionTooLarge, NonDivisibleTime
from .spin_model import HamiltonianParams, Lattice, PauliSum, Schedule, trotter_split

MAX_DENSE_SITES = 12

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def _check_size(n):
    if n > MAX_DENSE_SITES:
        raise DimensionTooLarge(f"dense oracle supports at most {MAX_DENSE_SITES} sites, got {n}")


def site_operator(op, site, n):
    """``op`` acting on ``site`` of an ``n``-site chain."""
    _check_size(n)
    factors = [op if k == site else I2 for k in range(n)]
    return reduce(np.kron, factors[::-1])


def pauli_sum_matrix(ps: PauliSum) -> np.ndarray:
    dim = 1 << ps.n
    out = np.zeros((dim, dim), dtype=complex)
    for coeff, i in ps.x_terms:
        out += coeff * site_operator(SX, i, ps.n)
    for coeff, i in ps.z_terms:
        out += coeff * site_operator(SZ, i, ps.n)
    for coeff, i, j in ps.zz_terms:
        out += coeff * site_operator(SZ, i, ps.n) @ site_operator(SZ, j, ps.n)
    return out


def dense_hamiltonian(p: HamiltonianParams, lat: Lattice) -> np.ndarray:
    _check_size(lat.n)
    dim = 1 << lat.n
    h = np.zeros((dim, dim), dtype=complex)
    for i, j in lat.bonds:
        h -= p.J_z * site_operator(SZ, i, lat.n) @ site_operator(SZ, j, lat.n)
    for i in range(lat.n):
        h -= p.mu_x * site_operator(SX, i, lat.n)
        h -= p.mu_z * site_operator(SZ, i, lat.n)
    return h


def magnetization_x(n: int) -> np.ndarray:
    """Site-averaged sigma_x."""
    return sum(site_operator(SX, i, n) for i in range(n)) / n


def _eigh(h):
    h = np.asarray(h)
    if not np.allclose(h, h.conj().T, atol=1e-12):
        raise ValueError("operator is not Hermitian")
    return np.linalg.eigh(h)


def hermitian_function(h, fn) -> np.ndarray:
    """``fn(h)`` for Hermitian ``h`` through its eigendecomposition."""
    evals, evecs = _eigh(h)
    return (evecs * fn(evals)) @ evecs.conj().T


def thermal_state(h0, beta: float, delta_beta: float | None = None) -> np.ndarray:
    """Unnormalised thermal state.

    With ``delta_beta`` given, returns the Euler-discretised product
    ``(1 - delta_beta H)^(beta/delta_beta)`` that the Monte Carlo step samples
    in expectation, instead of ``exp(-beta H)``.
    """
    if delta_beta is None:
        return hermitian_function(h0, lambda e: np.exp(-beta * e))
    if not is_whole_multiple(beta, delta_beta):
        raise NonDivisibleTime(f"beta={beta} is not a whole number of steps of {delta_beta}")
    steps = int(round(beta / delta_beta))
    return hermitian_function(h0, lambda e: (1.0 - delta_beta * e) ** steps)


def evolution_operator(h, t: float) -> np.ndarray:
    return hermitian_function(h, lambda e: np.exp(-1j * t * e))


def _expect(observable, u, rho):
    evolved = u @ rho @ u.conj().T
    return float(np.real(np.trace(observable @ evolved)) / np.real(np.trace(rho)))


def exact_propagator(schedule: Schedule, lat: Lattice, t: float) -> np.ndarray:
    u = np.eye(1 << lat.n, dtype=complex)
    for a, b, p in schedule.pieces(0.0, t):
        u = evolution_operator(dense_hamiltonian(p, lat), b - a) @ u
    return u


def exact_observable(schedule: Schedule, lat: Lattice, rho, observable, t: float) -> float:
    """Tr O e^{-iHt} rho e^{iHt} / Tr rho with exact exponentials per segment."""
    return _expect(observable, exact_propagator(schedule, lat, t), rho)


def trotter_step_operator(p: HamiltonianParams, lat: Lattice, dt: float) -> np.ndarray:
    """exp(-i H_x dt) exp(-i H_z dt): H_z acts on the ket first."""
    hx, hz = (pauli_sum_matrix(part) for part in trotter_split(p, lat))
    return evolution_operator(hx, dt) @ evolution_operator(hz, dt)


def trotter_propagator(schedule: Schedule, lat: Lattice, t: float, dt: float) -> np.ndarray:
    if not is_whole_multiple(t, dt):
        raise NonDivisibleTime(f"t={t} is not a whole number of Trotter steps of {dt}")
    steps = int(round(t / dt))
    u = np.eye(1 << lat.n, dtype=complex)
    cache = {}
    for k in range(steps):
        p = schedule.params_at(k * dt)
        if p not in cache:
            cache[p] = trotter_step_operator(p, lat, dt)
        u = cache[p] @ u
    return u


def trotterized_observable(schedule: Schedule, lat: Lattice, rho, observable, t: float, dt: float) -> float:
    return _expect(observable, trotter_propagator(schedule, lat, t, dt), rho)


# --- single spin, closed form ---------------------------------------------------

def single_spin_thermal_mx(mu_x: float, mu_z: float, beta: float) -> float:
    """<sigma_x> for H = -mu_x sigma_x - mu_z sigma_z at inverse temperature beta."""
    omega = np.hypot(mu_x, mu_z)
    if omega == 0:
        return 0.0
    return float(mu_x / omega * np.tanh(beta * omega))


def single_spin_bloch_vector(h0: HamiltonianParams, h1: HamiltonianParams, beta: float, t: float) -> np.ndarray:
    """Bloch vector of a thermal spin after a quench, by rotating the field direction.

    H = -h.sigma with h = (mu_x, 0, mu_z). The thermal Bloch vector is
    tanh(beta |h0|) h0/|h0|, and H1 precesses it about h1 by angle -2 |h1| t.
    """
    f0 = np.array([h0.mu_x, 0.0, h0.mu_z])
    norm0 = np.linalg.norm(f0)
    r = np.zeros(3) if norm0 == 0 else np.tanh(beta * norm0) * f0 / norm0
    f1 = np.array([h1.mu_x, 0.0, h1.mu_z])
    norm1 = np.linalg.norm(f1)
    if norm1 == 0:
        return r
    axis = f1 / norm1
    phi = -2.0 * norm1 * t
    return r * np.cos(phi) + np.cross(axis, r) * np.sin(phi) + axis * axis.dot(r) * (1 - np.cos(phi))


def single_spin_mx(h0: HamiltonianParams, h1: HamiltonianParams, beta: float, t: float) -> float:
    return float(single_spin_bloch_vector(h0, h1, beta, t)[0])
