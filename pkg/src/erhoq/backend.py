"""Statevector stand-in for a gate-based quantum processor.

Qubit ``i`` is site ``i`` and bit ``i`` of the amplitude index. Rotation gates
follow the usual half-angle convention::

    RX(theta) = exp(-i theta X / 2)
    RZ(theta) = exp(-i theta Z / 2)
    ZZ(theta) = exp(-i theta Z_i Z_j / 2)

so a Trotter step ``exp(-i H dt)`` of ``H = -J ZZ - mu_z Z - mu_x X`` maps to
``ZZ(-2 J dt)``, ``RZ(-2 mu_z dt)`` and ``RX(-2 mu_x dt)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._util import is_whole_multiple
from .errors import BranchMismatch, NonDivisibleTime
from .spin_model import HamiltonianParams, Lattice, Schedule, SpinBasisState

PARAMETERIZED = frozenset({"RX", "RZ", "ZZ"})
_ARITY = {"X": 1, "H": 1, "Z": 1, "RX": 1, "RZ": 1, "ZZ": 2, "CNOT": 2}

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_X = np.array([[0, 1], [1, 0]], dtype=complex)


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in _ARITY:
            raise ValueError(f"unknown gate {self.kind!r}")
        targets = tuple(int(t) for t in self.targets)
        object.__setattr__(self, "targets", targets)
        if len(targets) != _ARITY[self.kind]:
            raise ValueError(f"{self.kind} takes {_ARITY[self.kind]} target(s)")
        if len(set(targets)) != len(targets):
            raise ValueError(f"{self.kind} needs distinct sites")
        if (self.angle is None) == (self.kind in PARAMETERIZED):
            raise ValueError(f"{self.kind} angle mismatch")

    def dump(self) -> str:
        parts = [self.kind]
        if self.angle is not None:
            parts.append(repr(float(self.angle)))
        parts.extend(str(t) for t in self.targets)
        return " ".join(parts)


def X(q):
    return Gate("X", (q,))


def H(q):
    return Gate("H", (q,))


def Z(q):
    return Gate("Z", (q,))


def RX(theta, q):
    return Gate("RX", (q,), float(theta))


def RZ(theta, q):
    return Gate("RZ", (q,), float(theta))


def ZZ(theta, i, j):
    return Gate("ZZ", (i, j), float(theta))


def CNOT(control, target):
    return Gate("CNOT", (control, target))


@dataclass(frozen=True)
class Circuit:
    n: int
    gates: tuple = ()

    def __post_init__(self):
        gates = tuple(self.gates)
        for g in gates:
            if any(not 0 <= t < self.n for t in g.targets):
                raise ValueError(f"gate {g.dump()!r} out of range for {self.n} qubits")
        object.__setattr__(self, "gates", gates)

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n != self.n:
            raise ValueError("cannot concatenate circuits of different width")
        return Circuit(self.n, self.gates + other.gates)

    def __len__(self):
        return len(self.gates)

    def dump(self) -> str:
        return "".join(g.dump() + "\n" for g in self.gates)


def parse_circuit(text: str, n: int) -> Circuit:
    gates = []
    for line in text.splitlines():
        fields = line.split()
        if not fields:
            continue
        kind = fields[0]
        if kind in PARAMETERIZED:
            gates.append(Gate(kind, tuple(int(f) for f in fields[2:]), float(fields[1])))
        else:
            gates.append(Gate(kind, tuple(int(f) for f in fields[1:])))
    return Circuit(n, gates)


@dataclass(frozen=True)
class NoiseModel:
    """Symmetric readout flips plus a systematic gate-angle error.

    A requested angle ``theta`` is executed as
    ``theta + angle_bias + angle_bias_linear * theta``.
    """

    readout_flip: float = 0.0
    angle_bias: float = 0.0
    angle_bias_linear: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.readout_flip < 0.5:
            raise ValueError("readout_flip must lie in [0, 0.5)")

    def epsilon(self, theta: float) -> float:
        return self.angle_bias + self.angle_bias_linear * theta

    @property
    def is_ideal(self) -> bool:
        return self.readout_flip == 0 and self.angle_bias == 0 and self.angle_bias_linear == 0


NOISELESS = NoiseModel()


@dataclass(frozen=True)
class ExecutionMode:
    """Exact expectation values (``shots=None``) or ``shots`` samples per program."""

    shots: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.shots is not None and self.shots < 1:
            raise ValueError("shot count must be >= 1")

    @property
    def exact(self) -> bool:
        return self.shots is None


# --- state preparation and Trotter circuits ----------------------------------

def prepare_pure_state(a: SpinBasisState, b: SpinBasisState, branch: str) -> Circuit:
    """Circuit taking |0...0> to |a>, or to (|a> +/- |b>)/sqrt(2).

    ``branch`` is ``"diagonal"``, ``"u"`` or ``"v"``. The |a> component always
    carries the + sign.
    """
    if a.n != b.n:
        raise ValueError("states have different site counts")
    n = a.n
    if branch == "diagonal":
        if a.bits != b.bits:
            raise BranchMismatch("diagonal branch needs a == b")
        return Circuit(n, [X(i) for i in range(n) if (a.bits >> i) & 1])
    if branch not in ("u", "v"):
        raise ValueError(f"unknown branch {branch!r}")
    if a.bits == b.bits:
        raise BranchMismatch(f"{branch} branch needs a != b")

    differ = [i for i in range(n) if ((a.bits ^ b.bits) >> i) & 1]
    pivot = differ[0]
    gates = [X(i) for i in range(n) if (a.bits & b.bits) >> i & 1]
    gates.append(H(pivot))
    if branch == "v":
        gates.append(Z(pivot))
    gates.extend(CNOT(pivot, r) for r in differ[1:])
    gates.extend(X(r) for r in differ if (a.bits >> r) & 1)
    return Circuit(n, gates)


def _trotter_step_gates(p: HamiltonianParams, lat: Lattice, dt: float):
    gates = []
    if p.mu_z:
        gates.extend(RZ(-2.0 * p.mu_z * dt, i) for i in range(lat.n))
    if p.J_z:
        gates.extend(ZZ(-2.0 * p.J_z * dt, i, j) for i, j in lat.bonds)
    if p.mu_x:
        gates.extend(RX(-2.0 * p.mu_x * dt, i) for i in range(lat.n))
    return gates


def _check_steps(t, dt):
    if t < 0 or dt <= 0:
        raise ValueError("need t >= 0 and dt > 0")
    if not is_whole_multiple(t, dt):
        raise NonDivisibleTime(f"t={t} is not a whole number of Trotter steps of {dt}")
    return int(round(t / dt))


def trotter_circuit(p: HamiltonianParams, lat: Lattice, t: float, dt: float) -> Circuit:
    """(e^{-i H_x dt} e^{-i H_z dt})^(t/dt): each step applies RZ, ZZ, then RX."""
    steps = _check_steps(t, dt)
    return Circuit(lat.n, _trotter_step_gates(p, lat, dt) * steps)


def schedule_circuit(schedule: Schedule, lat: Lattice, t_start: float, t_end: float, dt: float) -> Circuit:
    """Trotter circuit from ``t_start`` to ``t_end`` following a piecewise schedule.

    Each step uses the parameters in force at the start of that step.
    """
    first = _check_steps(t_start, dt)
    last = _check_steps(t_end, dt)
    gates = []
    for k in range(first, last):
        gates.extend(_trotter_step_gates(schedule.params_at(k * dt), lat, dt))
    return Circuit(lat.n, gates)


# --- statevector kernels -------------------------------------------------------

def _rx(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def _bit(n, q):
    return (np.arange(1 << n) >> q) & 1


def _apply_1q(states, u, q, n):
    s = states.shape[0]
    view = states.reshape(s, 1 << (n - 1 - q), 2, 1 << q)
    return np.einsum("ij,sajb->saib", u, view).reshape(s, 1 << n)


def _apply_gate(states, gate: Gate, n: int, noise: NoiseModel):
    angle = gate.angle
    if angle is not None:
        angle = angle + noise.epsilon(angle)
    kind = gate.kind
    if kind == "X":
        return _apply_1q(states, _X, gate.targets[0], n)
    if kind == "H":
        return _apply_1q(states, _H, gate.targets[0], n)
    if kind == "RX":
        return _apply_1q(states, _rx(angle), gate.targets[0], n)
    if kind == "Z":
        return states * (1 - 2 * _bit(n, gate.targets[0]))
    if kind == "RZ":
        z = 1 - 2 * _bit(n, gate.targets[0])
        return states * np.exp(-0.5j * angle * z)
    if kind == "ZZ":
        i, j = gate.targets
        zz = (1 - 2 * _bit(n, i)) * (1 - 2 * _bit(n, j))
        return states * np.exp(-0.5j * angle * zz)
    if kind == "CNOT":
        c, t = gate.targets
        idx = np.arange(1 << n)
        return states[:, idx ^ (_bit(n, c) << t)]
    raise AssertionError(kind)


def zero_state(n: int, batch: int = 1) -> np.ndarray:
    states = np.zeros((batch, 1 << n), dtype=complex)
    states[:, 0] = 1.0
    return states


def simulate(circuit: Circuit, noise: NoiseModel = NOISELESS, states=None) -> np.ndarray:
    """Apply ``circuit`` to a batch of statevectors, shape ``(batch, 2**n)``.

    Starts from |0...0> when ``states`` is omitted. Angle bias from ``noise``
    is added to every parameterised gate.
    """
    if states is None:
        states = zero_state(circuit.n)
    states = np.array(states, dtype=complex, copy=True)
    if states.ndim == 1:
        states = states[None, :]
    for gate in circuit.gates:
        states = _apply_gate(states, gate, circuit.n, noise)
    return states


def circuit_unitary(circuit: Circuit, noise: NoiseModel = NOISELESS) -> np.ndarray:
    return simulate(circuit, noise, np.eye(1 << circuit.n, dtype=complex)).T


def x_basis_probabilities(states: np.ndarray, n: int, readout_flip: float = 0.0) -> np.ndarray:
    """Outcome probabilities after rotating every qubit into the X basis.

    Symmetric readout flips are applied as an independent bit-flip channel on
    each qubit, which has the same law as flipping each sampled bit.
    """
    for q in range(n):
        states = _apply_1q(states, _H, q, n)
    probs = np.abs(states) ** 2
    if readout_flip:
        s = probs.shape[0]
        for q in range(n):
            view = probs.reshape(s, 1 << (n - 1 - q), 2, 1 << q)
            p0, p1 = view[:, :, 0, :], view[:, :, 1, :]
            view = np.stack(
                ((1 - readout_flip) * p0 + readout_flip * p1, readout_flip * p0 + (1 - readout_flip) * p1),
                axis=2,
            )
            probs = view.reshape(s, 1 << n)
    return probs


def exact_mx(states: np.ndarray, n: int, readout_flip: float = 0.0) -> np.ndarray:
    """Noise-folded <m_x> for each statevector in the batch."""
    probs = x_basis_probabilities(states, n)
    ones = sum(_bit(n, q) for q in range(n))
    return (1 - 2 * readout_flip) * (probs @ (1 - 2 * ones / n))


def sample_mx_histograms(states, n, shots, readout_flip, rng) -> np.ndarray:
    """Shot histograms over the number of qubits read as 1, shape ``(batch, n + 1)``.

    ``shots`` may be a scalar or one count per state.
    """
    probs = x_basis_probabilities(states, n, readout_flip)
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum(axis=1, keepdims=True)
    counts = rng.multinomial(np.asarray(shots, dtype=np.int64), probs)
    ones = sum(_bit(n, q) for q in range(n))
    hist = np.zeros((counts.shape[0], n + 1), dtype=np.int64)
    for k in range(n + 1):
        hist[:, k] = counts[:, ones == k].sum(axis=1)
    return hist


def histogram_mean(hist: np.ndarray) -> np.ndarray:
    """Mean of (1/n) sum_i (1 - 2 bit_i) from histograms over the count of 1s."""
    n = hist.shape[-1] - 1
    values = 1 - 2 * np.arange(n + 1) / n
    return (hist @ values) / hist.sum(axis=-1)


def execute(circuit: Circuit, noise: NoiseModel = NOISELESS, mode: ExecutionMode = ExecutionMode(),
            observable: str = "m_x") -> float:
    """Run ``circuit`` from |0...0>, rotate to the X basis and estimate m_x."""
    if observable != "m_x":
        raise ValueError(f"unsupported observable {observable!r}")
    states = simulate(circuit, noise)
    if mode.exact:
        return float(exact_mx(states, circuit.n, noise.readout_flip)[0])
    rng = np.random.default_rng(mode.seed)
    hist = sample_mx_histograms(states, circuit.n, mode.shots, noise.readout_flip, rng)
    return float(histogram_mean(hist)[0])
