import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erhoq.backend import (
    CNOT,
    RX,
    RZ,
    ZZ,
    Circuit,
    ExecutionMode,
    Gate,
    H,
    NoiseModel,
    X,
    Z,
    circuit_unitary,
    execute,
    parse_circuit,
    prepare_pure_state,
    schedule_circuit,
    simulate,
    trotter_circuit,
)
from erhoq.errors import BranchMismatch, NonDivisibleTime
from erhoq.oracle import dense_hamiltonian, evolution_operator, trotter_propagator
from erhoq.spin_model import HamiltonianParams, Lattice, Schedule, SpinBasisState

ANGLES = (0.0, math.pi / 2, math.pi)
I2 = np.eye(2)


def textbook(kind, theta=None):
    c, s = (math.cos(theta / 2), math.sin(theta / 2)) if theta is not None else (None, None)
    return {
        "X": np.array([[0, 1], [1, 0]]),
        "Z": np.array([[1, 0], [0, -1]]),
        "H": np.array([[1, 1], [1, -1]]) / math.sqrt(2),
        "RX": np.array([[c, -1j * s], [-1j * s, c]]) if theta is not None else None,
        "RZ": np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)]) if theta is not None else None,
    }[kind]


def ket(string):
    return SpinBasisState.from_string(string)


def test_fixed_one_qubit_gates():
    for kind, make in (("X", X), ("Z", Z), ("H", H)):
        assert np.allclose(circuit_unitary(Circuit(1, [make(0)])), textbook(kind))


@pytest.mark.parametrize("theta", ANGLES)
def test_rotation_gates(theta):
    assert np.allclose(circuit_unitary(Circuit(1, [RX(theta, 0)])), textbook("RX", theta))
    assert np.allclose(circuit_unitary(Circuit(1, [RZ(theta, 0)])), textbook("RZ", theta))
    zz = np.diag(np.exp(-0.5j * theta * np.array([1, -1, -1, 1])))
    assert np.allclose(circuit_unitary(Circuit(2, [ZZ(theta, 0, 1)])), zz)


def test_cnot_matrix():
    # basis index = bit0 + 2*bit1, control on qubit 0
    expected = np.zeros((4, 4))
    for idx in range(4):
        out = idx ^ ((idx & 1) << 1)
        expected[out, idx] = 1
    assert np.allclose(circuit_unitary(Circuit(2, [CNOT(0, 1)])), expected)


@pytest.mark.parametrize("theta", ANGLES + (0.37,))
def test_zz_matches_cnot_rz_cnot(theta):
    direct = circuit_unitary(Circuit(3, [ZZ(theta, 0, 2)]))
    decomposed = circuit_unitary(Circuit(3, [CNOT(0, 2), RZ(theta, 2), CNOT(0, 2)]))
    assert np.allclose(direct, decomposed)


def test_gate_validation():
    with pytest.raises(ValueError):
        Gate("CNOT", (1, 1))
    with pytest.raises(ValueError):
        Gate("RX", (0,))
    with pytest.raises(ValueError):
        Circuit(2, [X(2)])
    with pytest.raises(ValueError):
        NoiseModel(readout_flip=0.5)
    with pytest.raises(ValueError):
        ExecutionMode(shots=0)


def test_prepare_diagonal():
    c = prepare_pure_state(ket("10"), ket("10"), "diagonal")
    assert c.gates == (X(0),)
    psi = simulate(c)[0]
    assert psi[ket("10").bits] == pytest.approx(1)


def test_prepare_single_qubit_u():
    c = prepare_pure_state(ket("0"), ket("1"), "u")
    assert c.gates == (H(0),)
    assert np.allclose(simulate(c)[0], [1 / math.sqrt(2), 1 / math.sqrt(2)])


def test_prepare_two_qubit_v():
    psi = simulate(prepare_pure_state(ket("00"), ket("11"), "v"))[0]
    assert np.allclose(psi, [1 / math.sqrt(2), 0, 0, -1 / math.sqrt(2)])


def test_branch_mismatch():
    with pytest.raises(BranchMismatch):
        prepare_pure_state(ket("01"), ket("01"), "u")
    with pytest.raises(BranchMismatch):
        prepare_pure_state(ket("01"), ket("00"), "diagonal")


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 5), a=st.integers(0, 31), b=st.integers(0, 31), branch=st.sampled_from(["u", "v"]))
def test_prepare_matches_normalized_sum(n, a, b, branch):
    mask = (1 << n) - 1
    a, b = a & mask, b & mask
    if a == b:
        return
    psi = simulate(prepare_pure_state(SpinBasisState(a, n), SpinBasisState(b, n), branch))[0]
    expected = np.zeros(1 << n, complex)
    expected[a] = 1 / math.sqrt(2)
    expected[b] = (1 if branch == "u" else -1) / math.sqrt(2)
    assert np.allclose(psi, expected, atol=1e-12)


def test_trotter_circuit_empty_at_zero_time():
    assert len(trotter_circuit(HamiltonianParams(1, 1, 1), Lattice(3), 0.0, 0.1)) == 0


def test_trotter_circuit_gate_order_and_angles():
    c = trotter_circuit(HamiltonianParams(0.5, -1, 0.25), Lattice(2), 0.2, 0.1)
    dump = c.dump().splitlines()
    assert [line.split()[0] for line in dump] == ["RZ", "RZ", "ZZ", "RX", "RX"] * 2
    assert c.gates[0].angle == pytest.approx(-0.05)
    assert c.gates[2].angle == pytest.approx(-0.1)
    assert c.gates[3].angle == pytest.approx(0.2)


def test_trotter_non_divisible():
    with pytest.raises(NonDivisibleTime):
        trotter_circuit(HamiltonianParams(), Lattice(1), 1.0, 0.3)


def test_x_eigenstate_is_stationary():
    prep = prepare_pure_state(ket("0"), ket("1"), "u")
    for t in (0.3, 1.0, 2.5):
        c = prep + trotter_circuit(HamiltonianParams(0, 1, 0), Lattice(1), t, 0.1)
        assert execute(c) == pytest.approx(1.0, abs=1e-12)


def test_trotter_unitary_is_first_order():
    p, lat, t = HamiltonianParams(1, -1, 0), Lattice(2), 0.5
    exact = evolution_operator(dense_hamiltonian(p, lat), t)
    errors = [np.linalg.norm(circuit_unitary(trotter_circuit(p, lat, t, dt)) - exact, 2) for dt in (0.1, 0.05)]
    assert errors[0] / errors[1] == pytest.approx(2.0, rel=0.1)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_trotter_circuit_matches_oracle_product(n):
    p, lat = HamiltonianParams(0.7, -1.1, 0.4), Lattice(n)
    sched = Schedule.quench(p, p)
    u = circuit_unitary(trotter_circuit(p, lat, 0.6, 0.2))
    assert np.allclose(u, trotter_propagator(sched, lat, 0.6, 0.2), atol=1e-12)


def test_schedule_circuit_switches_parameters():
    a, b = HamiltonianParams(0, 1, 0), HamiltonianParams(0, 0, 1)
    sched = Schedule(a, ((0.0, a), (0.2, b)))
    c = schedule_circuit(sched, Lattice(1), 0.0, 0.4, 0.1)
    assert [g.kind for g in c.gates] == ["RX", "RX", "RZ", "RZ"]
    tail = schedule_circuit(sched, Lattice(1), 0.2, 0.4, 0.1)
    assert c.gates[2:] == tail.gates


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5))
def test_unitarity_of_random_circuits(seed, n):
    rng = np.random.default_rng(seed)
    gates = []
    for _ in range(30):
        kind = rng.choice(["X", "H", "Z", "RX", "RZ", "ZZ", "CNOT"] if n > 1 else ["X", "H", "Z", "RX", "RZ"])
        if kind in ("ZZ", "CNOT"):
            i, j = rng.choice(n, 2, replace=False)
            gates.append(ZZ(rng.normal(), i, j) if kind == "ZZ" else CNOT(i, j))
        elif kind in ("RX", "RZ"):
            gates.append(Gate(kind, (int(rng.integers(n)),), float(rng.normal())))
        else:
            gates.append(Gate(kind, (int(rng.integers(n)),)))
    psi = simulate(Circuit(n, gates))[0]
    assert abs(np.linalg.norm(psi) - 1) < 1e-10


def test_dump_parse_round_trip():
    c = Circuit(4, [H(0), RX(1.5707963, 2), ZZ(0.2, 0, 1), CNOT(0, 3), Z(1), X(3), RZ(-0.4, 1)])
    text = c.dump()
    assert text.splitlines()[:4] == ["H 0", "RX 1.5707963 2", "ZZ 0.2 0 1", "CNOT 0 3"]
    assert parse_circuit(text, 4) == c


def test_execute_examples():
    plus = prepare_pure_state(ket("0"), ket("1"), "u")
    assert execute(plus) == pytest.approx(1.0)
    assert execute(plus, NoiseModel(readout_flip=0.1)) == pytest.approx(0.8)
    assert execute(Circuit(1)) == pytest.approx(0.0, abs=1e-15)


def test_readout_shots_agree_with_exact():
    plus = prepare_pure_state(ket("0"), ket("1"), "u")
    value = execute(plus, NoiseModel(readout_flip=0.1), ExecutionMode(shots=1_000_000, seed=3))
    # std of the mean is sqrt(1 - 0.8^2) / 1000
    assert abs(value - 0.8) < 3 * 0.6 / 1000


def test_shot_noise_scales_as_inverse_sqrt():
    for shots in (100, 1600):
        values = [execute(Circuit(1), mode=ExecutionMode(shots=shots, seed=s)) for s in range(400)]
        assert np.std(values, ddof=1) == pytest.approx(1 / math.sqrt(shots), rel=0.15)


def test_shot_mode_converges_to_exact():
    c = prepare_pure_state(ket("010"), ket("111"), "v") + trotter_circuit(
        HamiltonianParams(1, -1, 0.3), Lattice(3), 0.6, 0.1
    )
    exact = execute(c)
    for shots in (400, 10_000):
        values = np.array([execute(c, mode=ExecutionMode(shots=shots, seed=s)) for s in range(50)])
        sem = values.std(ddof=1) / math.sqrt(len(values))
        assert abs(values.mean() - exact) < 3 * sem


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.sampled_from([0.05, 0.1, 0.2]))
def test_readout_factorization(seed, p):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    a, b = rng.integers(0, 1 << n, 2)
    branch = "diagonal" if a == b else str(rng.choice(["u", "v"]))
    c = prepare_pure_state(SpinBasisState(int(a), n), SpinBasisState(int(b), n), branch)
    c = c + trotter_circuit(HamiltonianParams(*rng.normal(size=3)), Lattice(n), 0.4, 0.1)
    assert abs(execute(c, NoiseModel(readout_flip=p)) - (1 - 2 * p) * execute(c)) < 1e-10


def test_angle_bias_is_applied():
    biased = NoiseModel(angle_bias=0.1)
    assert np.allclose(circuit_unitary(Circuit(1, [RX(0.5, 0)]), biased), textbook("RX", 0.6))
    linear = NoiseModel(angle_bias_linear=0.5)
    assert np.allclose(circuit_unitary(Circuit(1, [RZ(0.4, 0)]), linear), textbook("RZ", 0.6))
    # fixed gates are untouched
    assert np.allclose(circuit_unitary(Circuit(1, [H(0)]), biased), textbook("H"))
