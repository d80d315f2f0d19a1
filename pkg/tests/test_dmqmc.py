import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erhoq import dmqmc
from erhoq.dmqmc import DmqmcParams, EventCounts, Psip, PsipPopulation
from erhoq.errors import PopulationExplosion, PopulationFileError, ZeroTrace
from erhoq.oracle import dense_hamiltonian, thermal_state
from erhoq.spin_model import HamiltonianParams, Lattice, SpinBasisState

UP, DOWN = 0, 1


def single_entry(n, row, col, weight):
    return PsipPopulation.from_weights(n, {(row, col): weight}, seed=7)


def test_params_validation():
    with pytest.raises(ValueError):
        DmqmcParams(1.0, 0.3, 10)
    with pytest.raises(ValueError):
        DmqmcParams(-1.0, 0.1, 10)
    with pytest.raises(ValueError):
        DmqmcParams(1.0, 0.1, 0)
    assert DmqmcParams(1.0, 0.04, 10).n_steps == 25
    assert DmqmcParams(1.0, 0.1, 5000).blocks == 100
    assert DmqmcParams(1.0, 0.1, 7).blocks == 7


def test_init_single_psip():
    pop = dmqmc.init_population(DmqmcParams(0.0, 0.1, 1, seed=3), 5)
    ((key, w),) = pop.weights.items()
    assert key[0] == key[1] and w == 1
    assert pop.beta == 0.0


def test_init_is_uniform_on_diagonal():
    counts = []
    for seed in range(200):
        pop = dmqmc.init_population(DmqmcParams(0.0, 0.1, 1000, seed=seed), 1)
        w = pop.weights
        assert set(w) <= {(UP, UP), (DOWN, DOWN)}
        assert sum(w.values()) == 1000
        counts.append(w.get((UP, UP), 0))
    # mean of 200 binomial(1000, 1/2) draws has std ~1.1
    assert abs(np.mean(counts) - 500) < 3 * np.sqrt(250 / 200)


def test_init_is_deterministic():
    a = dmqmc.init_population(DmqmcParams(0.0, 0.1, 500, seed=11), 4)
    b = dmqmc.init_population(DmqmcParams(0.0, 0.1, 500, seed=11), 4)
    assert dmqmc.format_population(a) == dmqmc.format_population(b)


def test_trace_examples():
    pop = PsipPopulation.from_weights(2, {(0, 0): 3, (0, 1): -2, (2, 2): 1})
    assert dmqmc.trace_estimate(pop) == 4
    fresh = dmqmc.init_population(DmqmcParams(0.0, 0.1, 123), 3)
    assert dmqmc.trace_estimate(fresh) == 123
    with pytest.raises(ZeroTrace):
        dmqmc.trace_estimate(PsipPopulation.from_weights(1, {(0, 1): 2}))


def test_population_unchanged_without_events():
    params = DmqmcParams(2.0, 0.5, 400, seed=1)
    start = dmqmc.init_population(params, 2)
    end = dmqmc.run(params, HamiltonianParams(0, 0, 0), Lattice(2))
    assert end.weights == start.weights
    assert end.beta == 2.0


def test_beta_zero_run_is_init():
    params = DmqmcParams(0.0, 0.1, 300, seed=2)
    assert dmqmc.run(params, HamiltonianParams(1, 1, 0), Lattice(3)).weights == \
        dmqmc.init_population(params, 3).weights


def _rate_within(count, trials, p):
    return abs(count - trials * p) <= 3 * np.sqrt(trials * p * (1 - p))


def test_spawn_rate_and_child_sign():
    trials, db = 100_000, 0.1
    params = DmqmcParams(db, db, 1)
    stats = EventCounts()
    pop = dmqmc.step(single_entry(1, UP, UP, trials), params, HamiltonianParams(0, 1, 0), Lattice(1), stats)
    assert stats.psips == trials
    assert _rate_within(stats.column_spawns, trials, 0.5 * db)
    assert _rate_within(stats.row_spawns, trials, 0.5 * db)
    assert stats.deaths == stats.clones == 0
    w = pop.weights
    # element -mu_x = -1, so children keep the parent's sign
    assert w[(DOWN, UP)] == stats.column_spawns
    assert w[(UP, DOWN)] == stats.row_spawns
    assert w[(UP, UP)] == trials


def test_negative_parent_spawns_negative_child():
    pop = dmqmc.step(
        single_entry(1, UP, UP, -10_000), DmqmcParams(0.2, 0.2, 1), HamiltonianParams(0, 1, 0), Lattice(1)
    )
    assert pop.weights[(DOWN, UP)] < 0


def test_positive_element_flips_child_sign():
    pop = dmqmc.step(
        single_entry(1, UP, UP, 10_000), DmqmcParams(0.2, 0.2, 1), HamiltonianParams(0, -1, 0), Lattice(1)
    )
    assert pop.weights[(DOWN, UP)] < 0 and pop.weights[(UP, DOWN)] < 0


def test_clone_and_death_rates():
    trials, db = 100_000, 0.1
    params, h0, lat = DmqmcParams(db, db, 1), HamiltonianParams(0, 0, 1), Lattice(1)
    stats = EventCounts()
    pop = dmqmc.step(single_entry(1, UP, UP, trials), params, h0, lat, stats)
    assert stats.deaths == 0 and _rate_within(stats.clones, trials, db)
    assert pop.weights[(UP, UP)] == trials + stats.clones

    stats = EventCounts()
    pop = dmqmc.step(single_entry(1, DOWN, DOWN, trials), params, h0, lat, stats)
    assert stats.clones == 0 and _rate_within(stats.deaths, trials, db)
    assert pop.weights[(DOWN, DOWN)] == trials - stats.deaths


def test_stochastic_rounding_above_one():
    # spawn probability 1.5 per psip: one child always, a second half the time
    trials = 20_000
    stats = EventCounts()
    dmqmc.step(single_entry(1, UP, UP, trials), DmqmcParams(3.0, 3.0, 1), HamiltonianParams(0, 1, 0), Lattice(1), stats)
    extra = stats.column_spawns - trials
    assert 0 <= extra <= trials
    assert _rate_within(extra, trials, 0.5)


def test_mixed_events_on_one_entry():
    # (up, down) under -sigma_x - sigma_z has zero diagonal sum: spawns only
    stats = EventCounts()
    dmqmc.step(single_entry(1, UP, DOWN, 5000), DmqmcParams(0.1, 0.1, 1), HamiltonianParams(0, 1, 1), Lattice(1), stats)
    assert stats.deaths == stats.clones == 0
    assert stats.column_spawns > 0 and stats.row_spawns > 0


def test_population_explosion():
    params = DmqmcParams(5.0, 0.5, 100, max_population=10_000)
    with pytest.raises(PopulationExplosion, match="delta_beta"):
        dmqmc.run(params, HamiltonianParams(1, 1, 1), Lattice(3))


def test_step_rejects_empty_population():
    empty = PsipPopulation(1, [], [], [], [])
    with pytest.raises(ValueError):
        dmqmc.step(empty, DmqmcParams(0.1, 0.1, 1), HamiltonianParams(), Lattice(1))


def test_run_is_deterministic_and_thread_independent():
    params = DmqmcParams(1.0, 0.05, 3000, seed=5)
    h0, lat = HamiltonianParams(1, 1, 0.3), Lattice(3)
    one = dmqmc.run(params, h0, lat, threads=1)
    four = dmqmc.run(params, h0, lat, threads=4)
    again = dmqmc.run(params, h0, lat, threads=1)
    assert dmqmc.format_population(one) == dmqmc.format_population(four) == dmqmc.format_population(again)
    assert one.beta == 1.0


def test_annihilation_leaves_no_zero_or_duplicate_entries():
    pop = dmqmc.run(DmqmcParams(1.0, 0.1, 2000, seed=3), HamiltonianParams(1, 1, 0), Lattice(3))
    assert np.all(pop.weight != 0)
    keys = list(zip(pop.block.tolist(), pop.row.tolist(), pop.col.tolist()))
    assert len(keys) == len(set(keys))


def test_without_annihilation_signs_are_kept_apart():
    params = DmqmcParams(1.0, 0.1, 500, seed=3, n_blocks=1, annihilation=False)
    pop = dmqmc.run(params, HamiltonianParams(1, 1, 1), Lattice(2))
    annihilated = dmqmc.run(
        DmqmcParams(1.0, 0.1, 500, seed=3, n_blocks=1), HamiltonianParams(1, 1, 1), Lattice(2)
    )
    assert pop.total_weight >= annihilated.total_weight
    keys = list(zip(pop.row.tolist(), pop.col.tolist(), (pop.weight > 0).tolist()))
    assert len(keys) == len(set(keys))


def test_hermiticity_in_expectation():
    h0, lat = HamiltonianParams(1, 1, 0.5), Lattice(2)
    samples = []
    for seed in range(150):
        pop = dmqmc.run(DmqmcParams(1.0, 0.1, 200, seed=seed, n_blocks=1), h0, lat)
        m = np.zeros((4, 4))
        for (r, c), w in pop.weights.items():
            m[r, c] = w
        samples.append(m - m.T)
    samples = np.array(samples)
    mean = samples.mean(axis=0)
    err = samples.std(axis=0, ddof=1) / np.sqrt(len(samples))
    off = ~np.eye(4, dtype=bool) & (err > 0)
    assert np.all(np.abs(mean[off]) <= 4 * err[off])


def test_small_system_tracks_discretized_thermal_state():
    # seed average against the Euler-step product, which is what the step samples
    h0, lat = HamiltonianParams(1, 1, 0), Lattice(2)
    params = [DmqmcParams(1.0, 0.1, 500, seed=s, n_blocks=1) for s in range(100)]
    mats = []
    for p in params:
        m = np.zeros((4, 4))
        for (r, c), w in dmqmc.run(p, h0, lat).weights.items():
            m[r, c] = w
        mats.append(m / np.trace(m))
    mats = np.array(mats)
    ref = thermal_state(dense_hamiltonian(h0, lat), 1.0, 0.1).real
    ref /= np.trace(ref)
    err = mats.std(axis=0, ddof=1) / np.sqrt(len(mats))
    assert np.all(np.abs(mats.mean(axis=0) - ref) <= 3.5 * err + 1e-12)


# --- file format ---------------------------------------------------------------


def test_file_round_trip(tmp_path):
    pop = dmqmc.run(DmqmcParams(0.5, 0.1, 400, seed=9), HamiltonianParams(1, 1, 0), Lattice(3))
    path = tmp_path / "pop.txt"
    digest = dmqmc.write_population(pop, path)
    back = dmqmc.read_population(path)
    assert back.weights == pop.weights
    assert (back.n, back.beta, back.seed, back.n_initial, back.n_blocks) == (3, 0.5, 9, 400, pop.n_blocks)
    assert dmqmc.format_population(back) == path.read_text()
    assert len(digest) == 64


def test_file_format_layout():
    pop = PsipPopulation.from_weights(2, {(0b01, 0b01): 3, (0b01, 0b10): -1}, beta=1.0, seed=4, n_initial=3)
    assert dmqmc.format_population(pop) == (
        "N=2\nbeta=1.0\nseed=4\nn_initial=3\nn_blocks=1\n10 10 +3\n10 01 -1\n"
    )


def test_plain_three_column_file_parses():
    pop = dmqmc.parse_population("N=1\nbeta=1.0\nseed=0\nn_initial=2\n0 0 +2\n1 0 -1\n")
    assert pop.weights == {(0, 0): 2, (1, 0): -1}
    assert pop.n_blocks == 1


@pytest.mark.parametrize(
    "text, line",
    [
        ("N=1\nbeta=1.0\nseed=0\nn_initial=1\n0 0 x\n", 5),
        ("N=2\nbeta=1.0\nseed=0\nn_initial=1\n0 00 +1\n", 5),
        ("N=1\nbeta=1.0\nseed=0\nn_initial=1\n0 0 +1\n0 1 0\n", 6),
        ("N=1\nbogus=3\n", 2),
        ("0 0 +1\n", 1),
        ("N=1\nbeta=1.0\nseed=0\nn_initial=1\n0 0 +1 3\n", 5),
    ],
)
def test_malformed_file_names_line(text, line):
    with pytest.raises(PopulationFileError) as info:
        dmqmc.parse_population(text)
    assert info.value.line_number == line
    assert f"line {line}" in str(info.value)


def test_missing_header():
    with pytest.raises(PopulationFileError, match="seed"):
        dmqmc.parse_population("N=1\nbeta=1.0\nn_initial=1\n0 0 +1\n")


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(1, 4),
    entries=st.dictionaries(
        st.tuples(st.integers(0, 15), st.integers(0, 15)), st.integers(-5, 5).filter(bool), max_size=12
    ),
)
def test_format_parse_round_trip(n, entries):
    mask = (1 << n) - 1
    weights: dict = {}
    for (r, c), w in entries.items():
        key = (r & mask, c & mask)
        weights[key] = weights.get(key, 0) + w
    pop = PsipPopulation.from_weights(n, weights, beta=0.25, seed=1, n_initial=1)
    assert dmqmc.parse_population(dmqmc.format_population(pop)).weights == pop.weights


def test_psip_expansion():
    pop = PsipPopulation.from_weights(1, {(0, 0): 2, (1, 0): -1})
    psips = list(pop.psips())
    assert len(psips) == 3
    assert PsipPopulation.from_psips(psips).weights == pop.weights
    with pytest.raises(ValueError):
        Psip(SpinBasisState(0, 1), SpinBasisState(0, 2), 1)
