from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclic_urn.spectral import InvalidParameter, build_basis
from cyclic_urn.urn import (
    Composition,
    UrnConfig,
    ball_count_ok,
    one_step_mean,
    replicate_seed,
    shift_initial_type,
    simulate,
    simulate_ensemble,
    step,
)


def test_step_examples():
    c = Composition.initial(3)
    assert step(c, 0).counts == (1, 1, 0)
    c2 = step(step(c, 0), 1)
    assert c2.counts == (1, 1, 1) and c2.time == 2
    with pytest.raises(IndexError):
        step(c, 1)


def test_step_uses_type_order():
    c = Composition((2, 1, 0), 2)
    assert [step(c, d).counts for d in range(3)] == [(2, 2, 0), (2, 2, 0), (2, 1, 1)]


@given(st.integers(2, 9), st.lists(st.integers(0, 10**6), max_size=40))
def test_ball_count_invariant(m, draws):
    c = Composition.initial(m, 1 % m)
    for d in draws:
        c = step(c, d % (c.time + 1))
        assert ball_count_ok(c)


@given(st.integers(2, 6), st.integers(0, 6), st.data())
@settings(max_examples=40, deadline=None)
def test_one_step_mean_is_linear_drift(m, n, data):
    c = Composition.initial(m)
    for _ in range(n):
        c = step(c, data.draw(st.integers(0, c.time)))
    mean = one_step_mean(c)
    r = [Fraction(x) for x in c.counts]
    expect = [r[t] + r[(t - 1) % m] / (n + 1) for t in range(m)]
    assert mean == expect


def test_config_validation():
    with pytest.raises(InvalidParameter):
        UrnConfig(1)
    with pytest.raises(InvalidParameter):
        UrnConfig(3, initial_type=3)
    with pytest.raises(InvalidParameter):
        UrnConfig(3, steps=5, checkpoints=(4, 2))
    with pytest.raises(InvalidParameter):
        UrnConfig(3, steps=5, checkpoints=(6,))


def test_simulate_is_reproducible_and_consistent():
    cfg = UrnConfig(7, 0, 20000, 12345, (10, 1000, 20000))
    a, b = simulate(cfg), simulate(cfg)
    assert a.final == b.final
    assert a.times == [10, 1000, 20000]
    basis = build_basis(7)
    for snap in a.snapshots:
        assert ball_count_ok(snap.composition)
        direct = basis.project(np.array(snap.composition.counts, dtype=float))
        assert np.abs(snap.projections - direct).max() <= 1e-9 * np.linalg.norm(direct)


def test_ensemble_replays_single_replicates():
    counts = simulate_ensemble(5, [50, 400], 6, seed=9)
    for r in range(6):
        traj = simulate(UrnConfig(5, 0, 400, int(replicate_seed(9, r)), (50, 400)))
        assert list(counts[r, 0]) == list(traj.at(50).composition.counts)
        assert list(counts[r, 1]) == list(traj.final.counts)


def test_replicate_seed_derivation():
    ss = np.random.SeedSequence(3, spawn_key=(4,))
    assert replicate_seed(3, 4) == ss.generate_state(1, dtype=np.uint64)[0]


def test_shift_initial_type_rotates():
    traj = simulate(UrnConfig(6, 0, 300, 1, (300,)))
    sh = shift_initial_type(traj, 2)
    assert sh.config.initial_type == 2
    assert sh.final.counts == tuple(np.roll(traj.final.counts, 2).tolist())
    basis = build_basis(6)
    direct = basis.project(np.array(sh.final.counts, dtype=float))
    assert np.allclose(sh.at(300).projections, direct, atol=1e-8)


def test_ensemble_mean_matches_exact_mean():
    from cyclic_urn.moments import exact_mean_R

    counts = simulate_ensemble(4, [200], 4000, seed=2)[:, 0, :]
    se = counts.std(axis=0, ddof=1) / np.sqrt(4000)
    assert np.all(np.abs(counts.mean(axis=0) - exact_mean_R(4, 200)) < 4 * se)
