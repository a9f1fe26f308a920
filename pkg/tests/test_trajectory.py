"""Two-sided trajectory materialization and reproducibility."""

from fractions import Fraction

import numpy as np
import pytest

from chainshift import (ChainSpec, Trajectory, coin_chain, sample_backward,
                        sample_forward, three_state_chain)
from chainshift.errors import FixtureExhausted, WindowNotMaterialized
from helpers import binomial_4se

F = Fraction


def test_single_state_constant_path():
    spec = ChainSpec.from_matrix(("a",), [["1"]])
    traj = Trajectory(spec, "a", master_seed=1)
    sample_forward(traj, 5)
    sample_backward(traj, -5)
    assert [traj.state(n) for n in range(-5, 6)] == ["a"] * 11


def test_origin_is_start_state():
    traj = Trajectory(three_state_chain(F(1, 3)), "2", master_seed=3)
    assert traj.state(0) == "2"


def test_deterministic_replay():
    a = Trajectory(coin_chain(F(1, 2)), "tail", master_seed=42, replica=9)
    b = Trajectory(coin_chain(F(1, 2)), "tail", master_seed=42, replica=9)
    a.extend_forward(10)
    b.extend_forward(10)
    assert [a.state(n) for n in range(11)] == [b.state(n) for n in range(11)]


def test_append_only_both_directions():
    traj = Trajectory(coin_chain(F(1, 3)), "tail", master_seed=5, replica=2)
    traj.extend_forward(20)
    traj.extend_backward(-20)
    before = [traj.state(n) for n in range(-20, 21)]
    traj.extend_forward(200)
    traj.extend_backward(-200)
    assert [traj.state(n) for n in range(-20, 21)] == before


def test_chunking_does_not_change_path():
    a = Trajectory(three_state_chain(F(1, 3)), "1", master_seed=8)
    b = Trajectory(three_state_chain(F(1, 3)), "1", master_seed=8)
    a.extend_forward(100)
    for k in range(0, 101, 7):
        b.extend_forward(k)
    b.extend_forward(100)
    assert [a.state(n) for n in range(101)] == [b.state(n) for n in range(101)]


def test_replicas_diverge():
    a = Trajectory(coin_chain(F(1, 2)), "tail", master_seed=42, replica=0)
    b = Trajectory(coin_chain(F(1, 2)), "tail", master_seed=42, replica=1)
    a.extend_forward(64)
    b.extend_forward(64)
    assert [a.state(n) for n in range(65)] != [b.state(n) for n in range(65)]


def test_window_not_materialized():
    traj = Trajectory(coin_chain(F(1, 2)), "tail")
    with pytest.raises(WindowNotMaterialized):
        traj.state(3)


def test_valid_transitions_forward_and_backward():
    spec = three_state_chain(F(1, 3))
    traj = Trajectory(spec, "1", master_seed=11)
    traj.ensure(-300, 300)
    p = spec.rows
    d = spec.dual()
    for n in range(-299, 300):
        i, j = traj.raw(n - 1), traj.raw(n)
        if n >= 1:
            assert p[i][j] > 0
        else:
            # backward draw: j was sampled from i's future value by the dual
            assert d.transition(j, i) > 0


def test_forward_one_step_frequencies():
    # one million one-step draws from state 2 match its transition row
    spec = three_state_chain(F(1, 3))
    cum = spec.cum_rows
    rng = np.random.default_rng(13)
    u = rng.random(1_000_000)
    nxt = (u[:, None] >= cum[spec.index("2")]).sum(axis=1)
    freq = np.bincount(nxt, minlength=3) / u.size
    for j, s in enumerate(spec.states):
        assert binomial_4se(freq[j], float(spec.rows[1][j]), u.size)


def test_backward_one_step_frequencies():
    spec = three_state_chain(F(1, 3))
    cum = spec.dual_cum_rows
    rng = np.random.default_rng(14)
    u = rng.random(1_000_000)
    nxt = (u[:, None] >= cum[spec.index("2")]).sum(axis=1)
    freq = np.bincount(nxt, minlength=3) / u.size
    d = spec.dual()
    for j in range(3):
        assert binomial_4se(freq[j], float(d.transition(1, j)), u.size)


def test_trajectory_frequencies_match_kernel():
    # long path: empirical transition counts out of each state within 4 SE
    spec = three_state_chain(F(1, 3))
    traj = Trajectory(spec, "1", master_seed=21).extend_forward(200_000)
    raw = np.array(traj.raw_window(0, 200_000))
    for i in range(3):
        sel = np.nonzero(raw[:-1] == i)[0]
        nxt = raw[sel + 1]
        for j in range(3):
            phat = (nxt == j).mean()
            assert binomial_4se(phat, float(spec.rows[i][j]), sel.size)


def test_srw_z_steps_are_unit():
    traj = Trajectory(ChainSpec.srw_z(), 0, master_seed=31)
    traj.ensure(-500, 500)
    vals = [traj.state(n) for n in range(-500, 501)]
    assert all(abs(b - a) == 1 for a, b in zip(vals, vals[1:]))
    assert traj.state(0) == 0


def test_srw_z2_steps_are_neighbors():
    traj = Trajectory(ChainSpec.srw_z2(), (0, 0), master_seed=32)
    traj.ensure(-200, 200)
    vals = [traj.state(n) for n in range(-200, 201)]
    for a, b in zip(vals, vals[1:]):
        assert abs(b[0] - a[0]) + abs(b[1] - a[1]) == 1


def test_fixture_path_and_exhaustion():
    spec = coin_chain(F(1, 2))
    traj = Trajectory.fixed(spec, ["head", "tail", "head", "head"], origin_index=1)
    assert traj.window == (-1, 2)
    assert traj.state(-1) == "head" and traj.state(0) == "tail"
    with pytest.raises(FixtureExhausted):
        traj.extend_forward(5)
    with pytest.raises(FixtureExhausted):
        traj.extend_backward(-2)
