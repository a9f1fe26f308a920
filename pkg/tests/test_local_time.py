"""Ledgers, weighted local times, ball configurations."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainshift import (TargetMeasure, Trajectory, balls, coin_chain, ledger,
                        three_state_chain, weighted_local_time)
from chainshift.errors import NonIntegerBallCount, WindowNotMaterialized
from helpers import fixed_coin_path

F = Fraction


class TestLedger:
    def test_coin_path_counts_and_normalization(self):
        traj = fixed_coin_path("TH")
        led = ledger(traj, (0, 1))
        assert led.count("tail") == 1 and led.count("head") == 1
        assert led.local_time("tail") == 2  # 1 visit / (m = 1/2)
        assert led.local_time("head") == 2

    def test_unvisited_state_zero(self):
        traj = fixed_coin_path("TTTT")
        led = ledger(traj, (1, 2))
        assert led.local_time("head") == 0

    def test_additivity_of_disjoint_windows(self):
        traj = fixed_coin_path("TTHHTHTH")
        a = ledger(traj, (0, 3))
        b = ledger(traj, (4, 7))
        whole = ledger(traj, (0, 7))
        assert (a + b).counts == whole.counts
        assert (a + b).size == whole.size

    def test_overlapping_windows_rejected(self):
        traj = fixed_coin_path("TTHH")
        with pytest.raises(ValueError):
            ledger(traj, (0, 2)) + ledger(traj, (2, 3))

    def test_window_must_be_materialized(self):
        traj = fixed_coin_path("TTHH")
        with pytest.raises(WindowNotMaterialized):
            ledger(traj, (0, 9))

    def test_total_counts_equal_window_size(self):
        traj = Trajectory(three_state_chain(F(1, 3)), "1", master_seed=4)
        traj.extend_forward(99)
        led = ledger(traj, (0, 99))
        assert sum(led.counts.values()) == 100


class TestWeightedLocalTime:
    def test_dirac_head_on_tthh(self):
        traj = fixed_coin_path("TTHH")
        led = ledger(traj, (0, 3))
        assert weighted_local_time(led, TargetMeasure.dirac("head")) == 4

    def test_disjoint_support_zero(self):
        traj = fixed_coin_path("TTTT")
        led = ledger(traj, (0, 3))
        assert weighted_local_time(led, TargetMeasure.dirac("head")) == 0

    def test_uniform_two_states(self):
        traj = fixed_coin_path("TH")
        led = ledger(traj, (0, 1))
        nu = TargetMeasure({"tail": F(1, 2), "head": F(1, 2)})
        assert weighted_local_time(led, nu) == 2


class TestBalls:
    def test_coin_white_and_black(self):
        traj = fixed_coin_path("TTHH")
        cfg = balls(traj, (0, 3), "tail", TargetMeasure.dirac("head"))
        assert cfg.white == [True, True, False, False]
        assert cfg.count == [0, 0, 1, 1]
        assert cfg.colour == [None, None, "head", "head"]

    def test_three_state_two_balls(self):
        # m proportional to (2/3, 1, 1/3): ratio m_1/m_3 = 2
        spec = three_state_chain(F(1, 3))
        traj = Trajectory.fixed(spec, ["1", "2", "3", "2"], origin_index=0)
        cfg = balls(traj, (0, 3), "1", TargetMeasure.dirac("3"))
        assert cfg.white == [True, False, False, False]
        assert cfg.count == [0, 0, 2, 0]

    def test_zero_weight_colour_gets_no_balls(self):
        spec = three_state_chain(F(1, 2))
        traj = Trajectory.fixed(spec, ["1", "2", "3"], origin_index=0)
        cfg = balls(traj, (0, 2), "1", TargetMeasure.dirac("3"))
        assert cfg.count[1] == 0  # state 2 carries no target weight

    def test_non_integer_ball_count_raises(self):
        traj = Trajectory(coin_chain(F(2, 5)), "tail", master_seed=2)
        traj.extend_forward(3)
        with pytest.raises(NonIntegerBallCount):
            balls(traj, (0, 3), "tail", TargetMeasure.dirac("head"))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000), st.integers(0, 40), st.integers(1, 40))
    def test_ball_ledger_equivalence(self, seed, lo_off, width):
        # (white - coloured) on a window equals m_i (L^i - L^nu) exactly
        spec = three_state_chain(F(1, 3))
        traj = Trajectory(spec, "1", master_seed=seed)
        a, b = lo_off - 20, lo_off - 20 + width
        traj.ensure(a, b)
        nu = TargetMeasure.dirac("3")
        cfg = balls(traj, (a, b), "1", nu)
        led = ledger(traj, (a, b))
        m_i = spec.stationary_weight("1")
        lhs = cfg.total_white - cfg.total_coloured
        rhs = m_i * (led.local_time("1") - weighted_local_time(led, nu))
        assert lhs == rhs

    def test_translation_covariance(self):
        spec = coin_chain(F(1, 2))
        states = ["tail", "head", "tail", "tail", "head", "head"]
        base = Trajectory.fixed(spec, states, origin_index=0)
        shifted = Trajectory.fixed(spec, states, origin_index=3)
        led_base = ledger(base, (3, 5))
        led_shifted = ledger(shifted, (0, 2))
        assert led_base.counts == led_shifted.counts
