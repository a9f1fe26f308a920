"""Batch kernels, first-passage walks, tail and moment estimators."""

from fractions import Fraction

import numpy as np
import pytest

from chainshift import (ChainSpec, TargetMeasure, Trajectory, coin_chain,
                        solve_composite, solve_tstar, solve_tvisit,
                        three_state_chain)
from chainshift import rng
from chainshift.errors import ExcessCensoring, TargetChargesStart
from chainshift.montecarlo import (estimate_moment, estimate_tail,
                                   excursion_increment_check,
                                   first_passage_oracle, first_passage_pmf,
                                   moment_flags_from_values,
                                   sample_first_passage, sample_stopping_times,
                                   validate_increment_law)
from chainshift.rng import StreamPool, replica_generator

F = Fraction
COIN3 = coin_chain(F(1, 3))
NU_HEAD = TargetMeasure.dirac("head")
THREE = three_state_chain(F(1, 3))
NU3 = TargetMeasure.dirac("3")


class TestStreams:
    def test_pool_matches_fresh_generator(self):
        pool = StreamPool(77)
        for rep, role in [(0, 0), (5, 1), (123456, 2)]:
            a = replica_generator(77, rep, role).random(16)
            b = pool.generator(rep, role).random(16)
            assert np.array_equal(a, b)

    def test_pool_integers_match(self):
        pool = StreamPool(3)
        a = replica_generator(3, 9, rng.FORWARD).integers(0, 1000, 16)
        b = pool.generator(9, rng.FORWARD).integers(0, 1000, 16)
        assert np.array_equal(a, b)

    def test_roles_are_independent_streams(self):
        a = replica_generator(1, 0, rng.FORWARD).random(8)
        b = replica_generator(1, 0, rng.BACKWARD).random(8)
        assert not np.array_equal(a, b)


class TestKernelEquivalence:
    """Batch kernels must reproduce the per-trajectory solvers bit for bit."""

    def test_blockwise_tstar(self):
        batch = sample_stopping_times(COIN3, "tail", NU_HEAD, "tstar",
                                      50_000, 64, 42)
        for r in range(64):
            traj = Trajectory(COIN3, "tail", master_seed=42, replica=r)
            res = solve_tstar(traj, "tail", NU_HEAD, 50_000)
            assert batch.T[r] == res.value
            if not res.censored:
                assert COIN3.states[batch.landing[r]] == res.landing_state

    def test_sync_tstar(self):
        batch = sample_stopping_times(THREE, "1", NU3, "tstar", 50_000, 64, 42)
        for r in range(64):
            traj = Trajectory(THREE, "1", master_seed=42, replica=r)
            assert batch.T[r] == solve_tstar(traj, "1", NU3, 50_000).value

    def test_sync_composite_and_tvisit(self):
        batch = sample_stopping_times(THREE, "1", NU3, "composite",
                                      50_000, 48, 11)
        for r in range(48):
            traj = Trajectory(THREE, "1", master_seed=11, replica=r)
            assert batch.T[r] == solve_composite(traj, "1", NU3, 50_000).value
        batch = sample_stopping_times(THREE, "1", TargetMeasure.dirac("1"),
                                      "tvisit", 50_000, 48, 11,
                                      solver_params={"r": 3})
        for r in range(48):
            traj = Trajectory(THREE, "1", master_seed=11, replica=r)
            assert batch.T[r] == solve_tvisit(traj, "1", 3, cap=50_000).value

    def test_walk_kernel(self):
        spec = ChainSpec.srw_z()
        nu = TargetMeasure.dirac(1)
        batch = sample_stopping_times(spec, 0, nu, "tstar", 100_000, 32, 5)
        for r in range(32):
            traj = Trajectory(spec, 0, master_seed=5, replica=r)
            assert batch.T[r] == solve_tstar(traj, 0, nu, 100_000).value

    def test_threads_do_not_change_results(self):
        a = sample_stopping_times(COIN3, "tail", NU_HEAD, "tstar",
                                  20_000, 10_000, 3, threads=1)
        b = sample_stopping_times(COIN3, "tail", NU_HEAD, "tstar",
                                  20_000, 10_000, 3, threads=4)
        assert np.array_equal(a.T, b.T)
        assert np.array_equal(a.censored, b.censored)

    def test_replica_offset_is_consistent(self):
        whole = sample_stopping_times(COIN3, "tail", NU_HEAD, "tstar",
                                      20_000, 100, 9)
        part = sample_stopping_times(COIN3, "tail", NU_HEAD, "tstar",
                                     20_000, 40, 9, replica0=60)
        assert np.array_equal(whole.T[60:], part.T)

    def test_target_charging_start_rejected(self):
        with pytest.raises(TargetChargesStart):
            sample_stopping_times(COIN3, "tail", TargetMeasure.dirac("tail"),
                                  "tstar", 100, 10, 0)


class TestFirstPassage:
    def test_law_validation(self):
        with pytest.raises(ValueError):
            validate_increment_law({1: F(1, 2), -2: F(1, 2)})  # mean != 0
        with pytest.raises(ValueError):
            validate_increment_law({1: F(2, 3), -1: F(2, 3)})  # not a law

    def test_exact_pmf_fair_walk(self):
        pmf = first_passage_pmf({1: F(1, 2), -1: F(1, 2)}, 8)
        assert pmf[1] == F(1, 2)
        assert pmf[2] == F(1, 4)
        assert pmf[3] == 0
        assert pmf[4] == F(1, 16)   # the only path is +1,+1,-1,-1

    def test_exact_pmf_skipfree_drops(self):
        # increments +1 w.p. 2/3 and -2 w.p. 1/3
        pmf = first_passage_pmf({1: F(2, 3), -2: F(1, 3)}, 4)
        assert pmf[1] == F(1, 3)
        assert pmf[2] == F(2, 9)

    def test_monte_carlo_matches_enumeration(self):
        law = {1: 0.5, -1: 0.5}
        batch = sample_first_passage(law, 1_000, 40_000, 32)
        pmf = first_passage_pmf({1: F(1, 2), -1: F(1, 2)}, 4)
        for n in (1, 2, 4):
            phat = float((batch.T == n).mean())
            p = float(pmf[n])
            se = np.sqrt(p * (1 - p) / batch.n)
            assert abs(phat - p) <= 3 * se + 1e-9

    def test_deterministic_trivial_law(self):
        batch = sample_first_passage({0: F(1)}, 100, 16, 5)
        assert np.all(batch.T == 1)   # S_1 = 0 <= 0

    def test_fair_walk_slope(self):
        est = first_passage_oracle({1: 0.5, -1: 0.5}, 10_000, 60_000, 777)
        assert abs(est.slope + 0.5) < 0.1

    def test_excursion_walk_inequality(self):
        checked = excursion_increment_check(COIN3, "tail", NU_HEAD,
                                            50_000, 150, 21)
        assert checked > 100
        checked = excursion_increment_check(THREE, "1", NU3, 50_000, 100, 22)
        assert checked > 60


class TestTailEstimate:
    def test_survival_is_exact_tail(self):
        batch = sample_stopping_times(COIN3, "tail", NU_HEAD, "tstar",
                                      10_000, 3_000, 13)
        est = estimate_tail(COIN3, "tail", NU_HEAD, "tstar", 10_000, 3_000, 13,
                            fit_lo=10)
        for g, s in zip(est.grid, est.survival):
            assert s == (batch.T > g).mean()
        assert np.all(np.diff(est.survival) <= 0)

    def test_coin_slope(self):
        est = estimate_tail(coin_chain(F(1, 2)), "tail", NU_HEAD, "tstar",
                            100_000, 20_000, 999)
        assert abs(est.slope + 0.5) < 0.1

    def test_walk_slope(self):
        est = estimate_tail(ChainSpec.srw_z(), 0, TargetMeasure.dirac(1),
                            "tstar", 100_000, 5_000, 999)
        assert abs(est.slope + 0.25) < 0.10

    def test_visit_solver_step_survival(self):
        spec = ChainSpec.from_matrix(("a",), [["1"]])
        batch = sample_stopping_times(spec, "a", TargetMeasure.dirac("a"),
                                      "tvisit", 100, 50, 1,
                                      solver_params={"r": 1})
        assert np.all(batch.T == 1)

    def test_excess_censoring(self):
        # cap below the median stop: two thirds of replicas stay censored
        with pytest.raises(ExcessCensoring):
            estimate_tail(COIN3, "tail", NU_HEAD, "tstar", 1, 2_000, 999)


class TestMomentEstimate:
    def test_beta_zero_is_one(self):
        est = estimate_moment(COIN3, "tail", NU_HEAD, "tstar", 0.0, "T^beta",
                              10_000, 2_000, 5)
        assert all(m == 1.0 for _, m in est.checkpoints)

    def test_flags_from_synthetic_values(self):
        flat = np.full(4_000, 3.0)
        _, growths, total, div, fin = moment_flags_from_values(flat, 4_000,
                                                               0.05, 0.20)
        assert fin and not div and total == 0
        rising = np.concatenate([np.full(2_000, 1.0), np.full(2_000, 3.0)])
        _, growths, total, div, fin = moment_flags_from_values(rising, 4_000,
                                                               0.05, 0.20)
        assert div and not fin

    def test_finite_moment_stabilizes(self):
        est = estimate_moment(coin_chain(F(1, 2)), "tail", NU_HEAD, "tstar",
                              0.4, "T^beta", 10**7, 20_000, 424242)
        assert est.finite_flag and not est.divergence_flag

    def test_green_functional_runs(self):
        est = estimate_moment(THREE, "1", NU3, "tstar", 0.4, "a(T)^beta",
                              100_000, 4_000, 31)
        assert est.checkpoints[-1][1] > 0
        assert est.functional == "a(T)^beta"

    def test_censored_annotation(self):
        est = estimate_moment(coin_chain(F(1, 2)), "tail", NU_HEAD, "tstar",
                              0.4, "T^beta", 2_000, 4_000, 11)
        assert est.censored > 0
        assert est.lower_bound_only

    def test_records_serialize(self):
        est = estimate_moment(COIN3, "tail", NU_HEAD, "tstar", 0.4, "T^beta",
                              10_000, 2_000, 5)
        rec = est.to_record()
        assert rec["beta"] == 0.4 and len(rec["checkpoints"]) == 3
