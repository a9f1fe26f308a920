"""Feasibility decision, stopping-time solvers, allocation views."""

from fractions import Fraction

import numpy as np
import pytest

from chainshift import (ChainSpec, TargetMeasure, Trajectory, allocation_view,
                        check_feasibility, coin_chain, pattern_chain,
                        solve_composite, solve_trand, solve_tstar,
                        solve_tvisit, three_state_chain)
from chainshift.errors import (InfeasibleTarget, TargetChargesStart,
                               UnknownState)
from helpers import (binomial_4se, fixed_coin_path, tau_bruteforce,
                     trand_bruteforce, tstar_bruteforce)

F = Fraction


class TestFeasibility:
    def test_extra_head_iff_inverse_integer(self):
        # feasible exactly when (1-p)/p is an integer
        for p, expected in ((F(1, 2), True), (F(1, 3), True), (F(2, 5), False)):
            spec = coin_chain(p)
            v = check_feasibility(spec, "tail", TargetMeasure.dirac("head"))
            assert v.feasible is expected, p

    def test_inverse_extra_head_always_infeasible(self):
        # target = the invariant coin law itself
        for p in (F(1, 2), F(1, 3)):
            spec = coin_chain(p)
            nu = TargetMeasure({"tail": 1 - p, "head": p})
            v = check_feasibility(spec, "tail", nu)
            assert not v.feasible
            assert v.reason == "target_charges_start"

    def test_pattern_mixed_target_iff_half(self):
        # embedding a mixed two-symbol pattern must work from every possible
        # revealed start; that holds iff p = 1/2
        for p, expected in ((F(1, 2), True), (F(1, 3), False), (F(2, 3), False)):
            spec = pattern_chain(p)
            nu = TargetMeasure.dirac("ht")
            ok = all(
                check_feasibility(spec, start, nu).feasible
                for start in ("tt", "th", "hh")
            )
            assert ok is expected, p

    def test_srw_diracs_only(self):
        spec = ChainSpec.srw_z()
        assert check_feasibility(spec, 0, TargetMeasure.dirac(5)).feasible
        assert check_feasibility(spec, 0, TargetMeasure.dirac(-2)).feasible
        mix = TargetMeasure({1: F(1, 2), 2: F(1, 2)})
        v = check_feasibility(spec, 0, mix)
        assert not v.feasible and v.reason == "non_integer"

    def test_charging_start_needs_dirac(self):
        spec = coin_chain(F(1, 2))
        assert check_feasibility(spec, "tail", TargetMeasure.dirac("tail")).feasible
        half = TargetMeasure({"tail": F(1, 2), "head": F(1, 2)})
        v = check_feasibility(spec, "tail", half)
        assert not v.feasible and v.reason == "target_charges_start"
        assert v.offending_state == "tail"

    def test_witness_values(self):
        spec = coin_chain(F(1, 3))
        v = check_feasibility(spec, "tail", TargetMeasure.dirac("head"))
        assert v.witness["head"] == (F(2), True)

    def test_unknown_state(self):
        spec = coin_chain(F(1, 2))
        with pytest.raises(UnknownState):
            check_feasibility(spec, "tail", TargetMeasure.dirac("edge"))


class TestTStar:
    def test_hand_path_th(self):
        traj = fixed_coin_path("TH")
        res = solve_tstar(traj, "tail", TargetMeasure.dirac("head"), cap=1)
        assert res.time == 1 and not res.censored
        assert res.landing_state == "head"

    def test_hand_path_tthh(self):
        traj = fixed_coin_path("TTHH")
        res = solve_tstar(traj, "tail", TargetMeasure.dirac("head"), cap=3)
        assert res.time == 3

    def test_never_zero_when_target_avoids_start(self):
        for seed in range(20):
            traj = Trajectory(coin_chain(F(1, 3)), "tail", master_seed=seed)
            res = solve_tstar(traj, "tail", TargetMeasure.dirac("head"), cap=10_000)
            assert res.time >= 1

    def test_matches_bruteforce_scanner_coin(self):
        nu = TargetMeasure.dirac("head")
        for seed in range(60):
            traj = Trajectory(coin_chain(F(1, 3)), "tail", master_seed=seed)
            res = solve_tstar(traj, "tail", nu, cap=5_000)
            expect = tstar_bruteforce(
                Trajectory(coin_chain(F(1, 3)), "tail", master_seed=seed),
                "tail", nu, cap=min(res.value + 5, 5_000))
            assert res.time == expect, seed

    def test_matches_bruteforce_scanner_three_state(self):
        spec = three_state_chain(F(1, 3))
        nu = TargetMeasure.dirac("3")
        for seed in range(40):
            traj = Trajectory(spec, "1", master_seed=seed)
            res = solve_tstar(traj, "1", nu, cap=5_000)
            expect = tstar_bruteforce(
                Trajectory(spec, "1", master_seed=seed), "1", nu,
                cap=min(res.value + 5, 5_000))
            assert res.time == expect, seed

    def test_minimality_no_earlier_crossing(self):
        nu = TargetMeasure.dirac("head")
        for seed in range(20):
            traj = Trajectory(coin_chain(F(1, 2)), "tail", master_seed=seed)
            res = solve_tstar(traj, "tail", nu, cap=20_000)
            assert tstar_bruteforce(traj, "tail", nu, res.time - 1) is None

    def test_infeasible_rejected(self):
        traj = Trajectory(coin_chain(F(2, 5)), "tail", master_seed=1)
        with pytest.raises(InfeasibleTarget):
            solve_tstar(traj, "tail", TargetMeasure.dirac("head"), cap=10)

    def test_dirac_at_start_rejected(self):
        traj = Trajectory(coin_chain(F(1, 2)), "tail", master_seed=1)
        with pytest.raises(TargetChargesStart):
            solve_tstar(traj, "tail", TargetMeasure.dirac("tail"), cap=10)

    def test_censoring(self):
        traj = Trajectory.fixed(coin_chain(F(1, 2)),
                                ["tail", "tail", "tail", "tail"])
        res = solve_tstar(traj, "tail", TargetMeasure.dirac("head"), cap=3)
        assert res.censored and res.time is None and res.value == 3

    def test_record_shape(self):
        traj = fixed_coin_path("TH")
        res = solve_tstar(traj, "tail", TargetMeasure.dirac("head"), cap=5)
        assert res.to_record() == {"solver": "tstar", "T": 1, "censored": False,
                                   "seed": 0, "replica": 0}


class TestTRand:
    def test_integer_case_matches_tstar_for_any_u(self):
        nu = TargetMeasure.dirac("head")
        for seed in range(25):
            base = Trajectory(coin_chain(F(1, 3)), "tail", master_seed=seed)
            t_star = solve_tstar(base, "tail", nu, cap=5_000).time
            for u in (0.1, 0.5, 0.9):
                traj = Trajectory(coin_chain(F(1, 3)), "tail", master_seed=seed)
                assert solve_trand(traj, "tail", nu, u, cap=5_000).time == t_star

    def test_non_integer_case_depends_on_u(self):
        # p = 2/5: ball ratio 3/2, so the deficit walks 1, 2, 1/2, -1 on
        # T,T,H,H; the level 1/2 separates u = .9 (stops there) from u = .1
        nu = TargetMeasure.dirac("head")
        path = "TTHH"
        lo = solve_trand(fixed_coin_path(path, p=F(2, 5)), "tail", nu, 0.1, cap=3)
        hi = solve_trand(fixed_coin_path(path, p=F(2, 5)), "tail", nu, 0.9, cap=3)
        assert lo.time == trand_bruteforce(
            fixed_coin_path(path, p=F(2, 5)), "tail", nu, 0.1, cap=3) == 3
        assert hi.time == trand_bruteforce(
            fixed_coin_path(path, p=F(2, 5)), "tail", nu, 0.9, cap=3) == 2
        assert lo.time != hi.time

    def test_matches_bruteforce_random_paths(self):
        spec = coin_chain(F(2, 5))
        nu = TargetMeasure.dirac("head")
        rng = np.random.default_rng(5)
        for seed in range(30):
            u = float(rng.uniform(0.01, 0.99))
            got = solve_trand(Trajectory(spec, "tail", master_seed=seed),
                              "tail", nu, u, cap=3_000).time
            expect = trand_bruteforce(
                Trajectory(spec, "tail", master_seed=seed), "tail", nu, u,
                cap=min((got or 3_000) + 3, 3_000))
            assert got == expect

    def test_u_near_zero_equals_tstar(self):
        nu = TargetMeasure.dirac("head")
        traj = fixed_coin_path("TTHH")
        res = solve_trand(traj, "tail", nu, 1e-12, cap=3)
        assert res.time == 3


class TestTVisit:
    def test_single_state_rth_visit(self):
        spec = ChainSpec.from_matrix(("a",), [["1"]])
        traj = Trajectory(spec, "a", master_seed=1)
        assert solve_tvisit(traj, "a", 3).time == 3

    def test_first_return_coin(self):
        traj = fixed_coin_path("THHT")
        assert solve_tvisit(traj, "tail", 1).time == 3

    def test_visit_counts_compose(self):
        traj = Trajectory(coin_chain(F(1, 2)), "tail", master_seed=17)
        t1 = solve_tvisit(traj, "tail", 1).time
        t2 = solve_tvisit(traj, "tail", 2).time
        # second visit = first visit of the path re-rooted at the first
        count = sum(1 for n in range(t1 + 1, t2 + 1)
                    if traj.state(n) == "tail")
        assert count == 1 and traj.state(t2) == "tail"

    def test_requires_start_at_target(self):
        traj = fixed_coin_path("TH")
        with pytest.raises(TargetChargesStart):
            solve_tvisit(traj, "head", 1)


class TestComposite:
    def test_lower_bound(self):
        nu = TargetMeasure.dirac("head")
        for seed in range(20):
            traj = Trajectory(coin_chain(F(1, 2)), "tail", master_seed=seed)
            res = solve_composite(traj, "tail", nu, cap=50_000)
            if not res.censored:
                assert res.time >= res.params["first_return"] >= 1

    def test_two_stage_hand_path(self):
        # T,H,T,H: first return to tail at 2, then the scanner needs one step
        traj = fixed_coin_path("THTH")
        res = solve_composite(traj, "tail", TargetMeasure.dirac("head"), cap=3)
        assert res.params["first_return"] == 2
        assert res.time == 3

    def test_marginal_law_monte_carlo(self):
        # landing state must be distributed per the target (Dirac: always head)
        nu = TargetMeasure.dirac("head")
        n, hits = 2_000, 0
        for seed in range(n):
            traj = Trajectory(coin_chain(F(1, 3)), "tail",
                              master_seed=909, replica=seed)
            res = solve_composite(traj, "tail", nu, cap=100_000)
            if not res.censored:
                hits += res.landing_state == "head"
        assert hits / n > 0.99


class TestAllocationView:
    def test_tau_zero_equals_tstar(self):
        nu = TargetMeasure.dirac("head")
        for seed in range(40):
            traj = Trajectory(coin_chain(F(1, 2)), "tail", master_seed=seed)
            res = solve_tstar(traj, "tail", nu, cap=100_000)
            view = allocation_view(traj, (0, res.time), "tail", nu)
            assert view.tau(0) == res.time

    def test_hand_path_tthh(self):
        traj = fixed_coin_path("TTHH")
        view = allocation_view(traj, (0, 3), "tail", TargetMeasure.dirac("head"))
        assert view.matches == {0: 3, 1: 2}
        assert view.frontier == ()

    def test_translation_covariance(self):
        spec = coin_chain(F(1, 2))
        states = ["head", "tail", "tail", "head", "head", "tail"]
        nu = TargetMeasure.dirac("head")
        base = Trajectory.fixed(spec, states, origin_index=0)
        shifted = Trajectory.fixed(spec, states, origin_index=2)
        v0 = allocation_view(base, (0, 5), "tail", nu)
        v2 = allocation_view(shifted, (-2, 3), "tail", nu)
        assert v2.matches == {k - 2: t - 2 for k, t in v0.matches.items()}

    def test_frontier_reported(self):
        traj = fixed_coin_path("TTH")
        view = allocation_view(traj, (0, 2), "tail", TargetMeasure.dirac("head"))
        assert view.matches == {1: 2}
        assert view.frontier == (0,)

    def test_against_per_site_bruteforce(self):
        nu = TargetMeasure.dirac("3")
        spec = three_state_chain(F(1, 3))
        for seed in range(20):
            traj = Trajectory(spec, "1", master_seed=seed)
            traj.extend_forward(60)
            view = allocation_view(traj, (0, 60), "1", nu)
            for k in range(61):
                if traj.state(k) != "1":
                    continue
                expect = tau_bruteforce(traj, k, "1", nu, 60)
                if expect is None:
                    assert k in view.frontier
                else:
                    assert view.tau(k) == expect
