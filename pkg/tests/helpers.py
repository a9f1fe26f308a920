"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the incremental-deficit fast paths of
the package: stopping times are recomputed from full ledgers at every step,
walks are enumerated exhaustively, and linear algebra is redone in floats.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from chainshift import (TargetMeasure, Trajectory, coin_chain, ledger,
                        three_state_chain, weighted_local_time)
from chainshift.local_time import balls as make_balls
from chainshift.transport import find_excursion_around


def tstar_bruteforce(traj: Trajectory, i, nu: TargetMeasure, cap: int):
    """Re-evaluate the defining ledger inequality from scratch at every n."""
    traj.extend_forward(cap)
    for n in range(cap + 1):
        led = ledger(traj, (0, n))
        if led.local_time(i) <= weighted_local_time(led, nu):
            return n
    return None


def trand_bruteforce(traj: Trajectory, i, nu: TargetMeasure, u: float, cap: int):
    """Full-ledger scan of the randomized threshold condition."""
    traj.extend_forward(cap)
    m_i = traj.spec.stationary_weight(i)
    bound = Fraction(u) / m_i if isinstance(m_i, Fraction) else u / m_i
    for n in range(cap + 1):
        led = ledger(traj, (0, n))
        if led.local_time(i) - weighted_local_time(led, nu) <= bound:
            return n
    return None


def tau_bruteforce(traj: Trajectory, k: int, i, nu: TargetMeasure, hi: int):
    """Per-site scanner via full ledgers, limited to the window top."""
    for n in range(k, hi + 1):
        led = ledger(traj, (k, n))
        if led.local_time(i) <= weighted_local_time(led, nu):
            return n
    return None


def fixed_coin_path(symbols: str, p=Fraction(1, 2), origin: int = 0) -> Trajectory:
    """Fixture coin trajectory from a string like 'TTHH'."""
    spec = coin_chain(p)
    states = ["tail" if c in "tT" else "head" for c in symbols]
    return Trajectory.fixed(spec, states, origin_index=origin)


def random_coin_excursion(seed: int, p=Fraction(1, 2), max_size: int | None = None):
    """Complete excursion of a random coin path around the origin.

    Excursion sizes are heavy-tailed; with ``max_size`` set, seeds whose
    excursion is larger are deterministically re-salted so that quadratic
    matching tests stay fast."""
    spec = coin_chain(p)
    nu = TargetMeasure.dirac("head")
    salt = 0
    while True:
        traj = Trajectory(spec, "tail", master_seed=seed + (salt << 22), replica=0)
        exc = find_excursion_around(traj, 0, "tail", nu, cap=200_000)
        a, b = exc.interval
        if max_size is None or b - a + 1 <= max_size:
            return traj, "tail", nu, exc
        salt += 1


def random_three_state_excursion(seed: int, p=Fraction(1, 3),
                                 max_size: int | None = None):
    """Complete excursion of the three-state loop chain around the origin."""
    spec = three_state_chain(p)
    nu = TargetMeasure.dirac("3")
    salt = 0
    while True:
        traj = Trajectory(spec, "1", master_seed=seed + (salt << 22), replica=0)
        exc = find_excursion_around(traj, 0, "1", nu, cap=200_000)
        a, b = exc.interval
        if max_size is None or b - a + 1 <= max_size:
            return traj, "1", nu, exc
        salt += 1


def excursion_corpus(n: int, seed0: int = 1000, max_size: int = 400):
    """Mixed coin / three-state excursion corpus used by several suites."""
    out = []
    for k in range(n):
        if k % 2 == 0:
            out.append(random_coin_excursion(seed0 + k, max_size=max_size))
        else:
            out.append(random_three_state_excursion(seed0 + k, max_size=max_size))
    return out


def binomial_4se(phat: float, p: float, n: int) -> bool:
    """|phat - p| within four binomial standard errors (plus one-count slack
    so that zero-variance cells with tiny expected counts do not misfire)."""
    se = np.sqrt(max(p * (1 - p), 1e-12) / n)
    return abs(phat - p) <= 4 * se + 1.0 / n


def ball_multiset(cfg) -> tuple:
    return (tuple(cfg.white), tuple(cfg.count))
