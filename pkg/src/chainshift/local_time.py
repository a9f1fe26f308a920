"""Normalized visit-count ledgers and their ball-configuration encoding.

The ledger of a window counts visits per state and normalizes by the
stationary weight: L_j = (#visits to j) / m_j.  A target measure nu turns a
window into balls: one white ball at each site visiting the start state i,
and (m_i / m_j) nu_j coloured balls at each site visiting j.  Under the
integer feasibility condition every site's ball count is an exact integer,
which is what makes the matching machinery combinatorial.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

from .chains import ChainSpec, Scalar, parse_scalar
from .errors import NonIntegerBallCount, UnknownState, WindowNotMaterialized
from .trajectory import Trajectory

FLOAT_INTEGRALITY_TOL = 1e-9


class TargetMeasure:
    """Probability measure on the state space with finite support."""

    def __init__(self, weights: dict):
        parsed = {s: parse_scalar(w) for s, w in weights.items()}
        self.weights = {s: w for s, w in parsed.items() if w != 0}
        if any(w < 0 for w in parsed.values()):
            raise ValueError("target weights must be non-negative")
        self.is_rational = all(isinstance(w, Fraction) for w in self.weights.values())
        total = sum(self.weights.values())
        if self.is_rational:
            if total != 1:
                raise ValueError(f"target weights sum to {total}, not 1")
        elif abs(float(total) - 1.0) > 1e-12:
            raise ValueError(f"target weights sum to {total!r}")

    @classmethod
    def dirac(cls, state) -> "TargetMeasure":
        return cls({state: Fraction(1)})

    @property
    def support(self) -> tuple:
        return tuple(self.weights)

    def get(self, state) -> Scalar:
        return self.weights.get(state, Fraction(0))

    def __getitem__(self, state) -> Scalar:
        return self.get(state)

    def validate_states(self, spec: ChainSpec):
        for s in self.weights:
            if not spec.contains(s):
                raise UnknownState(f"target charges unknown state {s!r}")

    def is_dirac_at(self, state) -> bool:
        return self.weights.get(state) == 1

    def __repr__(self):
        return f"TargetMeasure({self.weights})"


@dataclass(frozen=True)
class LocalTimeLedger:
    """Visit counts over a union of disjoint index windows.

    ``windows`` is a tuple of disjoint closed intervals; ``counts`` maps state
    labels to raw visit counts; ``stationary`` supplies the 1/m_j weights.
    """

    windows: tuple
    counts: dict
    stationary: object  # mapping state -> weight

    @property
    def size(self) -> int:
        return sum(b - a + 1 for a, b in self.windows)

    def count(self, state) -> int:
        return self.counts.get(state, 0)

    def local_time(self, state) -> Scalar:
        c = self.counts.get(state, 0)
        if c == 0:
            return Fraction(0)
        m = self.stationary[state]
        return Fraction(c) / m if isinstance(m, Fraction) else c / m

    def __add__(self, other: "LocalTimeLedger") -> "LocalTimeLedger":
        spans = sorted(self.windows + other.windows)
        for (a1, b1), (a2, b2) in zip(spans, spans[1:]):
            if a2 <= b1:
                raise ValueError("ledgers overlap; additivity needs disjoint windows")
        merged = Counter(self.counts)
        merged.update(other.counts)
        return LocalTimeLedger(tuple(spans), dict(merged), self.stationary)


def ledger(traj: Trajectory, window: tuple[int, int]) -> LocalTimeLedger:
    """Exact visit counts of the trajectory over [a, b]."""
    a, b = window
    if a < traj.lo or b > traj.hi:
        raise WindowNotMaterialized(f"[{a},{b}] not materialized")
    counts = Counter(traj.state(n) for n in range(a, b + 1))
    return LocalTimeLedger(((a, b),), dict(counts), traj.spec.stationary)


def weighted_local_time(ledg: LocalTimeLedger, nu: TargetMeasure) -> Scalar:
    """L_nu over the ledger's windows: sum_j nu_j L_j."""
    total = Fraction(0)
    for s, w in nu.weights.items():
        c = ledg.counts.get(s, 0)
        if c:
            total = total + w * ledg.local_time(s)
    return total


def ball_ratio(spec: ChainSpec, i, j, nu: TargetMeasure) -> Scalar:
    """Coloured-ball count at a j-site: (m_i / m_j) nu_j."""
    w = nu.get(j)
    if w == 0:
        return Fraction(0)
    mi = spec.stationary_weight(i)
    mj = spec.stationary_weight(j)
    if isinstance(mi, Fraction) and isinstance(mj, Fraction) and isinstance(w, Fraction):
        return mi * w / mj
    return float(mi) * float(w) / float(mj)


def integer_ball_counts(spec: ChainSpec, i, nu: TargetMeasure) -> dict:
    """Exact integer ball count per support state; NonIntegerBallCount if the
    feasibility condition fails.  Float chains round within 1e-9 and warn."""
    out = {}
    for j in nu.support:
        r = ball_ratio(spec, i, j, nu)
        if isinstance(r, Fraction):
            if r.denominator != 1:
                raise NonIntegerBallCount(f"ball count {r} at state {j!r}")
            out[j] = int(r)
        else:
            rounded = round(r)
            if abs(r - rounded) > FLOAT_INTEGRALITY_TOL:
                raise NonIntegerBallCount(f"ball count {r!r} at state {j!r}")
            if r != rounded:
                warnings.warn(
                    f"ball count {r!r} at state {j!r} rounded to {rounded}",
                    stacklevel=2)
            out[j] = int(rounded)
    return out


@dataclass
class BallConfig:
    """White/coloured balls over a window.

    Per site k: ``white[k-a]`` flags a visit to the start state, and
    ``count[k-a]`` holds the integer coloured-ball count with colour
    ``colour[k-a]`` (None off the target support).
    """

    window: tuple[int, int]
    start_state: object
    white: list
    count: list
    colour: list
    counts_by_state: dict = field(repr=False, default_factory=dict)

    @property
    def lo(self) -> int:
        return self.window[0]

    @property
    def hi(self) -> int:
        return self.window[1]

    def white_sites(self) -> list[int]:
        a = self.lo
        return [a + k for k, w in enumerate(self.white) if w]

    def coloured_sites(self) -> list[tuple[int, int]]:
        a = self.lo
        return [(a + k, c) for k, c in enumerate(self.count) if c > 0]

    def count_at(self, site: int) -> int:
        return self.count[site - self.lo]

    def is_white(self, site: int) -> bool:
        return self.white[site - self.lo]

    def colour_at(self, site: int):
        return self.colour[site - self.lo]

    def increments(self) -> list[int]:
        """Per-site deficit steps: +1 at white sites, -count at coloured."""
        return [(1 if w else 0) - c for w, c in zip(self.white, self.count)]

    @property
    def total_white(self) -> int:
        return sum(1 for w in self.white if w)

    @property
    def total_coloured(self) -> int:
        return sum(self.count)


def balls(traj: Trajectory, window: tuple[int, int], i,
          nu: TargetMeasure) -> BallConfig:
    """Ball configuration of the window for start state i and target nu."""
    a, b = window
    if a < traj.lo or b > traj.hi:
        raise WindowNotMaterialized(f"[{a},{b}] not materialized")
    nu.validate_states(traj.spec)
    traj.spec.require_state(i)
    counts = integer_ball_counts(traj.spec, i, nu)
    white, cnt, col = [], [], []
    nu_i_positive = nu.get(i) != 0
    for n in range(a, b + 1):
        s = traj.state(n)
        w = (s == i)
        c = counts.get(s, 0)
        white.append(w)
        cnt.append(c)
        col.append(s if c > 0 else None)
        if w and c > 0 and not nu_i_positive:
            raise AssertionError("white and coloured balls co-located")
    return BallConfig((a, b), i, white, cnt, col, counts)
