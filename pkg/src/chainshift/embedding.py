"""Feasibility decision and stopping-time constructions.

A target nu can be embedded from start state i exactly when every ratio
m_i nu_j / m_j is an integer; if nu charges the start state the only feasible
target is the Dirac mass at i itself, handled by the visit-count solver.

The workhorse solver scans the running integer deficit

    D(n) = m_i * (L_i([0,n]) - L_nu([0,n]))
         = (#white balls in [0,n]) - (#coloured balls in [0,n])

updated in O(1) per step, and stops at the first n >= 0 with D(n) <= 0.
The randomized variant relaxes the threshold to a uniform draw u, which
reproduces the deterministic time whenever the integer condition holds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import floor, lcm

from .chains import ChainSpec
from .errors import (FixtureExhausted, InfeasibleTarget, TargetChargesStart,
                     WindowNotMaterialized)
from .local_time import TargetMeasure, ball_ratio, integer_ball_counts
from .trajectory import Trajectory

_SCAN_BLOCK = 256
_SCAN_BLOCK_MAX = 1 << 16


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    witness: dict          # support state -> (ratio, is_integer)
    reason: str            # "all_integer" | "non_integer" | "target_charges_start"
    offending_state: object = None

    def __bool__(self) -> bool:
        return self.feasible


def check_feasibility(spec: ChainSpec, i, nu: TargetMeasure) -> FeasibilityVerdict:
    """Exact decision: every m_i nu_j / m_j must be an integer."""
    spec.require_state(i)
    nu.validate_states(spec)

    if nu.get(i) != 0 and not nu.is_dirac_at(i):
        ratio = ball_ratio(spec, i, i, nu)
        return FeasibilityVerdict(
            feasible=False,
            witness={i: (ratio, False)},
            reason="target_charges_start",
            offending_state=i,
        )

    witness = {}
    offending = None
    for j in nu.support:
        r = ball_ratio(spec, i, j, nu)
        if isinstance(r, Fraction):
            ok = r.denominator == 1
        else:
            ok = abs(r - round(r)) <= 1e-9
        witness[j] = (r, ok)
        if not ok and offending is None:
            offending = j
    if offending is not None:
        return FeasibilityVerdict(False, witness, "non_integer", offending)
    return FeasibilityVerdict(True, witness, "all_integer")


@dataclass(frozen=True)
class StoppingResult:
    time: int | None           # None when censored
    censored: bool
    cap: int
    solver: str
    steps_scanned: int
    landing_state: object = None
    replica: int = 0
    seed: int = 0
    params: dict = field(default_factory=dict)

    @property
    def value(self) -> int:
        """Time if found, else the cap (the censored lower bound)."""
        return self.cap if self.censored else self.time

    def to_record(self) -> dict:
        return {
            "solver": self.solver,
            "T": self.time,
            "censored": self.censored,
            "seed": self.seed,
            "replica": self.replica,
        }


def _deficit_table(spec: ChainSpec, i, nu: TargetMeasure):
    """Ball-count increments keyed by raw state, plus the white raw state."""
    counts = integer_ball_counts(spec, i, nu)
    if spec.is_lattice:
        white = i
        drops = dict(counts)
    else:
        white = spec.index(i)
        drops = {spec.index(j): c for j, c in counts.items()}
    return white, drops


def _extend_clamped(traj: Trajectory, n: int, upto: int) -> int:
    """Extend forward to ``upto``; fixtures clamp to their recorded end.

    Raises FixtureExhausted only when the scan has consumed the whole fixture
    (n beyond the last recorded index)."""
    try:
        traj.extend_forward(upto)
        return upto
    except FixtureExhausted:
        if traj.hi < n:
            raise
        return traj.hi


def _require_tstar_preconditions(spec, i, nu):
    verdict = check_feasibility(spec, i, nu)
    if nu.get(i) != 0:
        raise TargetChargesStart(
            "target charges the start state; use the visit-count solver")
    if not verdict.feasible:
        raise InfeasibleTarget(
            f"integer condition fails at {verdict.offending_state!r}")
    return verdict


def solve_tstar(traj: Trajectory, i, nu: TargetMeasure, cap: int,
                _start: int = 0) -> StoppingResult:
    """Minimal n >= 0 with L_i([0,n]) <= L_nu([0,n]), scanning incrementally.

    Extends the trajectory on demand; censors at ``cap``.
    """
    spec = traj.spec
    _require_tstar_preconditions(spec, i, nu)
    white, drops = _deficit_table(spec, i, nu)
    deficit = 0
    n = _start
    block = _SCAN_BLOCK
    while n <= cap:
        upto = _extend_clamped(traj, n, min(n + block - 1, cap))
        while n <= upto:
            s = traj.raw(n)
            if s == white:
                deficit += 1
            else:
                deficit -= drops.get(s, 0)
            if deficit <= 0:
                landing = traj.state(n)
                assert nu.get(landing) != 0, "stop must land on target support"
                return StoppingResult(
                    time=n - _start, censored=False, cap=cap, solver="tstar",
                    steps_scanned=n - _start + 1, landing_state=landing,
                    replica=traj.replica, seed=traj.master_seed)
            n += 1
        block = min(block * 2, _SCAN_BLOCK_MAX)
    return StoppingResult(
        time=None, censored=True, cap=cap, solver="tstar",
        steps_scanned=cap - _start + 1, replica=traj.replica,
        seed=traj.master_seed)


def solve_trand(traj: Trajectory, i, nu: TargetMeasure, u: float,
                cap: int) -> StoppingResult:
    """Minimal n with L_i([0,n]) - L_nu([0,n]) <= u / m_i.

    Works without the integer condition; when the condition does hold the
    result coincides with the deterministic solver for every u in (0, 1).
    """
    spec = traj.spec
    spec.require_state(i)
    nu.validate_states(spec)
    if nu.get(i) != 0:
        raise TargetChargesStart("randomized solver still requires nu_i = 0")
    if not 0 < u < 1:
        raise ValueError(f"u must lie in (0,1), got {u!r}")

    ratios = {j: ball_ratio(spec, i, j, nu) for j in nu.support}
    if all(isinstance(r, Fraction) for r in ratios.values()):
        q = lcm(*(r.denominator for r in ratios.values())) if ratios else 1
        if spec.is_lattice:
            white = i
            drops = {j: int(r * q) for j, r in ratios.items()}
        else:
            white = spec.index(i)
            drops = {spec.index(j): int(r * q) for j, r in ratios.items()}
        threshold = floor(Fraction(u) * q)   # D_int <= u*q, D_int integer
        gain = q
    else:
        if spec.is_lattice:
            white = i
            drops = {j: float(r) for j, r in ratios.items()}
        else:
            white = spec.index(i)
            drops = {spec.index(j): float(r) for j, r in ratios.items()}
        threshold = u
        gain = 1.0

    deficit = 0
    n = 0
    block = _SCAN_BLOCK
    while n <= cap:
        upto = _extend_clamped(traj, n, min(n + block - 1, cap))
        while n <= upto:
            s = traj.raw(n)
            if s == white:
                deficit += gain
            else:
                deficit -= drops.get(s, 0)
            if deficit <= threshold:
                return StoppingResult(
                    time=n, censored=False, cap=cap, solver="trand",
                    steps_scanned=n + 1, landing_state=traj.state(n),
                    replica=traj.replica, seed=traj.master_seed,
                    params={"u": u})
            n += 1
        block = min(block * 2, _SCAN_BLOCK_MAX)
    return StoppingResult(
        time=None, censored=True, cap=cap, solver="trand",
        steps_scanned=cap + 1, replica=traj.replica, seed=traj.master_seed,
        params={"u": u})


def solve_tvisit(traj: Trajectory, i, r: int, cap: int = 10**7) -> StoppingResult:
    """Time of the r-th visit to state i after time zero (target delta_i)."""
    if r < 1:
        raise ValueError(f"visit count must be >= 1, got {r}")
    spec = traj.spec
    spec.require_state(i)
    if traj.start_state != i:
        raise TargetChargesStart("visit-count solver requires X_0 = i")
    white = i if spec.is_lattice else spec.index(i)
    seen = 0
    n = 1
    block = _SCAN_BLOCK
    while n <= cap:
        upto = _extend_clamped(traj, n, min(n + block - 1, cap))
        while n <= upto:
            if traj.raw(n) == white:
                seen += 1
                if seen == r:
                    return StoppingResult(
                        time=n, censored=False, cap=cap, solver="tvisit",
                        steps_scanned=n, landing_state=i,
                        replica=traj.replica, seed=traj.master_seed,
                        params={"r": r})
            n += 1
        block = min(block * 2, _SCAN_BLOCK_MAX)
    return StoppingResult(
        time=None, censored=True, cap=cap, solver="tvisit",
        steps_scanned=cap, replica=traj.replica, seed=traj.master_seed,
        params={"r": r})


def solve_composite(traj: Trajectory, i, nu: TargetMeasure,
                    cap: int) -> StoppingResult:
    """Two-stage alternative solution: shift to the first return to i, then
    run the deterministic scanner on the re-rooted path.

    Both stages are unbiased shifts, so the composition embeds nu; it is
    deliberately wasteful, which makes it a useful comparison arm for the
    optimality check.
    """
    spec = traj.spec
    _require_tstar_preconditions(spec, i, nu)
    first_return = solve_tvisit(traj, i, 1, cap=cap)
    if first_return.censored:
        return StoppingResult(
            time=None, censored=True, cap=cap, solver="composite",
            steps_scanned=cap, replica=traj.replica, seed=traj.master_seed)
    t1 = first_return.time
    tail = solve_tstar(traj, i, nu, cap, _start=t1)
    if tail.censored:
        return StoppingResult(
            time=None, censored=True, cap=cap, solver="composite",
            steps_scanned=cap, replica=traj.replica, seed=traj.master_seed)
    total = t1 + tail.time
    if total > cap:
        return StoppingResult(
            time=None, censored=True, cap=cap, solver="composite",
            steps_scanned=cap, replica=traj.replica, seed=traj.master_seed)
    return StoppingResult(
        time=total, censored=False, cap=cap, solver="composite",
        steps_scanned=total + 1, landing_state=tail.landing_state,
        replica=traj.replica, seed=traj.master_seed,
        params={"first_return": t1})


@dataclass(frozen=True)
class AllocationView:
    """Forward matches tau(k) for the white sites of a window.

    ``matches`` maps each matched white site to its coloured destination;
    ``frontier`` lists white sites whose match lies beyond the window.
    """

    window: tuple[int, int]
    matches: dict
    frontier: tuple

    def tau(self, k: int) -> int:
        return self.matches[k]

    def destinations(self) -> dict:
        """Coloured site -> list of white sites matched to it."""
        out: dict = {}
        for k, z in self.matches.items():
            out.setdefault(z, []).append(k)
        return out


def allocation_view(traj: Trajectory, window: tuple[int, int], i,
                    nu: TargetMeasure) -> AllocationView:
    """Per-site scanner matches: tau(k) = min{n >= k : deficit of [k,n] <= 0}.

    Runs the same deficit scan as the stopping-time solver from every white
    site of the window; scans never look past the window edge, so unmatched
    white sites are reported as frontier.
    """
    a, b = window
    if a < traj.lo or b > traj.hi:
        raise WindowNotMaterialized(f"[{a},{b}] not materialized")
    spec = traj.spec
    _require_tstar_preconditions(spec, i, nu)
    white, drops = _deficit_table(spec, i, nu)
    raw = [traj.raw(n) for n in range(a, b + 1)]
    incr = [(1 if s == white else -drops.get(s, 0)) for s in raw]

    matches = {}
    frontier = []
    received: dict = {}
    for k in range(a, b + 1):
        if raw[k - a] != white:
            continue
        deficit = 0
        dest = None
        for n in range(k, b + 1):
            deficit += incr[n - a]
            if deficit <= 0:
                dest = n
                break
        if dest is None:
            frontier.append(k)
        else:
            matches[k] = dest
            received[dest] = received.get(dest, 0) + 1
            assert received[dest] <= drops.get(raw[dest - a], 0), \
                "coloured site over-matched"
    return AllocationView((a, b), matches, tuple(frontier))
