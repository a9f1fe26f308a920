"""Finite-window transport rules: balance, matching, crossing repair, costs.

A transport rule distributes unit mass from every site of a window; in the
forward-only case mass moves from white sites to coloured sites to their
right, and non-white sites keep a self-loop.  Crossings (two flows that
straddle each other) can be repaired without breaking balance, repairs never
increase concave transport costs, and on a complete excursion the unique
crossing-free balancing rule is the greedy one-sided stable matching, which
is exactly the scanner allocation.

All weights are exact Fractions; the repair bookkeeping relies on
min/subtraction hitting exact zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from math import lcm

from mpmath import iv as _iv

from .embedding import AllocationView, _deficit_table
from .errors import (ExcessCensoring, FrontierMassPresent, NotACrossing,
                     UndecidableSign)
from .local_time import BallConfig, TargetMeasure, balls as make_balls
from .trajectory import Trajectory


class TransportRule:
    """Sparse non-negative weights theta(x, y) with unit row sums.

    ``weights`` maps (x, y) to a positive Fraction.  Destinations may lie
    outside the window (frontier mass); sources may not.
    """

    def __init__(self, window: tuple[int, int], weights: dict):
        self.window = window
        self.weights = {e: Fraction(w) for e, w in weights.items() if w != 0}
        lo, hi = window
        sums: dict = {}
        for (x, y), w in self.weights.items():
            if w < 0:
                raise ValueError(f"negative weight at {(x, y)}")
            if not lo <= x <= hi:
                raise ValueError(f"source {x} outside window {window}")
            sums[x] = sums.get(x, Fraction(0)) + w
        for x in range(lo, hi + 1):
            if sums.get(x, Fraction(0)) != 1:
                raise ValueError(f"row {x} sums to {sums.get(x, 0)}, not 1")

    @classmethod
    def _unchecked(cls, window, weights: dict) -> "TransportRule":
        """Internal: weights are already exact Fractions with unit row sums
        (repairs move mass within a row, so sums are preserved)."""
        self = cls.__new__(cls)
        self.window = window
        self.weights = weights
        return self

    # -- construction -----------------------------------------------------

    @classmethod
    def identity(cls, window: tuple[int, int]) -> "TransportRule":
        lo, hi = window
        return cls(window, {(x, x): Fraction(1) for x in range(lo, hi + 1)})

    @classmethod
    def from_allocation(cls, view: AllocationView,
                        balls: BallConfig) -> "TransportRule":
        """Indicator rule of an allocation: tau-edges at white sites,
        self-loops elsewhere.  The view must have no frontier."""
        if view.frontier:
            raise FrontierMassPresent(
                f"allocation has unmatched white sites {view.frontier}")
        lo, hi = view.window
        weights = {}
        for x in range(lo, hi + 1):
            if balls.is_white(x):
                weights[(x, view.tau(x))] = Fraction(1)
            else:
                weights[(x, x)] = Fraction(1)
        return cls(view.window, weights)

    # -- accessors ----------------------------------------------------------

    def mass(self, x: int, y: int) -> Fraction:
        return self.weights.get((x, y), Fraction(0))

    def out_edges(self, x: int) -> list:
        return [(y, w) for (xx, y), w in self.weights.items() if xx == x]

    def in_edges(self, y: int) -> list:
        return [(x, w) for (x, yy), w in self.weights.items() if yy == y]

    @property
    def forward_only(self) -> bool:
        return all(x <= y for (x, y) in self.weights)

    def frontier_edges(self, window=None) -> list:
        """Off-diagonal edges with exactly one endpoint inside ``window``."""
        lo, hi = window or self.window
        out = []
        for (x, y), w in self.weights.items():
            if x == y:
                continue
            if (lo <= x <= hi) != (lo <= y <= hi):
                out.append(((x, y), w))
        return out

    def replace(self, updates: dict) -> "TransportRule":
        """New rule with entries updated; mass-moving updates keep row sums."""
        weights = dict(self.weights)
        for e, w in updates.items():
            if w == 0:
                weights.pop(e, None)
            else:
                weights[e] = Fraction(w)
        return TransportRule._unchecked(self.window, weights)

    def to_adjacency(self) -> dict:
        edges = [[x, y, f"{w.numerator}/{w.denominator}"]
                 for (x, y), w in sorted(self.weights.items())]
        return {"window": list(self.window), "edges": edges}

    @classmethod
    def from_adjacency(cls, doc: dict) -> "TransportRule":
        weights = {(x, y): Fraction(w) for x, y, w in doc["edges"]}
        return cls(tuple(doc["window"]), weights)

    def __eq__(self, other) -> bool:
        return (isinstance(other, TransportRule)
                and self.window == other.window
                and self.weights == other.weights)

    def __repr__(self):
        return f"TransportRule(window={self.window}, edges={len(self.weights)})"


@dataclass(frozen=True)
class BalanceReport:
    balanced: bool
    first_violation: int | None
    sites_checked: int


def verify_balance(theta: TransportRule, traj: Trajectory, i,
                   nu: TargetMeasure, window: tuple[int, int]) -> BalanceReport:
    """Check sum_z theta(z, {a}) L_i(z) = L_nu(a) at every site of the window.

    Requires the window to carry no frontier mass (complete excursions).
    """
    if theta.frontier_edges(window):
        raise FrontierMassPresent(f"mass crosses the boundary of {window}")
    spec = traj.spec
    m_i = spec.stationary_weight(i)
    lo, hi = window
    incoming: dict = {}
    for (x, y), w in theta.weights.items():
        if lo <= y <= hi and traj.state(x) == i:
            incoming[y] = incoming.get(y, Fraction(0)) + w
    first_violation = None
    for z in range(lo, hi + 1):
        lhs = incoming.get(z, Fraction(0)) / m_i
        s = traj.state(z)
        rhs = nu.get(s) / spec.stationary_weight(s) if nu.get(s) != 0 else Fraction(0)
        if lhs != rhs:
            first_violation = z
            break
    return BalanceReport(first_violation is None, first_violation, hi - lo + 1)


def mass_received(theta: TransportRule, traj: Trajectory, mu_weights,
                  site: int):
    """Total mass arriving at ``site``: sum_k theta(k, site) L_mu(k)."""
    spec = traj.spec
    if isinstance(mu_weights, TargetMeasure):
        mu_weights = mu_weights.weights
    lo, hi = theta.window
    total = Fraction(0)
    for x, w in theta.in_edges(site):
        if not lo <= x <= hi:
            raise FrontierMassPresent(f"source {x} outside window {theta.window}")
        s = traj.state(x)
        mu = mu_weights.get(s, 0)
        if mu:
            total = total + w * mu / spec.stationary_weight(s)
    return total


# -- greedy stable matching ---------------------------------------------------


def greedy_match(balls: BallConfig) -> AllocationView:
    """One-sided stable matching by rounds: a white ball whose next occupied
    site to the right carries coloured balls is matched there; matched balls
    are removed and the rounds repeat.  Window-local: whites whose match would
    lie beyond the window stay unmatched and are reported as frontier.
    """
    whites = balls.white_sites()
    counts = {k: c for k, c in balls.coloured_sites()}
    matches: dict = {}
    remaining = list(whites)
    while True:
        occupied = sorted(set(remaining) | {s for s, c in counts.items() if c > 0})
        pos = {s: t for t, s in enumerate(occupied)}
        round_matches = []
        for k in remaining:
            t = pos[k] + 1
            if t < len(occupied):
                nxt = occupied[t]
                if counts.get(nxt, 0) > 0:
                    round_matches.append((k, nxt))
        if not round_matches:
            break
        for k, nxt in round_matches:
            matches[k] = nxt
            counts[nxt] -= 1
            remaining.remove(k)
    return AllocationView(balls.window, matches, tuple(remaining))


# -- crossings and repair -----------------------------------------------------


def find_crossings(theta: TransportRule) -> list[tuple[int, int, int, int]]:
    """All quadruples x < u < v < y with theta(x,v) > 0 and theta(u,y) > 0."""
    if not theta.forward_only:
        raise ValueError("crossing detection needs a forward-only rule")
    edges = sorted((x, y) for (x, y) in theta.weights if x < y)
    out = []
    for x, v in edges:
        for u, y in edges:
            if x < u < v < y:
                out.append((x, u, v, y))
    return out


def is_crossing(theta: TransportRule, quad: tuple[int, int, int, int]) -> bool:
    x, u, v, y = quad
    return (x < u < v < y and theta.mass(x, v) > 0 and theta.mass(u, y) > 0)


def repair_crossing(theta: TransportRule,
                    crossing: tuple[int, int, int, int]) -> TransportRule:
    """Move delta = min(theta(x,v), theta(u,y)) from the crossed edges onto
    the uncrossed pair (x,y), (u,v).  Row sums and balance are preserved and
    the quadruple is no longer a crossing afterwards."""
    if not is_crossing(theta, crossing):
        raise NotACrossing(f"{crossing} is not a crossing")
    x, u, v, y = crossing
    delta = min(theta.mass(x, v), theta.mass(u, y))
    return theta.replace({
        (x, y): theta.mass(x, y) + delta,
        (u, v): theta.mass(u, v) + delta,
        (x, v): theta.mass(x, v) - delta,
        (u, y): theta.mass(u, y) - delta,
    })


def _repair_pair(theta: TransportRule, u: int, v: int) -> TransportRule:
    """Repair every crossing of the pair (u, v), deepest source first."""
    while True:
        xs = sorted((x for (x, yy) in theta.weights if yy == v and x < u),
                    reverse=True)
        ys = sorted(y for (xx, y) in theta.weights if xx == u and y > v)
        if not xs or not ys:
            return theta
        x = xs[0]
        for y in ys:
            if theta.mass(x, v) == 0:
                break
            theta = repair_crossing(theta, (x, u, v, y))


def repair_all(theta: TransportRule, balls: BallConfig,
               window: tuple[int, int] | None = None) -> TransportRule:
    """Ordered repair sweep: coloured sites left to right, each repeatedly
    repaired against the rightmost uncancelled white ball to its left, with
    both balls cancelled once a unit of mass flows along the pair.

    On a window that is a union of complete excursions of a balancing rule,
    the result is the crossing-free rule, i.e. the indicator of the scanner
    allocation.
    """
    lo, hi = window or balls.window
    cancelled: set = set()
    for v, ball_count in balls.coloured_sites():
        if not lo <= v <= hi:
            continue
        remaining = ball_count
        while remaining > 0:
            u = max((w for w in balls.white_sites()
                     if lo <= w < v and w not in cancelled), default=None)
            if u is None:
                break
            theta = _repair_pair(theta, u, v)
            assert theta.mass(u, v) == 1, \
                "pair repair must route a unit mass on complete excursions"
            cancelled.add(u)
            remaining -= 1
    return theta


# -- excursions ---------------------------------------------------------------


@dataclass(frozen=True)
class Excursion:
    """Interval with equal white/coloured totals and strict white surplus on
    every proper prefix."""

    interval: tuple[int, int]
    balls: BallConfig

    def __post_init__(self):
        a, b = self.interval
        surplus = 0
        incr = self.balls.increments()
        for n in range(a, b + 1):
            surplus += incr[n - self.balls.lo]
            if n < b and surplus < 1:
                raise ValueError(f"prefix [{a},{n}] lacks white surplus")
        if surplus != 0:
            raise ValueError("white and coloured totals differ")

    @property
    def lo(self) -> int:
        return self.interval[0]

    @property
    def hi(self) -> int:
        return self.interval[1]


def find_excursion_around(traj: Trajectory, z: int, i, nu: TargetMeasure,
                          cap: int = 1_000_000) -> Excursion:
    """Minimal complete excursion containing ``z``.

    Scans the two-sided ball-count deficit profile: candidate left endpoints
    are strict running minima of the profile left of z; the excursion closes
    at the first forward return to the candidate's level.  A level jumped
    over (downward jumps can exceed one) is discarded and the scan deepens.
    """
    spec = traj.spec
    white, drops = _deficit_table(spec, i, nu)

    def incr(n: int) -> int:
        traj.ensure(min(n, traj.lo), max(n, traj.hi))
        s = traj.raw(n)
        return 1 if s == white else -drops.get(s, 0)

    fwd_t = z + 1          # forward cursor; g_f = profile at fwd_t
    g_f = 0                # reference: profile(z + 1) = 0
    a = z
    g_a = -incr(z)
    run_min = None         # min of profile over (a, z+1)... maintained below
    scanned = 0
    while scanned <= cap:
        is_candidate = run_min is None or g_a < run_min
        if is_candidate:
            level = g_a
            while g_f > level and (fwd_t - z) <= cap:
                g_f += incr(fwd_t)
                fwd_t += 1
            if (fwd_t - z) > cap:
                raise ExcessCensoring(f"no excursion around {z} within cap {cap}")
            if g_f == level:
                b = fwd_t - 1
                cfg = make_balls(traj, (a, b), i, nu)
                return Excursion((a, b), cfg)
            # overshoot: the profile jumped below this level; deepen.
        run_min = g_a if run_min is None else min(run_min, g_a)
        a -= 1
        g_a -= incr(a)
        scanned += 1
    raise ExcessCensoring(f"no excursion around {z} within cap {cap}")


# -- concave cost functions ---------------------------------------------------


def _sign_q_plus_r_sqrt(q: Fraction, r: Fraction, g: int) -> int:
    """Exact sign of q + r*sqrt(g) for integer g >= 0."""
    if g == 0 or r == 0:
        return (q > 0) - (q < 0)
    if r < 0:
        return -_sign_q_plus_r_sqrt(-q, -r, g)
    if q >= 0:
        return 1
    # q < 0, r > 0: sign of r*sqrt(g) - |q|
    lhs = r * r * g
    rhs = q * q
    return (lhs > rhs) - (lhs < rhs)


def _sign_sqrt_combo(pos: list[int], neg: list[int]) -> int:
    """Exact sign of sum(sqrt(p) for p in pos) - sum(sqrt(n) for n in neg).

    At most two radicals per side (coefficients must already be folded under
    the radicals as c*sqrt(g) = sqrt(c^2 g))."""
    if len(pos) > 2 or len(neg) > 2:
        raise UndecidableSign("more than two radicals per side")
    pos = (pos + [0, 0])[:2]
    neg = (neg + [0, 0])[:2]
    a1, a2 = pos
    b1, b2 = neg
    # Compare sqrt(a1)+sqrt(a2) vs sqrt(b1)+sqrt(b2): square both sides.
    p = Fraction(a1 + a2 - b1 - b2)
    e, f = a1 * a2, b1 * b2
    # sign of p + 2 sqrt(e) - 2 sqrt(f)
    x_sign = _sign_q_plus_r_sqrt(p, Fraction(2), e)  # sign of p + 2 sqrt(e)
    if x_sign < 0:
        return -1 if f > 0 else x_sign
    if x_sign == 0:
        return 0 if f == 0 else -1
    if f == 0:
        return 1
    # both sides positive: compare (p + 2 sqrt(e))^2 vs 4 f
    return _sign_q_plus_r_sqrt(p * p + 4 * e - 4 * f, 4 * p, e)


def _sign_interval(terms: list[tuple[Fraction, int]], beta: Fraction) -> int:
    """Certified sign of sum c_k * g_k**beta via interval arithmetic."""
    for prec in (160, 320, 640, 1280, 2560):
        _iv.prec = prec
        total = _iv.mpf(0)
        for c, g in terms:
            x = _iv.mpf(g)
            p = _iv.exp(_iv.log(x) * _iv.mpf(beta.numerator) / beta.denominator)
            total += _iv.mpf(c.numerator) / c.denominator * p
        if total > 0:
            return 1
        if total < 0:
            return -1
    raise UndecidableSign(f"interval sign undecided for {terms}")


@dataclass(frozen=True)
class CostFunction:
    """Non-negative, non-decreasing, midpoint-concave cost on the integers.

    Kinds: ``power`` (n**beta, 0 < beta <= 1), ``log1p`` (log(1+n)), and
    ``capped`` (min(n, c)).  Values are floats for the irrational kinds;
    ``combo_sign`` decides signs of rational combinations exactly.
    """

    kind: str
    beta: Fraction = Fraction(1)
    cap: int = 0

    def __post_init__(self):
        if self.kind == "power":
            if not 0 < self.beta <= 1:
                raise ValueError(f"power exponent must be in (0,1], got {self.beta}")
        elif self.kind == "capped":
            if self.cap < 1:
                raise ValueError("cap must be a positive integer")
        elif self.kind != "log1p":
            raise ValueError(f"unknown cost kind {self.kind!r}")

    @classmethod
    def sqrt(cls) -> "CostFunction":
        return cls("power", beta=Fraction(1, 2))

    @classmethod
    def power(cls, beta) -> "CostFunction":
        return cls("power", beta=Fraction(beta))

    @classmethod
    def log1p(cls) -> "CostFunction":
        return cls("log1p")

    @classmethod
    def capped_linear(cls, c: int) -> "CostFunction":
        return cls("capped", cap=c)

    @classmethod
    def parse(cls, name: str) -> "CostFunction":
        if name == "sqrt":
            return cls.sqrt()
        if name == "log1p":
            return cls.log1p()
        if name.startswith("capped:"):
            return cls.capped_linear(int(name.split(":", 1)[1]))
        if name.startswith("power:"):
            return cls.power(Fraction(name.split(":", 1)[1]))
        raise ValueError(f"unknown cost function {name!r}")

    @property
    def name(self) -> str:
        if self.kind == "power":
            return "sqrt" if self.beta == Fraction(1, 2) else f"power:{self.beta}"
        if self.kind == "capped":
            return f"capped:{self.cap}"
        return "log1p"

    @property
    def exact_rational(self) -> bool:
        return self.kind == "capped" or (self.kind == "power" and self.beta == 1)

    def __call__(self, n):
        if n <= 0:
            return Fraction(0) if self.exact_rational else 0.0
        if self.kind == "capped":
            return Fraction(min(n, self.cap))
        if self.kind == "log1p":
            return math.log1p(n)
        if self.beta == 1:
            return Fraction(n)
        return float(n) ** float(self.beta)

    def apply(self, values) -> "np.ndarray":
        """Vectorized float evaluation on a non-negative integer array."""
        import numpy as np
        arr = np.asarray(values, dtype=np.float64)
        if self.kind == "capped":
            return np.minimum(arr, float(self.cap))
        if self.kind == "log1p":
            return np.log1p(arr)
        return arr ** float(self.beta)

    def combo_sign(self, terms) -> int:
        """Exact sign of sum coef * psi(gap) over (coef, gap) terms."""
        folded: dict = {}
        for c, g in terms:
            if g <= 0:
                continue
            c = Fraction(c)
            if c:
                folded[g] = folded.get(g, Fraction(0)) + c
        folded = {g: c for g, c in folded.items() if c != 0}
        if not folded:
            return 0

        if self.exact_rational:
            total = sum(c * self(g) for g, c in folded.items())
            return (total > 0) - (total < 0)

        # scale to integer coefficients and strip the common factor (sign
        # preserved); keeps product exponents and radicands small even when
        # the transport weights carry large denominators
        denom = lcm(*(c.denominator for c in folded.values()))
        ints = {g: int(c * denom) for g, c in folded.items()}
        common = 0
        for v in ints.values():
            common = math.gcd(common, abs(v))
        ints = {g: v // common for g, v in ints.items()}

        if self.kind == "log1p":
            # sign of sum e log(1+g)  <=>  compare integer products
            pos = neg = 1
            for g, e in ints.items():
                if e > 0:
                    pos *= (1 + g) ** e
                else:
                    neg *= (1 + g) ** (-e)
            return (pos > neg) - (pos < neg)

        if self.beta == Fraction(1, 2):
            # fold coefficients under the radicals: e sqrt(g) = sqrt(e^2 g)
            pos, neg = [], []
            for g, e in ints.items():
                if e > 0:
                    pos.append(e * e * g)
                else:
                    neg.append(e * e * g)
            try:
                return _sign_sqrt_combo(pos, neg)
            except UndecidableSign:
                pass
        # general power(beta): certified interval arithmetic
        return _sign_interval([(Fraction(e), g) for g, e in ints.items()],
                              self.beta)


def window_cost(theta, A: tuple[int, int], psi: CostFunction):
    """Two-sided transport cost of the window:
    sum_{x in A, y} theta(x,y) psi(y-x) + sum_{x, y in A} theta(x,y) psi(y-x).

    Accepts a TransportRule or an AllocationView (treated as its indicator
    rule; self-loops cost nothing).  Exact Fraction for piecewise-linear psi,
    float otherwise.
    """
    terms = _cost_terms(theta, A)
    if psi.exact_rational:
        return sum((c * psi(g) for c, g in terms), Fraction(0))
    return float(sum(float(c) * psi(g) for c, g in terms))


def _cost_terms(theta, A: tuple[int, int]) -> list[tuple[Fraction, int]]:
    lo, hi = A
    terms = []
    if isinstance(theta, AllocationView):
        edges = [((x, y), Fraction(1)) for x, y in theta.matches.items()]
    else:
        edges = list(theta.weights.items())
    for (x, y), w in edges:
        gap = y - x
        if gap <= 0:
            continue
        mult = (1 if lo <= x <= hi else 0) + (1 if lo <= y <= hi else 0)
        if mult:
            terms.append((w * mult, gap))
    return terms


def compare_window_costs(theta_a, theta_b, A: tuple[int, int],
                         psi: CostFunction) -> int:
    """Exact sign of window_cost(theta_a) - window_cost(theta_b)."""
    terms = _cost_terms(theta_a, A)
    terms += [(-c, g) for c, g in _cost_terms(theta_b, A)]
    return psi.combo_sign(terms)


def midpoint_concavity_holds(psi: CostFunction, a: int, b: int, c: int) -> bool:
    """psi(a+b) + psi(b+c) >= psi(a+b+c) + psi(b), decided exactly."""
    sign = psi.combo_sign([(1, a + b), (1, b + c), (-1, a + b + c), (-1, b)])
    return sign >= 0


# -- random balancing rules (test corpus) -------------------------------------


def random_balancing_rule(balls: BallConfig, rng,
                          max_denominator: int = 8) -> TransportRule:
    """Random forward-only rule balancing the window's white mass onto its
    coloured demand.  Requires a window that is a union of complete
    excursions (white total equals coloured total with prefix surplus),
    which guarantees the random splits can always be completed."""
    lo, hi = balls.window
    supply = {w: Fraction(1) for w in balls.white_sites()}
    weights = {}
    for x in range(lo, hi + 1):
        if not balls.is_white(x):
            weights[(x, x)] = Fraction(1)
    for v, demand in balls.coloured_sites():
        need = Fraction(demand)
        avail = [w for w in supply if w < v and supply[w] > 0]
        order = list(avail)
        rng.shuffle(order)
        for w in order:
            if need == 0:
                break
            cap_w = min(supply[w], need)
            q = Fraction(int(rng.integers(0, max_denominator + 1)), max_denominator)
            amt = cap_w * q
            if amt > 0:
                weights[(w, v)] = weights.get((w, v), Fraction(0)) + amt
                supply[w] -= amt
                need -= amt
        if need > 0:  # deterministic completion pass
            for w in sorted(avail, reverse=True):
                if need == 0:
                    break
                amt = min(supply[w], need)
                if amt > 0:
                    weights[(w, v)] = weights.get((w, v), Fraction(0)) + amt
                    supply[w] -= amt
                    need -= amt
        if need > 0:
            raise ValueError("window is not a union of complete excursions")
    if any(s != 0 for s in supply.values()):
        raise ValueError("window is not a union of complete excursions")
    return TransportRule(balls.window, weights)
