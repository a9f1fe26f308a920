"""Chain specifications, stationary measures, and dual (time-reversed) kernels.

Finite chains come in two kinds: an explicit row-stochastic ``matrix`` and an
``iid`` categorical sequence (every row equals the weight vector).  Two
countable families are built in, the simple symmetric walks on the integer
line (``srw_z``) and on the square lattice (``srw_z2``); both have unit
stationary weight at every site and are recurrent by construction.  Arbitrary
user-supplied countable kernels are rejected: recurrence and stationarity
cannot be verified from a black-box kernel.

Arithmetic is rational-first: matrices given as Fractions (or "1/3" strings)
keep exact Fractions through the stationary solve and the dual kernel, so the
integer feasibility condition downstream is decided exactly.  Float matrices
are accepted with tolerance-based validation.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import NonStochasticMatrix, NotIrreducible, NotStationary, UnknownState

Scalar = Union[Fraction, float]

ROW_SUM_ABS_TOL = 1e-12
STATIONARY_REL_TOL = 1e-10


def parse_scalar(value) -> Scalar:
    """Parse a matrix/measure entry: Fraction, int, "p/q" string, or float."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError(f"invalid scalar {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, float):
        return value
    raise TypeError(f"invalid scalar {value!r}")


def scalar_to_config(value: Scalar):
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    return value


def _as_float(value: Scalar) -> float:
    return float(value)


def _strongly_connected(rows: Sequence[Sequence[Scalar]]) -> bool:
    n = len(rows)
    fwd = [[j for j in range(n) if rows[i][j] > 0] for i in range(n)]
    bwd = [[] for _ in range(n)]
    for i in range(n):
        for j in fwd[i]:
            bwd[j].append(i)

    def reaches_all(adj):
        seen = {0}
        stack = [0]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == n

    return reaches_all(fwd) and reaches_all(bwd)


def solve_stationary_exact(rows: Sequence[Sequence[Fraction]]) -> list[Fraction]:
    """Probability vector m with m P = m, by Gaussian elimination over Q."""
    n = len(rows)
    # Equations: sum_i m_i p_ij - m_j = 0 for j < n-1, plus sum_i m_i = 1.
    aug = [[rows[i][j] - (1 if i == j else 0) for i in range(n)] for j in range(n - 1)]
    aug.append([Fraction(1)] * n)
    rhs = [Fraction(0)] * (n - 1) + [Fraction(1)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise NotIrreducible("stationary system is singular")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        rhs[col], rhs[pivot] = rhs[pivot], rhs[col]
        inv = aug[col][col]
        aug[col] = [v / inv for v in aug[col]]
        rhs[col] = rhs[col] / inv
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
                rhs[r] = rhs[r] - f * rhs[col]
    return rhs


class UnitWeights:
    """Stationary weights of the lattice walks: 1 at every site."""

    def __getitem__(self, state) -> Fraction:
        return Fraction(1)

    def get(self, state, default=None) -> Fraction:
        return Fraction(1)

    def __repr__(self):
        return "UnitWeights()"


UNIT_WEIGHTS = UnitWeights()

_Z2_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True)
class DualKernel:
    """Time-reversed transition rule p*_ij = (m_j / m_i) p_ji.

    For the built-in lattice walks the dual equals the forward kernel
    (symmetric steps, uniform stationary weights), flagged by
    ``same_as_forward`` with ``rows=None``.
    """

    states: tuple | None
    rows: tuple | None
    same_as_forward: bool = False

    def row(self, i: int) -> tuple:
        return self.rows[i]

    def transition(self, i: int, j: int) -> Scalar:
        return self.rows[i][j]


class ChainSpec:
    """Validated chain specification: kind, states, kernel, stationary weights.

    Immutable after construction; freely shareable across threads.
    """

    def __init__(self, kind: str, states=None, rows=None, weights=None,
                 stationary=None, _validate: bool = True):
        self.kind = kind
        if kind in ("matrix", "iid"):
            self.states = tuple(states)
            self._index = {s: k for k, s in enumerate(self.states)}
            if len(self._index) != len(self.states):
                raise ValueError("duplicate state labels")
            if kind == "iid":
                self.weights = tuple(weights)
                self.rows = tuple(self.weights for _ in self.states)
            else:
                self.rows = tuple(tuple(r) for r in rows)
            if _validate:
                self._validate_finite(stationary)
        elif kind in ("srw_z", "srw_z2"):
            self.states = None
            self.rows = None
            self._stationary = UNIT_WEIGHTS
        else:
            raise ValueError(f"unknown chain kind {kind!r}")
        self._cum_rows = None
        self._dual = None
        self._dual_cum_rows = None

    # -- validation -----------------------------------------------------

    def _validate_finite(self, stationary):
        n = len(self.states)
        if any(len(r) != n for r in self.rows):
            raise NonStochasticMatrix("matrix is not square")
        rational = all(isinstance(v, Fraction) for r in self.rows for v in r)
        self.is_rational = rational
        for i, r in enumerate(self.rows):
            if any((v < 0) for v in r):
                raise NonStochasticMatrix(f"negative entry in row {self.states[i]!r}")
            total = sum(r) if rational else sum(map(float, r))
            if rational:
                if total != 1:
                    raise NonStochasticMatrix(
                        f"row {self.states[i]!r} sums to {total}, not 1")
            elif abs(total - 1.0) > ROW_SUM_ABS_TOL:
                raise NonStochasticMatrix(
                    f"row {self.states[i]!r} sums to {total!r}")
        if not _strongly_connected(self.rows):
            raise NotIrreducible("positive-transition digraph is not strongly connected")

        if stationary is not None:
            vec = [stationary[s] for s in self.states]
            total = sum(vec)
            if total <= 0:
                raise NotStationary("stationary weights must be positive")
            vec = [v / total for v in vec]
        elif rational:
            vec = solve_stationary_exact(self.rows)
        else:
            vec = self._solve_stationary_float()
        self._check_stationary(vec)
        self._stationary = dict(zip(self.states, vec))

    def _solve_stationary_float(self):
        n = len(self.states)
        p = np.array([[float(v) for v in r] for r in self.rows])
        a = np.vstack([p.T - np.eye(n), np.ones(n)])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        sol, *_ = np.linalg.lstsq(a, b, rcond=None)
        return [float(v) for v in sol]

    def _check_stationary(self, vec):
        n = len(self.states)
        for j in range(n):
            lhs = sum(vec[i] * self.rows[i][j] for i in range(n))
            if self.is_rational and isinstance(vec[j], Fraction):
                if lhs != vec[j]:
                    raise NotStationary(f"m P != m at state {self.states[j]!r}")
            else:
                ref = max(abs(float(vec[j])), 1e-300)
                if abs(float(lhs) - float(vec[j])) / ref > STATIONARY_REL_TOL:
                    raise NotStationary(f"m P != m at state {self.states[j]!r}")

    # -- constructors ---------------------------------------------------

    @classmethod
    def from_matrix(cls, states: Iterable, rows: Iterable[Iterable],
                    stationary=None) -> "ChainSpec":
        parsed = [[parse_scalar(v) for v in r] for r in rows]
        stat = None
        if stationary is not None:
            stat = {s: parse_scalar(v) for s, v in stationary.items()}
        return cls("matrix", states=states, rows=parsed, stationary=stat)

    @classmethod
    def iid(cls, states: Iterable, weights: Iterable) -> "ChainSpec":
        w = [parse_scalar(v) for v in weights]
        if any(v <= 0 for v in w):
            raise NotIrreducible("iid weights must be strictly positive")
        rational = all(isinstance(v, Fraction) for v in w)
        total = sum(w) if rational else sum(map(float, w))
        if rational and total != 1:
            raise NonStochasticMatrix(f"weights sum to {total}, not 1")
        if not rational and abs(total - 1.0) > ROW_SUM_ABS_TOL:
            raise NonStochasticMatrix(f"weights sum to {total!r}")
        return cls("iid", states=states, weights=w)

    @classmethod
    def srw_z(cls) -> "ChainSpec":
        return cls("srw_z")

    @classmethod
    def srw_z2(cls) -> "ChainSpec":
        return cls("srw_z2")

    # -- accessors ------------------------------------------------------

    @property
    def is_lattice(self) -> bool:
        return self.kind in ("srw_z", "srw_z2")

    @property
    def is_iid(self) -> bool:
        return self.kind == "iid"

    def index(self, state) -> int:
        try:
            return self._index[state]
        except KeyError:
            raise UnknownState(f"state {state!r} not in chain") from None

    def contains(self, state) -> bool:
        if self.kind == "srw_z":
            return isinstance(state, int) and not isinstance(state, bool)
        if self.kind == "srw_z2":
            return (isinstance(state, tuple) and len(state) == 2
                    and all(isinstance(c, int) for c in state))
        return state in self._index

    def require_state(self, state):
        if not self.contains(state):
            raise UnknownState(f"state {state!r} not in chain")

    @property
    def stationary(self):
        """Stationary weights: probability dict for finite kinds, unit weights
        for lattices (non-normalizable)."""
        return self._stationary

    def stationary_weight(self, state) -> Scalar:
        if self.is_lattice:
            self.require_state(state)
            return Fraction(1)
        return self._stationary[state]

    def transition(self, i, j) -> Scalar:
        if self.kind == "srw_z":
            return Fraction(1, 2) if abs(i - j) == 1 else Fraction(0)
        if self.kind == "srw_z2":
            d = (j[0] - i[0], j[1] - i[1])
            return Fraction(1, 4) if d in _Z2_STEPS else Fraction(0)
        return self.rows[self.index(i)][self.index(j)]

    # -- sampling support -----------------------------------------------

    @property
    def cum_rows(self) -> np.ndarray:
        """Float64 cumulative transition rows; shared by every sampler so the
        per-step draw convention is identical everywhere."""
        if self._cum_rows is None:
            if self.is_lattice:
                raise ValueError("lattice walks use dedicated step samplers")
            p = np.array([[float(v) for v in r] for r in self.rows])
            self._cum_rows = np.cumsum(p, axis=1)
            self._cum_rows[:, -1] = 1.0
        return self._cum_rows

    @property
    def dual_cum_rows(self) -> np.ndarray:
        if self._dual_cum_rows is None:
            d = self.dual()
            if d.same_as_forward:
                raise ValueError("lattice walks use dedicated step samplers")
            p = np.array([[float(v) for v in r] for r in d.rows])
            self._dual_cum_rows = np.cumsum(p, axis=1)
            self._dual_cum_rows[:, -1] = 1.0
        return self._dual_cum_rows

    # -- duality ----------------------------------------------------------

    def dual(self) -> DualKernel:
        if self._dual is None:
            self._dual = dual_kernel(self)
        return self._dual

    def __repr__(self):
        if self.is_lattice:
            return f"ChainSpec({self.kind})"
        return f"ChainSpec({self.kind}, states={list(self.states)})"


def stationary_measure(spec: ChainSpec):
    """Stationary weights of the chain.

    Finite kinds return a probability dict (exact Fractions for rational
    input); the lattice walks return unit weights at every site.
    """
    return spec.stationary


def dual_kernel(spec: ChainSpec) -> DualKernel:
    """Time reversal of the chain: p*_ij = (m_j / m_i) p_ji."""
    if spec.is_lattice:
        return DualKernel(states=None, rows=None, same_as_forward=True)
    n = len(spec.states)
    m = [spec._stationary[s] for s in spec.states]
    rows = tuple(
        tuple((m[j] / m[i]) * spec.rows[j][i] for j in range(n))
        for i in range(n)
    )
    for i in range(n):
        total = sum(rows[i])
        if spec.is_rational:
            assert total == 1, "dual row sum must be exactly 1"
        else:
            assert abs(float(total) - 1.0) < 1e-9
    return DualKernel(states=spec.states, rows=rows)


def dual_of_dual(spec: ChainSpec) -> tuple:
    """Apply duality twice; returns the recovered forward rows (for tests)."""
    d = spec.dual()
    if d.same_as_forward:
        return None
    n = len(spec.states)
    m = [spec._stationary[s] for s in spec.states]
    return tuple(
        tuple((m[j] / m[i]) * d.rows[j][i] for j in range(n))
        for i in range(n)
    )


# -- worked chain families --------------------------------------------------

def coin_chain(p_head) -> ChainSpec:
    """Doubly infinite tosses of a coin with head-probability p."""
    p = parse_scalar(p_head)
    one = Fraction(1) if isinstance(p, Fraction) else 1.0
    return ChainSpec.iid(("tail", "head"), (one - p, p))


def three_state_chain(p) -> ChainSpec:
    """Three-state loop: 1 -> 2 and 3 -> 2 surely; 2 -> 1 w.p. 1-p, 2 -> 3 w.p. p.

    Stationary weights are proportional to (1-p, 1, p).
    """
    p = parse_scalar(p)
    zero = Fraction(0) if isinstance(p, Fraction) else 0.0
    one = Fraction(1) if isinstance(p, Fraction) else 1.0
    rows = [
        [zero, one, zero],
        [one - p, zero, p],
        [zero, one, zero],
    ]
    return ChainSpec.from_matrix(("1", "2", "3"), rows)


def pattern_chain(p_head) -> ChainSpec:
    """Sliding-window pair chain over coin tosses with head-probability p.

    States are the two-symbol windows tt, th, ht, hh; the stationary measure
    is ((1-p)^2, p(1-p), p(1-p), p^2).
    """
    p = parse_scalar(p_head)
    zero = Fraction(0) if isinstance(p, Fraction) else 0.0
    q = (Fraction(1) if isinstance(p, Fraction) else 1.0) - p
    rows = [
        [q, p, zero, zero],
        [zero, zero, q, p],
        [q, p, zero, zero],
        [zero, zero, q, p],
    ]
    return ChainSpec.from_matrix(("tt", "th", "ht", "hh"), rows)


# -- config serialization ----------------------------------------------------

def chain_to_dict(spec: ChainSpec) -> dict:
    """Config document for the chain; rational entries become "p/q" strings."""
    if spec.kind == "matrix":
        return {
            "kind": "matrix",
            "states": list(spec.states),
            "rows": [[scalar_to_config(v) for v in r] for r in spec.rows],
        }
    if spec.kind == "iid":
        return {
            "kind": "iid",
            "states": list(spec.states),
            "weights": [scalar_to_config(v) for v in spec.weights],
        }
    return {"kind": spec.kind}


def chain_from_dict(doc: dict) -> ChainSpec:
    kind = doc.get("kind")
    if kind == "matrix":
        return ChainSpec.from_matrix(doc["states"], doc["rows"],
                                     stationary=doc.get("stationary"))
    if kind == "iid":
        return ChainSpec.iid(doc["states"], doc["weights"])
    if kind == "srw_z":
        return ChainSpec.srw_z()
    if kind == "srw_z2":
        return ChainSpec.srw_z2()
    raise ValueError(f"unknown chain kind {kind!r}")
