"""Truncated Green functions: normalized expected visit counts.

a_ij(n) is the expected number of visits to j in [0, n] starting from i,
divided by the stationary weight m_j.  Finite chains use the exact
distribution-vector recursion mu_{k+1} = mu_k P (float64; probability mass
is conserved to 1e-12 and asserted).  The lattice walks convolve truncated
probability vectors within a budget; their diagonal values also have a
closed product form (central binomials), used as the fast path for the
large-n tables the moment estimators need and cross-checked against the
convolution in the tests.
"""

from __future__ import annotations

import numpy as np

from .chains import ChainSpec
from .errors import BudgetExceeded, NotYetVisitable

_MASS_TOL = 1e-12
DEFAULT_LATTICE_BUDGET = 10_000
_Z2_CONV_BUDGET = 600


class GreenTable:
    """Memoized a_i. (n) values for one start state.

    ``method`` is "matrix_power" for finite chains, "lattice_closed_form"
    for diagonal lattice values, "lattice_convolution" otherwise.
    """

    def __init__(self, spec: ChainSpec, i):
        spec.require_state(i)
        self.spec = spec
        self.start = i
        if spec.is_lattice:
            self.method = "lattice_closed_form"
        else:
            self.method = "matrix_power"
            self._i = spec.index(i)
            self._mu = None          # distribution after k steps
            self._cum = None         # cumulative visit mass per state
            self._steps = -1
        self._diag = None            # cumulative diagonal values (lattice)

    # -- finite chains ------------------------------------------------------

    def _grow_finite(self, n: int):
        k = len(self.spec.states)
        p = np.array([[float(v) for v in r] for r in self.spec.rows])
        if self._steps < 0:
            self._mu = np.zeros(k)
            self._mu[self._i] = 1.0
            self._cum = [self._mu.copy()]
            self._steps = 0
        while self._steps < n:
            self._mu = self._mu @ p
            assert abs(self._mu.sum() - 1.0) < _MASS_TOL, "mass not conserved"
            self._cum.append(self._cum[-1] + self._mu)
            self._steps += 1

    def visits(self, j, n: int) -> float:
        """Expected visit count to j in [0, n] (not normalized)."""
        if self.spec.is_lattice:
            raise ValueError("use lattice helpers for walk visit counts")
        self._grow_finite(n)
        return float(self._cum[n][self.spec.index(j)])

    # -- lattice diagonals ----------------------------------------------------

    def _grow_diag(self, n: int):
        half = n // 2 + 1
        if self._diag is not None and len(self._diag) >= half + 1:
            return
        k = np.arange(1, half + 1, dtype=np.float64)
        ratios = (2 * k - 1) / (2 * k)          # P^{2k}(0,0) step ratio
        returns = np.concatenate(([1.0], np.cumprod(ratios)))
        if self.spec.kind == "srw_z2":
            returns = returns ** 2               # plane walk: product of two lines
        self._diag = np.cumsum(returns)

    def diagonal(self, n: int) -> float:
        """a_ii(n) for the walk's start site (translation invariant)."""
        if not self.spec.is_lattice:
            return self.value(self.start, n)
        self._grow_diag(n)
        return float(self._diag[n // 2])

    def diagonal_array(self, upto: int) -> np.ndarray:
        """a_ii(n) for n = 0..upto as a lookup table."""
        if not self.spec.is_lattice:
            self._grow_finite(upto)
            col = self.spec.index(self.start)
            cum = np.array([row[col] for row in self._cum[:upto + 1]])
            return cum / float(self.spec.stationary_weight(self.start))
        self._grow_diag(upto)
        return np.repeat(self._diag, 2)[:upto + 1]

    def value(self, j, n: int) -> float:
        """a_ij(n)."""
        if self.spec.is_lattice:
            if j == self.start:
                return self.diagonal(n)
            return green_truncated(self.spec, self.start, j, n)
        self.spec.require_state(j)
        return self.visits(j, n) / float(self.spec.stationary_weight(j))


_tables: dict = {}


def green_table(spec: ChainSpec, i) -> GreenTable:
    key = (id(spec), i)
    if key not in _tables:
        _tables[key] = GreenTable(spec, i)
    return _tables[key]


def _lattice_green_z(i: int, j: int, n: int) -> float:
    """a_ij(n) for the line walk by truncated-vector convolution."""
    kernel = np.array([0.5, 0.0, 0.5])
    vec = np.array([1.0])          # offsets -k..k after k steps
    target = j - i
    total = 1.0 if target == 0 else 0.0
    for k in range(1, n + 1):
        vec = np.convolve(vec, kernel)
        assert abs(vec.sum() - 1.0) < _MASS_TOL * max(1, k), "mass lost"
        if abs(target) <= k:
            total += vec[target + k]
    return total


def _lattice_green_z2(i, j, n: int) -> float:
    vec = np.zeros((1, 1))
    vec[0, 0] = 1.0
    dx, dy = j[0] - i[0], j[1] - i[1]
    total = 1.0 if (dx, dy) == (0, 0) else 0.0
    for k in range(1, n + 1):
        nxt = np.zeros((2 * k + 1, 2 * k + 1))
        nxt[2:, 1:-1] += 0.25 * vec
        nxt[:-2, 1:-1] += 0.25 * vec
        nxt[1:-1, 2:] += 0.25 * vec
        nxt[1:-1, :-2] += 0.25 * vec
        vec = nxt
        if abs(dx) <= k and abs(dy) <= k:
            total += vec[dx + k, dy + k]
    return total


def green_truncated(spec: ChainSpec, i, j, n: int,
                    budget: int = DEFAULT_LATTICE_BUDGET) -> float:
    """a_ij(n): normalized expected visits to j in [0, n] starting from i."""
    if n < 0:
        raise ValueError("n must be non-negative")
    spec.require_state(i)
    spec.require_state(j)
    if spec.kind == "srw_z":
        if n > budget:
            raise BudgetExceeded(f"n={n} beyond convolution budget {budget}")
        return _lattice_green_z(i, j, n)
    if spec.kind == "srw_z2":
        if n > min(budget, _Z2_CONV_BUDGET):
            raise BudgetExceeded(
                f"n={n} beyond plane-walk budget {min(budget, _Z2_CONV_BUDGET)}")
        return _lattice_green_z2(i, j, n)
    return green_table(spec, i).value(j, n)


def orey_ratio(spec: ChainSpec, pair_a: tuple, pair_b: tuple, n: int) -> float:
    """a_{ij}(n) / a_{kl}(n) for pairs (i, j) and (k, l).

    The two truncated Green functions are asymptotically equivalent for any
    communicating states; this quantifies the discrepancy at finite n.
    """
    num = green_truncated(spec, pair_a[0], pair_a[1], n)
    den = green_truncated(spec, pair_b[0], pair_b[1], n)
    if den == 0.0:
        raise NotYetVisitable(f"a_{pair_b}({n}) is still zero")
    return num / den
