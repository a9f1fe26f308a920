"""Two-sided sample paths materialized lazily around the origin.

A trajectory holds the chain states on an integer window [lo, hi] with
lo <= 0 <= hi and extends on demand: forward steps draw from the chain
kernel, backward steps from the dual kernel, each consuming exactly one
uniform from the direction's replica stream.  Previously materialized
values never change (append-only in both directions), so identical
(master_seed, replica) pairs yield bit-identical paths regardless of how
the window was grown.

Finite-chain states are stored as row indices; ``state(n)`` translates to
labels.  Lattice states are stored as positions (ints for the line walk,
coordinate pairs for the plane walk).
"""

from __future__ import annotations

from bisect import bisect_right

from . import rng
from .chains import ChainSpec, _Z2_STEPS
from .errors import FixtureExhausted, WindowNotMaterialized


class Trajectory:
    def __init__(self, spec: ChainSpec, start_state, master_seed: int = 0,
                 replica: int = 0):
        spec.require_state(start_state)
        self.spec = spec
        self.start_state = start_state
        self.master_seed = master_seed
        self.replica = replica
        self._fixed = False
        if spec.is_lattice:
            self._origin = start_state
        else:
            self._origin = spec.index(start_state)
        self._fwd = [self._origin]  # states at indices 0..hi
        self._bwd = []              # states at indices -1, -2, ...
        self._fwd_gen = None
        self._bwd_gen = None
        self._fwd_cum = None
        self._bwd_cum = None

    @classmethod
    def fixed(cls, spec: ChainSpec, states, origin_index: int = 0) -> "Trajectory":
        """Fixture path from explicit state labels; cannot be extended.

        ``origin_index`` is the position of time 0 within ``states``.
        """
        states = list(states)
        if not 0 <= origin_index < len(states):
            raise ValueError("origin_index outside the given states")
        traj = cls(spec, states[origin_index])
        traj._fixed = True
        if spec.is_lattice:
            raw = states
        else:
            raw = [spec.index(s) for s in states]
        traj._fwd = raw[origin_index:]
        traj._bwd = raw[:origin_index][::-1]
        return traj

    # -- window -----------------------------------------------------------

    @property
    def lo(self) -> int:
        return -len(self._bwd)

    @property
    def hi(self) -> int:
        return len(self._fwd) - 1

    @property
    def window(self) -> tuple[int, int]:
        return (self.lo, self.hi)

    # -- raw access ---------------------------------------------------------

    def raw(self, n: int):
        """Internal state at index n (row index for finite chains)."""
        if n >= 0:
            if n >= len(self._fwd):
                raise WindowNotMaterialized(f"index {n} beyond hi={self.hi}")
            return self._fwd[n]
        if -n > len(self._bwd):
            raise WindowNotMaterialized(f"index {n} below lo={self.lo}")
        return self._bwd[-n - 1]

    def raw_window(self, a: int, b: int) -> list:
        """Internal states at indices a..b inclusive."""
        if a < self.lo or b > self.hi:
            raise WindowNotMaterialized(f"[{a},{b}] outside [{self.lo},{self.hi}]")
        return [self.raw(n) for n in range(a, b + 1)]

    def state(self, n: int):
        """State label at index n."""
        v = self.raw(n)
        return v if self.spec.is_lattice else self.spec.states[v]

    def __getitem__(self, n: int):
        return self.state(n)

    # -- extension ----------------------------------------------------------

    def _step_fn(self, backward: bool):
        spec = self.spec
        if spec.kind == "srw_z":
            def step(s, u):
                return s - 1 if u < 0.5 else s + 1
            return step
        if spec.kind == "srw_z2":
            def step(s, u):
                d = _Z2_STEPS[min(int(u * 4), 3)]
                return (s[0] + d[0], s[1] + d[1])
            return step
        cum = spec.dual_cum_rows if backward else spec.cum_rows
        if backward:
            if self._bwd_cum is None:
                self._bwd_cum = [row.tolist() for row in cum]
            rows = self._bwd_cum
        else:
            if self._fwd_cum is None:
                self._fwd_cum = [row.tolist() for row in cum]
            rows = self._fwd_cum

        def step(s, u):
            return bisect_right(rows[s], u)
        return step

    def extend_forward(self, upto: int) -> "Trajectory":
        """Materialize states up to index ``upto`` (no-op if already there)."""
        need = upto - self.hi
        if need <= 0:
            return self
        if self._fixed:
            raise FixtureExhausted(f"fixture ends at hi={self.hi}, asked {upto}")
        if self._fwd_gen is None:
            self._fwd_gen = rng.replica_generator(
                self.master_seed, self.replica, rng.FORWARD)
        u = self._fwd_gen.random(need)
        step = self._step_fn(backward=False)
        s = self._fwd[-1]
        append = self._fwd.append
        for k in range(need):
            s = step(s, u[k])
            append(s)
        return self

    def extend_backward(self, downto: int) -> "Trajectory":
        """Materialize states down to index ``downto`` using the dual kernel."""
        need = self.lo - downto
        if need <= 0:
            return self
        if self._fixed:
            raise FixtureExhausted(f"fixture starts at lo={self.lo}, asked {downto}")
        if self._bwd_gen is None:
            self._bwd_gen = rng.replica_generator(
                self.master_seed, self.replica, rng.BACKWARD)
        u = self._bwd_gen.random(need)
        step = self._step_fn(backward=True)
        s = self._bwd[-1] if self._bwd else self._fwd[0]
        append = self._bwd.append
        for k in range(need):
            s = step(s, u[k])
            append(s)
        return self

    def ensure(self, a: int, b: int) -> "Trajectory":
        """Materialize the whole window [a, b]."""
        self.extend_backward(min(a, self.lo))
        self.extend_forward(max(b, self.hi))
        return self

    def __repr__(self):
        return (f"Trajectory({self.spec!r}, start={self.start_state!r}, "
                f"window=[{self.lo},{self.hi}])")


def sample_forward(traj: Trajectory, upto: int) -> Trajectory:
    """Extend the forward window to ``upto`` with forward-kernel draws."""
    return traj.extend_forward(upto)


def sample_backward(traj: Trajectory, downto: int) -> Trajectory:
    """Extend the backward window to ``downto`` with dual-kernel draws."""
    return traj.extend_backward(downto)
