"""Replica-parallel Monte Carlo: stopping-time sampling, tails, moments.

Replicas are embarrassingly parallel with counter-based per-replica streams,
so every estimate is a pure function of (master seed, N, cap) regardless of
chunking or thread count.  Two kernels produce stopping times:

* a per-replica time-block kernel for i.i.d. chains and the line walk, which
  vectorizes along the time axis (cumulative-sum detection of the first
  deficit crossing), and
* a synchronous kernel for general finite chains, which steps a whole chunk
  of replicas at once through the shared cumulative transition rows.

Both consume exactly one uniform per forward step in the same order as
``Trajectory`` sampling, so their stopping times are bit-identical to the
per-trajectory solvers (asserted in the tests).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from math import floor, lcm

import numpy as np

from . import rng
from .chains import ChainSpec
from .embedding import check_feasibility
from .errors import ExcessCensoring, InfeasibleTarget, TargetChargesStart
from .greens import green_table
from .local_time import TargetMeasure, integer_ball_counts

KNOWN_SOLVERS = ("tstar", "trand", "tvisit", "composite", "mixture",
                 "naive_wait_one")

_BLOCK0 = 512
_BLOCK_MAX = 1 << 23
_SYNC_CHUNK = 4096
_SYNC_BLOCK = 512
_STRAGGLER_CUTOFF = 96
_I64_MIN = np.iinfo(np.int64).min


@dataclass
class BatchResult:
    """Stopping times of a replica range.

    ``T`` holds the capped value for censored replicas; ``landing`` the raw
    state at T (-1 when censored); ``segments`` (when lags were requested)
    the raw states X_{T-K..T+K} per replica, -1 rows for censored ones.
    """

    T: np.ndarray
    censored: np.ndarray
    landing: np.ndarray
    cap: int
    replica0: int
    seed: int
    solver: str
    lags: int = 0
    segments: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.T.size

    def merge(self, other: "BatchResult") -> "BatchResult":
        assert other.replica0 == self.replica0 + self.n
        seg = None
        if self.segments is not None:
            seg = np.vstack([self.segments, other.segments])
        return BatchResult(
            np.concatenate([self.T, other.T]),
            np.concatenate([self.censored, other.censored]),
            np.concatenate([self.landing, other.landing]),
            self.cap, self.replica0, self.seed, self.solver, self.lags, seg)


def _deficit_increments(spec: ChainSpec, i, nu: TargetMeasure) -> np.ndarray:
    """Integer deficit steps indexed by raw state (finite chains)."""
    drops = integer_ball_counts(spec, i, nu)
    incr = np.zeros(len(spec.states), dtype=np.int64)
    incr[spec.index(i)] = 1
    for s, c in drops.items():
        incr[spec.index(s)] = -c
    return incr


def _require_solvable(spec, i, nu, solver):
    if solver in ("tstar", "composite", "mixture"):
        if nu.get(i) != 0:
            raise TargetChargesStart("target charges the start state")
        v = check_feasibility(spec, i, nu)
        if not v.feasible:
            raise InfeasibleTarget(f"integer condition fails at {v.offending_state!r}")
    if solver == "tvisit" and not nu.is_dirac_at(i):
        raise TargetChargesStart("visit-count solver embeds the Dirac mass at the start")


def _ball_ratios(spec, i, nu) -> dict:
    return {j: Fraction(spec.stationary_weight(i)) * Fraction(nu.get(j))
            / Fraction(spec.stationary_weight(j)) for j in nu.support}


def _trand_scale(spec, i, nu) -> int:
    """Common denominator of the ball ratios: the deficit gain per white site
    when the randomized solver runs in integer units."""
    ratios = _ball_ratios(spec, i, nu)
    return lcm(*(r.denominator for r in ratios.values())) if ratios else 1


def _scaled_increments(spec, i, nu, q: int) -> np.ndarray:
    table = np.zeros(len(spec.states), dtype=np.int64)
    table[spec.index(i)] = q
    for j, r in _ball_ratios(spec, i, nu).items():
        table[spec.index(j)] = -int(r * q)
    return table


def _backward_fill(spec, seed, replica, i_raw, count):
    """States X_{-1}..X_{-count} drawn from the dual kernel."""
    gen = rng.replica_generator(seed, replica, rng.BACKWARD)
    if spec.kind == "srw_z":
        u = gen.random(count)
        return i_raw + np.cumsum(np.where(u < 0.5, -1, 1))
    cum = spec.dual_cum_rows
    out = np.empty(count, dtype=np.int64)
    s = i_raw
    u = gen.random(count)
    for k in range(count):
        s = int(np.searchsorted(cum[s], u[k], side="right"))
        out[k] = s
    return out


# -- per-replica time-block kernel (iid chains and the line walk) -------------


def _one_replica_blocks(spec, i, incr_by_state, solver, cap, seed, replica,
                        lags, gain=1, threshold=0, visit_target=1):
    """Scan one replica with vectorized time blocks.

    Returns (T, censored, landing_raw, segment) with T = cap when censored.
    """
    is_walk = spec.kind == "srw_z"
    if is_walk:
        i_raw = i
    else:
        cum_row = spec.cum_rows[0]
        i_raw = spec.index(i)
    gen = rng.replica_generator(seed, replica, rng.FORWARD)
    K = lags
    base_d = gain               # deficit after site 0 (white)
    base_v = 0                  # visits to i after time 0
    comp_ref = None             # composite: stop level once returned
    n_done = 0
    last_pos = i_raw            # walk position at window end
    tail = np.array([i_raw], dtype=np.int64)   # trailing states for segments
    block = _BLOCK0
    hit_t = -1
    states = None
    while n_done < cap:
        m = min(block, cap - n_done)
        u = gen.random(m)
        if is_walk:
            states = last_pos + np.cumsum(np.where(u < 0.5, -1, 1))
            last_pos = int(states[-1])
        else:
            states = np.searchsorted(cum_row, u, side="right")
        steps = incr_by_state(states)
        d = base_d + np.cumsum(steps)
        idx = -1
        if solver in ("tstar", "trand"):
            hits = np.nonzero(d <= threshold)[0]
            idx = int(hits[0]) if hits.size else -1
        elif solver == "tvisit":
            v = base_v + np.cumsum(states == i_raw)
            hits = np.nonzero(v >= visit_target)[0]
            idx = int(hits[0]) if hits.size else -1
            base_v = int(v[-1])
        elif solver == "composite":
            pos0 = 0
            if comp_ref is None:
                rts = np.nonzero(states == i_raw)[0]
                if rts.size:
                    r0 = int(rts[0])
                    comp_ref = int(d[r0]) - gain
                    pos0 = r0
            if comp_ref is not None:
                hits = np.nonzero(d[pos0:] <= comp_ref)[0]
                idx = pos0 + int(hits[0]) if hits.size else -1
        if idx >= 0:
            hit_t = n_done + idx + 1
            landing = int(states[idx])
            break
        base_d = int(d[-1])
        if K:
            tail = np.concatenate([tail, states])[-(K + 1):]
        n_done += m
        block = min(block * 4, _BLOCK_MAX)
    if hit_t < 0:
        return cap, True, -1, None
    if K == 0:
        return hit_t, False, landing, None

    # assemble X_{T-K .. T+K}
    have_right = states[idx + 1: idx + 1 + K]
    need = K - have_right.size
    if need > 0:
        u2 = gen.random(need)
        if is_walk:
            start = int(states[-1])
            extra = start + np.cumsum(np.where(u2 < 0.5, -1, 1))
        else:
            extra = np.searchsorted(cum_row, u2, side="right")
        have_right = np.concatenate([have_right, extra])
    full = np.concatenate([tail, states[:idx + 1]])
    # full covers sites hit_t - len(full) + 1 .. hit_t
    left = full[-(K + 1):-1] if full.size >= K + 1 else full[:-1]
    if left.size < K:
        missing = K - left.size   # sites below the materialized window
        back = _backward_fill(spec, seed, replica, i_raw, missing)[::-1]
        left = np.concatenate([back, left])
    seg = np.concatenate([left, [landing], have_right])
    return hit_t, False, landing, seg.astype(np.int64)


def _blockwise_batch(spec, i, nu, solver, cap, seed, rep0, count, lags,
                     solver_params):
    gain = _trand_scale(spec, i, nu) if solver == "trand" else 1
    if spec.kind == "srw_z":
        ratios = _ball_ratios(spec, i, nu) if nu is not None else {}
        support = sorted(ratios)
        weights = [int(ratios[s] * gain) for s in support]

        def incr_by_state(states):
            steps = gain * (states == i).astype(np.int64)
            for s, w in zip(support, weights):
                steps -= w * (states == s)
            return steps
    else:
        table = (_scaled_increments(spec, i, nu, gain)
                 if nu is not None else np.zeros(len(spec.states), np.int64))

        def incr_by_state(states):
            return table[states]

    K = lags
    T = np.full(count, cap, dtype=np.int64)
    censored = np.ones(count, dtype=bool)
    landing = np.full(count, -1 if spec.kind != "srw_z" else np.iinfo(np.int64).min,
                      dtype=np.int64)
    segments = np.full((count, 2 * K + 1), -1, dtype=np.int64) if K else None

    visit_target = solver_params.get("r", 1) if solver_params else 1
    pool = rng.StreamPool(seed)
    for t in range(count):
        rep = rep0 + t
        thr = 0
        if solver == "trand":
            u = float(pool.generator(rep, rng.AUX).random(1)[0])
            thr = floor(Fraction(u) * gain)
        t_val, cens, land, seg = _one_replica_blocks(
            spec, i, incr_by_state, solver, cap, seed, rep,
            K, gain=gain, threshold=thr, visit_target=visit_target)
        T[t] = t_val
        censored[t] = cens
        if not cens:
            landing[t] = land
        if K and seg is not None:
            segments[t] = seg
    return BatchResult(T, censored, landing, cap, rep0, seed, solver, K, segments)


# -- synchronous kernel (general finite chains) --------------------------------


def _sync_batch(spec, i, nu, solver, cap, seed, rep0, count, lags,
                solver_params):
    cum = spec.cum_rows
    i_idx = spec.index(i)
    K = lags
    incr_table = _deficit_increments(spec, i, nu) if nu is not None else None
    visit_target = solver_params.get("r", 1) if solver_params else 1

    naive = solver == "naive_wait_one"
    if naive:
        # per-replica rule: after one forced step, apply the scanner rule of
        # the state reached at time 1
        nstates = len(spec.states)
        drop_matrix = np.zeros((nstates, nstates), dtype=np.int64)
        for s_lbl in spec.states:
            s = spec.index(s_lbl)
            if spec.rows[i_idx][s] == 0:
                continue
            counts = integer_ball_counts(spec, s_lbl, nu)
            drop_matrix[s, s] = 1
            for j, c in counts.items():
                drop_matrix[s, spec.index(j)] = -c

    gain = _trand_scale(spec, i, nu) if solver == "trand" else 1
    if solver == "trand":
        incr_table = _scaled_increments(spec, i, nu, gain)

    cum_lists = [row.tolist() for row in cum]
    incr_list = incr_table.tolist() if incr_table is not None else None
    drop_lists = drop_matrix.tolist() if naive else None

    T_out = np.full(count, cap, dtype=np.int64)
    cens_out = np.ones(count, dtype=bool)
    land_out = np.full(count, -1, dtype=np.int64)
    seg_out = np.full((count, 2 * K + 1), -1, dtype=np.int64) if K else None

    pool_aux = rng.StreamPool(seed)
    for c0 in range(0, count, _SYNC_CHUNK):
        m = min(_SYNC_CHUNK, count - c0)
        gens = [rng.replica_generator(seed, rep0 + c0 + t, rng.FORWARD)
                for t in range(m)]
        thresholds = np.zeros(m, dtype=np.int64)
        if solver == "trand":
            for t in range(m):
                u = float(pool_aux.generator(rep0 + c0 + t, rng.AUX).random(1)[0])
                thresholds[t] = floor(Fraction(u) * gain)

        state = np.full(m, i_idx, dtype=np.int64)
        deficit = np.ones(m, dtype=np.int64)
        visits = np.zeros(m, dtype=np.int64)
        comp_ref = np.full(m, _I64_MIN, dtype=np.int64)
        white = np.full(m, i_idx, dtype=np.int64)   # per-replica white (naive)
        scanning = np.ones(m, dtype=bool)
        post = np.full(m, -1, dtype=np.int64)
        ring = np.full((m, K + 1), -1, dtype=np.int64) if K else None
        if K:
            ring[:, 0] = i_idx
        T = np.full(m, cap, dtype=np.int64)
        landing = np.full(m, -1, dtype=np.int64)

        if solver == "trand":
            deficit[:] = gain
        if naive:
            deficit[:] = 0   # rule starts at index 1

        U = np.empty((m, _SYNC_BLOCK))
        for t in range(m):
            U[t] = gens[t].random(_SYNC_BLOCK)
        col = 0

        def finish_straggler(t: int, n0: int, col0: int):
            """Tight per-replica loop once few replicas remain scanning.
            Continues the replica's stream from its unconsumed buffer slice;
            draw order therefore matches the vectorized path exactly."""
            from bisect import bisect_right
            gen = gens[t]
            buf = U[t, col0:].tolist()
            pos = 0
            s = int(state[t])
            d = int(deficit[t])
            vis = int(visits[t])
            ref = int(comp_ref[t])
            w = int(white[t])
            thr = int(thresholds[t])
            scanning_t = bool(scanning[t])
            post_k = int(post[t])
            hist = None
            if K:
                hist = [int(ring[t, (n0 - dlt) % (K + 1)])
                        for dlt in range(K, -1, -1)]
            step_n = n0
            while True:
                step_n += 1
                if pos == len(buf):
                    buf = gen.random(_SYNC_BLOCK).tolist()
                    pos = 0
                u = buf[pos]
                pos += 1
                s = bisect_right(cum_lists[s], u)
                if K:
                    hist.append(s)
                    if len(hist) > K + 1:
                        hist.pop(0)
                if scanning_t:
                    if naive:
                        if step_n == 1:
                            w = s
                            d = drop_lists[s][s]
                        else:
                            d += drop_lists[w][s]
                        hit = d <= 0 and step_n >= 2
                    elif solver == "trand":
                        d += incr_list[s]
                        hit = d <= thr
                    elif solver == "tvisit":
                        vis += s == i_idx
                        hit = vis >= visit_target
                    elif solver == "composite":
                        d += incr_list[s]
                        if s == i_idx and ref == _I64_MIN:
                            ref = d - 1
                        hit = d <= ref
                    else:
                        d += incr_list[s]
                        hit = d <= 0
                    if hit:
                        T[t] = step_n
                        landing[t] = s
                        scanning_t = False
                        post_k = 0
                        if K:
                            seg_out[c0 + t, :K + 1] = hist
                            if step_n < K:
                                back = _backward_fill(
                                    spec, seed, rep0 + c0 + t, i_idx,
                                    K - step_n)
                                seg_out[c0 + t, :K - step_n] = back[::-1]
                        else:
                            return
                    elif step_n >= cap:
                        return      # censored
                else:
                    post_k += 1
                    seg_out[c0 + t, K + post_k] = s
                    if post_k == K:
                        return

        act = np.nonzero(scanning | (post >= 0))[0]
        n = 0
        while act.size:
            n += 1
            if n > cap + K:
                break
            if col == _SYNC_BLOCK:
                for t in act:
                    U[t] = gens[t].random(_SYNC_BLOCK)
                col = 0
            u = U[act, col]
            col += 1
            s = (u[:, None] >= cum[state[act]]).sum(axis=1)
            state[act] = s
            if K:
                ring[act, n % (K + 1)] = s

            # rows in their post-stop phase record forward lag states first,
            # so rows stopping at this very step are not touched here
            if K:
                post_rows = act[post[act] >= 0]
                if post_rows.size:
                    step_no = post[post_rows] + 1
                    for t, k in zip(post_rows, step_no):
                        seg_out[c0 + t, K + k] = state[t]
                    post[post_rows] = step_no
                    done = post_rows[step_no == K]
                    post[done] = -1

            scan_mask = scanning[act]
            scan_rows = act[scan_mask]
            if scan_rows.size:
                sv = state[scan_rows]
                if naive:
                    if n == 1:
                        white[scan_rows] = sv
                        deficit[scan_rows] = drop_matrix[sv, sv]
                    else:
                        deficit[scan_rows] += drop_matrix[white[scan_rows], sv]
                    stopped = (deficit[scan_rows] <= 0) & (n >= 2)
                elif solver == "trand":
                    deficit[scan_rows] += incr_table[sv]
                    stopped = deficit[scan_rows] <= thresholds[scan_rows]
                elif solver == "tvisit":
                    visits[scan_rows] += sv == i_idx
                    stopped = visits[scan_rows] >= visit_target
                else:
                    deficit[scan_rows] += incr_table[sv]
                    if solver == "composite":
                        returned = (sv == i_idx) & (comp_ref[scan_rows]
                                                    == _I64_MIN)
                        if returned.any():
                            rr = scan_rows[returned]
                            comp_ref[rr] = deficit[rr] - 1
                        stopped = deficit[scan_rows] <= comp_ref[scan_rows]
                    else:
                        stopped = deficit[scan_rows] <= 0
                if n > cap:
                    stopped = np.zeros_like(stopped)
                hit = scan_rows[stopped]
                if hit.size:
                    T[hit] = n
                    landing[hit] = state[hit]
                    scanning[hit] = False
                    post[hit] = 0 if K else -1
                    if K:
                        for t in hit:
                            seg = np.empty(2 * K + 1, dtype=np.int64)
                            for d in range(K + 1):
                                seg[K - d] = ring[t, (n - d) % (K + 1)]
                            if n < K:   # sites below zero: dual-kernel fill
                                back = _backward_fill(
                                    spec, seed, rep0 + c0 + t, i_idx, K - n)
                                seg[:K - n] = back[::-1]
                            seg_out[c0 + t, :K + 1] = seg[:K + 1]
                if n == cap:
                    scanning[scan_rows] = False   # censored

            act = np.nonzero(scanning | (post >= 0))[0]
            if act.size and act.size <= _STRAGGLER_CUTOFF and n >= 1:
                for t in act:
                    finish_straggler(int(t), n, col)
                break

        T_out[c0:c0 + m] = T
        cens_out[c0:c0 + m] = (T >= cap) & (landing < 0)
        land_out[c0:c0 + m] = landing
    return BatchResult(T_out, cens_out, land_out, cap, rep0, seed, solver, K,
                       seg_out)


# -- dispatch -------------------------------------------------------------------


def sample_stopping_times(spec: ChainSpec, i, nu: TargetMeasure | None,
                          solver: str, cap: int, n: int, master_seed: int,
                          *, lags: int = 0, solver_params: dict | None = None,
                          threads: int = 1, replica0: int = 0) -> BatchResult:
    """Stopping times for replicas replica0..replica0+n-1.

    ``mixture`` draws, per replica, a fair auxiliary coin choosing between
    the scanner solution and the composite one on the same path.
    """
    if solver not in KNOWN_SOLVERS:
        raise ValueError(f"unknown solver {solver!r}")
    if solver == "mixture":
        a = sample_stopping_times(spec, i, nu, "tstar", cap, n, master_seed,
                                  lags=lags, threads=threads, replica0=replica0)
        b = sample_stopping_times(spec, i, nu, "composite", cap, n, master_seed,
                                  lags=lags, threads=threads, replica0=replica0)
        pool = rng.StreamPool(master_seed)
        coins = np.array([pool.generator(replica0 + t, rng.AUX).random(1)[0]
                          for t in range(n)])
        pick_b = coins >= 0.5
        T = np.where(pick_b, b.T, a.T)
        cens = np.where(pick_b, b.censored, a.censored)
        land = np.where(pick_b, b.landing, a.landing)
        seg = None
        if lags:
            seg = np.where(pick_b[:, None], b.segments, a.segments)
        return BatchResult(T, cens, land, cap, replica0, master_seed,
                           "mixture", lags, seg)

    if nu is not None:
        _require_solvable(spec, i, nu, solver)
    params = solver_params or {}

    if spec.kind == "srw_z2":
        raise ValueError("plane-walk batching is not supported; use the "
                         "per-trajectory solvers")
    use_sync = spec.kind == "matrix" or solver == "naive_wait_one"
    kernel = _sync_batch if use_sync else _blockwise_batch

    if threads <= 1 or n < 2 * _SYNC_CHUNK:
        return kernel(spec, i, nu, solver, cap, master_seed, replica0, n,
                      lags, params)
    bounds = np.linspace(0, n, threads + 1, dtype=int)
    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(
            lambda se: kernel(spec, i, nu, solver, cap, master_seed,
                              replica0 + se[0], se[1] - se[0], lags, params),
            zip(bounds[:-1], bounds[1:])))
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out


# -- first-passage walks ---------------------------------------------------------


def validate_increment_law(law: dict) -> dict:
    """Integer-valued, mean-zero increment law."""
    parsed = {}
    for v, p in law.items():
        v = int(v)
        p = Fraction(p) if not isinstance(p, float) else p
        if p < 0:
            raise ValueError("negative probability")
        parsed[v] = p
    total = sum(parsed.values())
    mean = sum(v * p for v, p in parsed.items())
    if isinstance(total, Fraction):
        if total != 1 or mean != 0:
            raise ValueError(f"law must be probability with mean 0, got "
                             f"total={total} mean={mean}")
    else:
        if abs(total - 1) > 1e-12 or abs(mean) > 1e-12:
            raise ValueError("law must be a probability law with mean zero")
    return parsed


def first_passage_pmf(law: dict, depth: int) -> dict:
    """Exact P(N = n) for n <= depth by dynamic programming over alive sums."""
    law = validate_increment_law(law)
    alive = {0: Fraction(1)}
    pmf = {}
    for n in range(1, depth + 1):
        nxt: dict = {}
        absorbed = Fraction(0)
        for s, p in alive.items():
            for v, q in law.items():
                q = Fraction(q)
                s2 = s + v
                if s2 <= 0:
                    absorbed += p * q
                else:
                    nxt[s2] = nxt.get(s2, Fraction(0)) + p * q
        pmf[n] = absorbed
        alive = nxt
    return pmf


def sample_first_passage(law: dict, n_max: int, n_replicas: int,
                         master_seed: int, replica0: int = 0) -> BatchResult:
    """First passage below zero of the increment walk, per replica stream."""
    law = validate_increment_law(law)
    values = np.array(sorted(law), dtype=np.int64)
    probs = np.array([float(law[v]) for v in sorted(law)])
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    T = np.full(n_replicas, n_max, dtype=np.int64)
    censored = np.ones(n_replicas, dtype=bool)
    for t in range(n_replicas):
        gen = rng.replica_generator(master_seed, replica0 + t, rng.FORWARD)
        base = 0
        n_done = 0
        block = _BLOCK0
        while n_done < n_max:
            m = min(block, n_max - n_done)
            u = gen.random(m)
            steps = values[np.searchsorted(cum, u, side="right")]
            s = base + np.cumsum(steps)
            hits = np.nonzero(s <= 0)[0]
            if hits.size:
                T[t] = n_done + int(hits[0]) + 1
                censored[t] = False
                break
            base = int(s[-1])
            n_done += m
            block = min(block * 4, _BLOCK_MAX)
    landing = np.full(n_replicas, -1, dtype=np.int64)
    return BatchResult(T, censored, landing, n_max, replica0, master_seed,
                       "first_passage")


def excursion_increment_check(spec: ChainSpec, i, nu: TargetMeasure,
                              cap: int, n_replicas: int, master_seed: int) -> int:
    """Per replica, build the return-block walk xi_k = 1 - m_i L_nu over
    successive returns to i and check the white-count inequality
    m_i L_i([0, T]) >= N - 1 linking its first passage to the scanner stop.

    Returns the number of replicas checked (skipping censored ones)."""
    from .embedding import solve_tstar
    from .trajectory import Trajectory
    checked = 0
    incr = _deficit_increments(spec, i, nu)
    i_raw = i if spec.is_lattice else spec.index(i)
    for r in range(n_replicas):
        traj = Trajectory(spec, i, master_seed=master_seed, replica=r)
        res = solve_tstar(traj, i, nu, cap)
        if res.censored:
            continue
        t_star = res.time
        # the return-block walk closes at the first revisit after the stop
        end = t_star + 1
        while end - t_star <= cap:
            traj.extend_forward(end)
            if traj.raw(end) == (i if spec.is_lattice else spec.index(i)):
                break
            end += 1
        else:
            continue
        raw = np.array(traj.raw_window(0, end), dtype=np.int64)
        white_count = int((raw[:t_star + 1] == i_raw).sum())
        # walk of return blocks: S_k = k - m_i L_nu([0, T_k)); N = first <= 0
        steps = incr[raw] if not spec.is_lattice else None
        if steps is None:
            steps = (raw == i_raw).astype(np.int64)
            for s, c in integer_ball_counts(spec, i, nu).items():
                steps = steps - c * (raw == s)
        returns = np.nonzero(raw[1:] == i_raw)[0] + 1
        s_val = 0
        n_fp = None
        prev = 0
        for k, t_k in enumerate(returns, start=1):
            s_val += int(steps[prev:t_k].sum())   # 1 - m_i L_nu over the block
            prev = t_k
            if s_val <= 0:
                n_fp = k
                break
        if n_fp is None:
            continue
        assert white_count >= n_fp - 1, (r, white_count, n_fp)
        checked += 1
    return checked


# -- tail estimation ---------------------------------------------------------------


@dataclass
class TailEstimate:
    grid: np.ndarray
    survival: np.ndarray
    slope: float
    slope_ci: tuple[float, float]
    fit_range: tuple[int, int]
    censored_fraction: float
    cap: int
    n: int
    seed: int
    solver: str = ""

    def to_record(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "survival": self.survival.tolist(),
            "slope": self.slope,
            "slope_ci": list(self.slope_ci),
            "fit_range": list(self.fit_range),
            "censored_fraction": self.censored_fraction,
            "cap": self.cap, "n": self.n, "seed": self.seed,
            "solver": self.solver,
        }


def _geometric_grid(lo: int, hi: int, points: int = 40) -> np.ndarray:
    g = np.unique(np.round(np.geomspace(lo, hi, points)).astype(np.int64))
    return g


def _survival(T_sorted: np.ndarray, grid: np.ndarray) -> np.ndarray:
    # censored values sit at cap, so T > g is decided correctly for g < cap
    idx = np.searchsorted(T_sorted, grid, side="right")
    return (T_sorted.size - idx) / T_sorted.size


def _wls_slope(logx: np.ndarray, logy: np.ndarray, w: np.ndarray) -> float:
    wx = np.average(logx, weights=w)
    wy = np.average(logy, weights=w)
    return float(np.sum(w * (logx - wx) * (logy - wy))
                 / np.sum(w * (logx - wx) ** 2))


def fit_tail_slope(T: np.ndarray, cap: int, master_seed: int,
                   fit_lo: int = 100, fit_hi: int | None = None,
                   bootstrap: int = 200, block: int | None = None):
    """Weighted log-log slope of the empirical survival curve with a block
    bootstrap over replicas for weights and the confidence interval."""
    n = T.size
    fit_hi = fit_hi or cap // 10
    if fit_hi <= fit_lo:
        raise ValueError(f"empty fit range [{fit_lo}, {fit_hi}]")
    grid = _geometric_grid(fit_lo, fit_hi)
    T_sorted = np.sort(T)
    surv = _survival(T_sorted, grid)
    keep = surv > 0
    grid, surv = grid[keep], surv[keep]
    if grid.size < 5:
        raise ExcessCensoring("not enough tail mass in the fit range")

    block = block or max(1, int(np.sqrt(n)))
    nblocks = n // block
    gen = rng.replica_generator(master_seed, 0, rng.HARNESS)
    boots = np.empty((bootstrap, grid.size))
    for b in range(bootstrap):
        starts = gen.integers(0, nblocks, size=nblocks) * block
        take = (starts[:, None] + np.arange(block)[None, :]).ravel()
        boots[b] = _survival(np.sort(T[take]), grid)
    logb = np.log(np.maximum(boots, 0.5 / n))
    var = logb.var(axis=0)
    w = 1.0 / np.maximum(var, 1e-8)
    logg = np.log(grid)
    slope = _wls_slope(logg, np.log(surv), w)
    bslopes = np.array([_wls_slope(logg, logb[b], w) for b in range(bootstrap)])
    ci = (float(np.quantile(bslopes, 0.025)), float(np.quantile(bslopes, 0.975)))
    return grid, surv, slope, ci


def estimate_tail(spec: ChainSpec, i, nu: TargetMeasure | None, solver: str,
                  cap: int, n: int, master_seed: int, *, fit_lo: int = 100,
                  fit_hi: int | None = None, threads: int = 1,
                  solver_params: dict | None = None) -> TailEstimate:
    """Empirical survival curve of the stopping time and its log-log slope."""
    batch = sample_stopping_times(spec, i, nu, solver, cap, n, master_seed,
                                  threads=threads, solver_params=solver_params)
    frac = float(batch.censored.mean())
    if frac > 0.5:
        raise ExcessCensoring(f"{frac:.0%} of replicas censored at cap {cap}")
    grid, surv, slope, ci = fit_tail_slope(batch.T, cap, master_seed,
                                           fit_lo=fit_lo, fit_hi=fit_hi)
    return TailEstimate(grid, surv, slope, ci, (fit_lo, fit_hi or cap // 10),
                        frac, cap, n, master_seed, solver)


def first_passage_oracle(law: dict, n_max: int, n_replicas: int,
                         master_seed: int, *, fit_lo: int = 100,
                         fit_hi: int | None = None) -> TailEstimate:
    """Monte Carlo survival curve and slope of the first passage below zero
    for an explicit integer increment law."""
    batch = sample_first_passage(law, n_max, n_replicas, master_seed)
    frac = float(batch.censored.mean())
    grid, surv, slope, ci = fit_tail_slope(batch.T, n_max, master_seed,
                                           fit_lo=fit_lo, fit_hi=fit_hi)
    return TailEstimate(grid, surv, slope, ci, (fit_lo, fit_hi or n_max // 10),
                        frac, n_max, n_replicas, master_seed, "first_passage")


# -- moment estimation ----------------------------------------------------------


@dataclass
class MomentEstimate:
    beta: float
    functional: str
    checkpoints: list            # (sample size, running mean)
    growths: list                # consecutive-doubling relative growth
    total_growth: float
    divergence_flag: bool
    finite_flag: bool
    censored: int
    lower_bound_only: bool
    cap: int
    n: int
    seed: int
    solver: str = ""
    stability_tol: float = 0.05
    growth_threshold: float = 0.20

    def to_record(self) -> dict:
        return {
            "beta": self.beta, "functional": self.functional,
            "checkpoints": [[int(a), float(b)] for a, b in self.checkpoints],
            "growths": [float(g) for g in self.growths],
            "total_growth": float(self.total_growth),
            "divergence_flag": self.divergence_flag,
            "finite_flag": self.finite_flag,
            "censored": self.censored,
            "lower_bound_only": self.lower_bound_only,
            "cap": self.cap, "n": self.n, "seed": self.seed,
            "solver": self.solver,
        }


def moment_flags_from_values(x: np.ndarray, n: int, stability_tol: float,
                             growth_threshold: float):
    """Running means at n/4, n/2, n and the divergence/finite flags.

    Finite: every consecutive-doubling growth within the stability band.
    Divergence: total growth across the doubling sequence beyond the
    threshold.  Heavy-tailed functionals can set neither flag.
    """
    sizes = [n // 4, n // 2, n]
    means = [float(x[:k].mean()) for k in sizes]
    growths = [means[1] / means[0] - 1.0, means[2] / means[1] - 1.0]
    total = means[2] / means[0] - 1.0
    finite = all(abs(g) <= stability_tol for g in growths)
    diverging = total > growth_threshold
    return list(zip(sizes, means)), growths, total, diverging, finite


def estimate_moment(spec: ChainSpec, i, nu: TargetMeasure | None, solver: str,
                    beta: float, functional: str, cap: int, n: int,
                    master_seed: int, *, threads: int = 1,
                    stability_tol: float = 0.05,
                    growth_threshold: float = 0.20,
                    solver_params: dict | None = None) -> MomentEstimate:
    """Running-mean diagnostics for E[T^beta] or E[a(T)^beta].

    Censored replicas contribute their capped value, which makes every
    reported mean a lower bound; the estimate is annotated accordingly.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if functional not in ("T^beta", "a(T)^beta"):
        raise ValueError(f"unknown functional {functional!r}")
    batch = sample_stopping_times(spec, i, nu, solver, cap, n, master_seed,
                                  threads=threads, solver_params=solver_params)
    frac = float(batch.censored.mean())
    if frac > 0.5:
        raise ExcessCensoring(f"{frac:.0%} of replicas censored")
    vals = batch.T.astype(np.float64)
    if functional == "a(T)^beta":
        vals = _green_values(spec, i, batch.T)
    x = vals ** beta if beta != 0 else np.ones_like(vals)
    checkpoints, growths, total, div, fin = moment_flags_from_values(
        x, n, stability_tol, growth_threshold)
    return MomentEstimate(
        beta=float(beta), functional=functional, checkpoints=checkpoints,
        growths=growths, total_growth=total, divergence_flag=div,
        finite_flag=fin, censored=int(batch.censored.sum()),
        lower_bound_only=bool(batch.censored.any()), cap=cap, n=n,
        seed=master_seed, solver=solver, stability_tol=stability_tol,
        growth_threshold=growth_threshold)


def _green_values(spec: ChainSpec, i, T: np.ndarray) -> np.ndarray:
    """a_ii(T) per sample via the memoized diagonal table."""
    if spec.kind == "iid":
        # each step revisits i with its categorical weight w: a_ii(n) = 1/w + n
        w = float(spec.stationary_weight(i))
        return 1.0 / w + T.astype(np.float64)
    table = green_table(spec, i).diagonal_array(int(T.max()))
    return table[T]
