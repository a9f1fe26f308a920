"""Statistical verification of the shifted law and of concave-cost optimality.

``verify_shifted_law`` re-centers the chain at the stopping time and tallies
the landing-state marginal plus forward and backward transition counts at
lags 1..K, testing them with chi-square statistics against the kernel and
the dual kernel.  A valid solver passes all of them; the deliberately biased
wait-one control fails the backward test.

``compare_optimality`` runs paired replicas of the scanner solution against
alternative solvers and bootstraps the mean difference of concave costs; the
scanner solution should never be significantly more expensive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import rng
from .chains import ChainSpec
from .errors import ExcessCensoring, InvalidAlternative
from .local_time import TargetMeasure
from .montecarlo import BatchResult, sample_stopping_times
from .transport import CostFunction


@dataclass
class LagTest:
    lag: int
    statistic: float
    dof: int
    p_value: float
    max_cell_sigmas: float

    def to_record(self) -> dict:
        return {"lag": self.lag, "statistic": self.statistic, "dof": self.dof,
                "p_value": self.p_value, "max_cell_sigmas": self.max_cell_sigmas}


@dataclass
class LawReport:
    solver: str
    n_effective: int
    censored: int
    marginal_exact: bool          # Dirac target: every landing is the target
    marginal_p: float
    forward: list
    backward: list
    seed: int

    @property
    def forward_min_p(self) -> float:
        return min(t.p_value for t in self.forward)

    @property
    def backward_min_p(self) -> float:
        return min(t.p_value for t in self.backward)

    def passed(self, threshold: float = 1e-3) -> bool:
        return (self.marginal_exact and self.marginal_p >= threshold
                and self.forward_min_p > threshold
                and self.backward_min_p > threshold)

    def to_record(self) -> dict:
        return {
            "solver": self.solver,
            "n_effective": self.n_effective,
            "censored": self.censored,
            "marginal_exact": self.marginal_exact,
            "marginal_p": self.marginal_p,
            "forward": [t.to_record() for t in self.forward],
            "backward": [t.to_record() for t in self.backward],
            "forward_min_p": self.forward_min_p,
            "backward_min_p": self.backward_min_p,
            "seed": self.seed,
        }


def _transition_chi2(pairs_from: np.ndarray, pairs_to: np.ndarray,
                     kernel_rows: np.ndarray, lag: int) -> LagTest:
    """Chi-square of observed (from, to) counts against kernel rows,
    conditioning on the observed row totals."""
    k = kernel_rows.shape[0]
    counts = np.zeros((k, k))
    np.add.at(counts, (pairs_from, pairs_to), 1.0)
    stat = 0.0
    dof = 0
    max_sig = 0.0
    for a in range(k):
        row_n = counts[a].sum()
        if row_n == 0:
            continue
        p = kernel_rows[a]
        support = p > 0
        expected = row_n * p[support]
        observed = counts[a][support]
        stat += float(((observed - expected) ** 2 / expected).sum())
        dof += int(support.sum()) - 1
        se = np.sqrt(row_n * p[support] * (1 - p[support]))
        with np.errstate(divide="ignore", invalid="ignore"):
            sig = np.abs(observed - expected) / np.where(se > 0, se, np.inf)
        max_sig = max(max_sig, float(sig.max()))
        # states outside the kernel support must never be observed
        if counts[a][~support].sum() > 0:
            stat = float("inf")
    p_value = float(stats.chi2.sf(stat, dof)) if dof > 0 else 1.0
    return LagTest(lag, stat, dof, p_value, max_sig)


def _walk_step_chi2(pairs_from: np.ndarray, pairs_to: np.ndarray,
                    lag: int) -> LagTest:
    """Line-walk variant: steps must be fair +-1."""
    steps = pairs_to - pairs_from
    n = steps.size
    ups = int((steps == 1).sum())
    downs = int((steps == -1).sum())
    if ups + downs != n:
        return LagTest(lag, float("inf"), 1, 0.0, float("inf"))
    expected = n / 2
    stat = (ups - expected) ** 2 / expected + (downs - expected) ** 2 / expected
    sig = abs(ups - expected) / np.sqrt(n * 0.25)
    return LagTest(lag, float(stat), 1, float(stats.chi2.sf(stat, 1)), float(sig))


def verify_shifted_law(spec: ChainSpec, i, nu: TargetMeasure, solver: str,
                       lag_range: int, n: int, master_seed: int, *,
                       cap: int = 1_000_000, threads: int = 1,
                       solver_params: dict | None = None,
                       batch: BatchResult | None = None) -> LawReport:
    """Distributional test of the re-centered path.

    Per replica the path around the stopping time is tallied: the marginal of
    the landing state, forward transitions at lags 1..K against the kernel,
    and backward transitions at lags -1..-K against the dual kernel.
    """
    K = lag_range
    if batch is None:
        batch = sample_stopping_times(spec, i, nu, solver, cap, n, master_seed,
                                      lags=K, threads=threads,
                                      solver_params=solver_params)
    keep = ~batch.censored
    n_eff = int(keep.sum())
    if n_eff < max(100, n // 2):
        raise ExcessCensoring(f"only {n_eff} of {n} replicas uncensored")
    seg = batch.segments[keep]
    landing = batch.landing[keep]

    # marginal of the landing state
    if spec.is_lattice:
        support_raw = {s: float(nu.get(s)) for s in nu.support}
        on_support = np.isin(landing, list(support_raw))
        marginal_exact = bool(on_support.all())
        counts = {s: int((landing == s).sum()) for s in support_raw}
        expected = np.array([n_eff * support_raw[s] for s in support_raw])
        observed = np.array([counts[s] for s in support_raw])
    else:
        support_idx = [spec.index(s) for s in nu.support]
        on_support = np.isin(landing, support_idx)
        marginal_exact = bool(on_support.all())
        expected = np.array([n_eff * float(nu.get(s)) for s in nu.support])
        observed = np.array([(landing == spec.index(s)).sum()
                             for s in nu.support])
    if len(observed) > 1:
        stat = float(((observed - expected) ** 2 / expected).sum())
        marginal_p = float(stats.chi2.sf(stat, len(observed) - 1))
    else:
        marginal_p = 1.0 if marginal_exact else 0.0

    if spec.is_lattice:
        fwd_rows = bwd_rows = None
    else:
        fwd_rows = np.array([[float(v) for v in r] for r in spec.rows])
        d = spec.dual()
        bwd_rows = np.array([[float(v) for v in r] for r in d.rows])

    forward, backward = [], []
    for lag in range(1, K + 1):
        f_from, f_to = seg[:, K + lag - 1], seg[:, K + lag]
        b_from, b_to = seg[:, K - lag + 1], seg[:, K - lag]
        if spec.is_lattice:
            forward.append(_walk_step_chi2(f_from, f_to, lag))
            backward.append(_walk_step_chi2(b_from, b_to, -lag))
        else:
            forward.append(_transition_chi2(f_from, f_to, fwd_rows, lag))
            backward.append(_transition_chi2(b_from, b_to, bwd_rows, -lag))

    return LawReport(
        solver=solver, n_effective=n_eff, censored=int(batch.censored.sum()),
        marginal_exact=marginal_exact, marginal_p=marginal_p,
        forward=forward, backward=backward, seed=master_seed)


@dataclass
class ArmComparison:
    alternative: str
    psi: str
    mean_reference: float
    mean_alternative: float
    mean_difference: float
    ci: tuple[float, float]
    consistent_with_optimality: bool
    excludes_negative: bool

    def to_record(self) -> dict:
        return {
            "alternative": self.alternative, "psi": self.psi,
            "mean_reference": self.mean_reference,
            "mean_alternative": self.mean_alternative,
            "mean_difference": self.mean_difference,
            "ci": list(self.ci),
            "consistent_with_optimality": self.consistent_with_optimality,
            "excludes_negative": self.excludes_negative,
        }


@dataclass
class ComparisonReport:
    arms: list
    n: int
    cap: int
    seed: int

    def all_consistent(self) -> bool:
        return all(a.consistent_with_optimality for a in self.arms)

    def to_record(self) -> dict:
        return {"arms": [a.to_record() for a in self.arms],
                "n": self.n, "cap": self.cap, "seed": self.seed}


def _paired_bootstrap_ci(diff: np.ndarray, master_seed: int,
                         bootstrap: int = 1000,
                         block: int | None = None) -> tuple[float, float]:
    n = diff.size
    block = block or max(1, int(np.sqrt(n)))
    nblocks = n // block
    gen = rng.replica_generator(master_seed, 1, rng.HARNESS)
    means = np.empty(bootstrap)
    for b in range(bootstrap):
        starts = gen.integers(0, nblocks, size=nblocks) * block
        take = (starts[:, None] + np.arange(block)[None, :]).ravel()
        means[b] = diff[take].mean()
    return float(np.quantile(means, 0.025)), float(np.quantile(means, 0.975))


def compare_optimality(spec: ChainSpec, i, nu: TargetMeasure,
                       alternatives: list[str], psis: list[CostFunction],
                       cap: int, n: int, master_seed: int, *,
                       threads: int = 1, bootstrap: int = 1000,
                       verify_n: int | None = None,
                       verify_lags: int = 3,
                       verify_threshold: float = 1e-3) -> ComparisonReport:
    """Paired comparison of E[psi(T)] between the scanner solution and each
    alternative solver, with a block-bootstrap CI of the mean difference.

    Every alternative must first pass the shifted-law test (it has to be a
    valid embedding before its cost is meaningful); censored replicas enter
    through the capped functional psi(min(T, cap)) on both arms, itself a
    concave non-decreasing cost.
    """
    if not psis:
        raise ValueError("need at least one cost function")
    verify_n = verify_n or max(2_000, n // 10)
    for alt in alternatives:
        rep = verify_shifted_law(spec, i, nu, alt, verify_lags, verify_n,
                                 master_seed, cap=cap, threads=threads)
        if not rep.passed(verify_threshold):
            raise InvalidAlternative(
                f"{alt} failed the shifted-law test "
                f"(marginal_exact={rep.marginal_exact}, "
                f"fwd p={rep.forward_min_p:.2e}, bwd p={rep.backward_min_p:.2e})")

    ref = sample_stopping_times(spec, i, nu, "tstar", cap, n, master_seed,
                                threads=threads)
    arms = []
    for alt in alternatives:
        other = sample_stopping_times(spec, i, nu, alt, cap, n, master_seed,
                                      threads=threads)
        for psi in psis:
            x_ref = psi.apply(ref.T)
            x_alt = psi.apply(other.T)
            diff = x_alt - x_ref
            ci = _paired_bootstrap_ci(diff, master_seed, bootstrap)
            arms.append(ArmComparison(
                alternative=alt, psi=psi.name,
                mean_reference=float(x_ref.mean()),
                mean_alternative=float(x_alt.mean()),
                mean_difference=float(diff.mean()), ci=ci,
                consistent_with_optimality=ci[1] >= 0,
                excludes_negative=ci[0] >= 0))
    return ComparisonReport(arms=arms, n=n, cap=cap, seed=master_seed)
