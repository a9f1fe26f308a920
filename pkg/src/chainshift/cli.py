"""Command-line front end: experiments from config files, reports to disk.

Subcommands: check, sample, verify, tail, moment, compare, oracle.  Every
command is a pure function of (config, seed): reports embed the master seed,
sample counts, cap, and the package version, and re-runs are byte-identical.
Exit codes: 0 pass, 2 domain-negative verdict (infeasible target, failed
check, inconsistent comparison), 1 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .chains import chain_to_dict
from .config import ExperimentConfig, load_config, load_fixture
from .embedding import (check_feasibility, solve_composite, solve_trand,
                        solve_tstar, solve_tvisit)
from .errors import ChainshiftError, ConfigError
from .local_time import TargetMeasure
from .montecarlo import (estimate_moment, estimate_tail, first_passage_oracle,
                         sample_stopping_times)
from .trajectory import Trajectory
from .transport import CostFunction
from .verification import compare_optimality, verify_shifted_law

OK, DOMAIN_NEGATIVE, ERROR = 0, 2, 1


def _report_header(cfg: ExperimentConfig) -> dict:
    return {
        "version": __version__,
        "seed": cfg.seed,
        "replicas": cfg.replicas,
        "cap": cfg.cap,
        "chain": chain_to_dict(cfg.chain),
    }


def _write_json(cfg: ExperimentConfig, name: str, payload: dict) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def _write_csv(cfg: ExperimentConfig, name: str, header: str,
               rows: list[str]) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text("\n".join([header] + rows) + "\n")
    return path


def _state_str(s) -> str:
    if isinstance(s, tuple):
        return f"{s[0]}:{s[1]}"
    return str(s)


def cmd_check(cfg: ExperimentConfig) -> int:
    if cfg.target is None:
        raise ConfigError("check needs a target measure")
    verdict = check_feasibility(cfg.chain, cfg.initial_state, cfg.target)
    payload = _report_header(cfg)
    payload["feasible"] = verdict.feasible
    payload["reason"] = verdict.reason
    payload["witness"] = {
        _state_str(s): {"ratio": str(r), "integer": ok}
        for s, (r, ok) in sorted(verdict.witness.items(), key=lambda kv: str(kv[0]))
    }
    _write_json(cfg, "check.json", payload)
    print("feasible" if verdict.feasible else f"infeasible ({verdict.reason})")
    return OK if verdict.feasible else DOMAIN_NEGATIVE


def _solve_fixture(cfg: ExperimentConfig):
    states, origin = load_fixture(cfg.source_dir / cfg.fixture, cfg.chain)
    traj = Trajectory.fixed(cfg.chain, states, origin_index=origin)
    cap = min(cfg.cap, traj.hi)
    i = cfg.initial_state
    if cfg.solver == "tstar":
        res = solve_tstar(traj, i, cfg.target, cap)
    elif cfg.solver == "trand":
        raise ConfigError("fixture sampling supports non-randomized solvers only")
    elif cfg.solver == "tvisit":
        res = solve_tvisit(traj, i, cfg.visit_count, cap=cap)
    elif cfg.solver == "composite":
        res = solve_composite(traj, i, cfg.target, cap)
    else:
        raise ConfigError(f"fixture sampling does not support {cfg.solver}")
    return res


def cmd_sample(cfg: ExperimentConfig) -> int:
    if cfg.target is None:
        raise ConfigError("sample needs a target measure")
    if cfg.fixture:
        res = _solve_fixture(cfg)
        rows = [f"0,{res.value},{_state_str(res.landing_state) if not res.censored else ''},"
                f"{str(res.censored).lower()}"]
        _write_csv(cfg, "sample.csv", "replica,T,X_T,censored", rows)
        print(f"fixture T={res.value} censored={res.censored}")
        return OK
    verdict = check_feasibility(cfg.chain, cfg.initial_state, cfg.target)
    if cfg.solver in ("tstar", "composite", "mixture") and not verdict.feasible:
        print(f"infeasible ({verdict.reason})")
        return DOMAIN_NEGATIVE
    params = {"r": cfg.visit_count} if cfg.solver == "tvisit" else None
    batch = sample_stopping_times(
        cfg.chain, cfg.initial_state, cfg.target, cfg.solver, cfg.cap,
        cfg.replicas, cfg.seed, threads=cfg.threads, solver_params=params)
    if cfg.chain.is_lattice:
        landing = [_state_str(int(v)) if not c else ""
                   for v, c in zip(batch.landing, batch.censored)]
    else:
        landing = [cfg.chain.states[v] if not c else ""
                   for v, c in zip(batch.landing, batch.censored)]
    rows = [f"{r},{t},{x},{str(bool(c)).lower()}"
            for r, (t, x, c) in enumerate(zip(batch.T, landing, batch.censored))]
    _write_csv(cfg, "sample.csv", "replica,T,X_T,censored", rows)
    if cfg.format == "json":
        payload = _report_header(cfg)
        payload["solver"] = cfg.solver
        payload["censored"] = int(batch.censored.sum())
        payload["mean_capped_T"] = float(batch.T.mean())
        _write_json(cfg, "sample.json", payload)
    print(f"sampled {cfg.replicas} replicas, censored {int(batch.censored.sum())}")
    return OK


def cmd_verify(cfg: ExperimentConfig, threshold: float = 1e-3) -> int:
    if cfg.target is None:
        raise ConfigError("verify needs a target measure")
    report = verify_shifted_law(
        cfg.chain, cfg.initial_state, cfg.target, cfg.solver, cfg.lags,
        cfg.replicas, cfg.seed, cap=cfg.cap, threads=cfg.threads,
        solver_params={"r": cfg.visit_count} if cfg.solver == "tvisit" else None)
    payload = _report_header(cfg)
    payload["report"] = report.to_record()
    payload["threshold"] = threshold
    payload["passed"] = report.passed(threshold)
    _write_json(cfg, "verify.json", payload)
    print(f"marginal_exact={report.marginal_exact} "
          f"forward_min_p={report.forward_min_p:.3g} "
          f"backward_min_p={report.backward_min_p:.3g} "
          f"=> {'pass' if payload['passed'] else 'FAIL'}")
    return OK if payload["passed"] else DOMAIN_NEGATIVE


def cmd_tail(cfg: ExperimentConfig) -> int:
    if cfg.target is None:
        raise ConfigError("tail needs a target measure")
    est = estimate_tail(
        cfg.chain, cfg.initial_state, cfg.target, cfg.solver, cfg.cap,
        cfg.replicas, cfg.seed, fit_lo=cfg.fit_lo, fit_hi=cfg.fit_hi,
        threads=cfg.threads,
        solver_params={"r": cfg.visit_count} if cfg.solver == "tvisit" else None)
    payload = _report_header(cfg)
    payload["tail"] = est.to_record()
    _write_json(cfg, "tail.json", payload)
    rows = [f"{int(g)},{s!r}" for g, s in zip(est.grid, est.survival)]
    _write_csv(cfg, "tail_survival.csv", "n,survival", rows)
    print(f"slope={est.slope:.4f} ci=({est.slope_ci[0]:.4f},{est.slope_ci[1]:.4f}) "
          f"censored={est.censored_fraction:.2%}")
    return OK


def cmd_moment(cfg: ExperimentConfig) -> int:
    if cfg.target is None:
        raise ConfigError("moment needs a target measure")
    payload = _report_header(cfg)
    payload["moments"] = []
    rows = []
    for beta in cfg.betas:
        est = estimate_moment(
            cfg.chain, cfg.initial_state, cfg.target, cfg.solver, beta,
            cfg.functional, cfg.cap, cfg.replicas, cfg.seed,
            threads=cfg.threads, stability_tol=cfg.stability_tol,
            growth_threshold=cfg.growth_threshold)
        payload["moments"].append(est.to_record())
        for size, mean in est.checkpoints:
            rows.append(f"{beta!r},{size},{mean!r}")
        print(f"beta={beta}: means={[f'{m:.4f}' for _, m in est.checkpoints]} "
              f"finite={est.finite_flag} divergent={est.divergence_flag}")
    _write_json(cfg, "moment.json", payload)
    _write_csv(cfg, "moment_running.csv", "beta,n,running_mean", rows)
    return OK


def cmd_compare(cfg: ExperimentConfig) -> int:
    if cfg.target is None:
        raise ConfigError("compare needs a target measure")
    if not cfg.psis:
        raise ConfigError("compare needs a non-empty psi set")
    if not cfg.alternatives:
        raise ConfigError("compare needs at least one alternative solver")
    psis = [CostFunction.parse(p) for p in cfg.psis]
    report = compare_optimality(
        cfg.chain, cfg.initial_state, cfg.target, cfg.alternatives, psis,
        cfg.cap, cfg.replicas, cfg.seed, threads=cfg.threads,
        bootstrap=cfg.bootstrap)
    payload = _report_header(cfg)
    payload["comparison"] = report.to_record()
    payload["all_consistent"] = report.all_consistent()
    _write_json(cfg, "compare.json", payload)
    for arm in report.arms:
        print(f"{arm.alternative}/{arm.psi}: diff={arm.mean_difference:+.4f} "
              f"ci=({arm.ci[0]:+.4f},{arm.ci[1]:+.4f}) "
              f"{'ok' if arm.consistent_with_optimality else 'VIOLATION'}")
    return OK if report.all_consistent() else DOMAIN_NEGATIVE


def cmd_oracle(cfg: ExperimentConfig) -> int:
    if not cfg.oracle_law:
        raise ConfigError("oracle needs an increment law table")
    est = first_passage_oracle(cfg.oracle_law, cfg.cap, cfg.replicas, cfg.seed,
                               fit_lo=cfg.fit_lo, fit_hi=cfg.fit_hi)
    payload = _report_header(cfg)
    payload["oracle"] = est.to_record()
    _write_json(cfg, "oracle.json", payload)
    rows = [f"{int(g)},{s!r}" for g, s in zip(est.grid, est.survival)]
    _write_csv(cfg, "oracle_survival.csv", "n,survival", rows)
    print(f"slope={est.slope:.4f} ci=({est.slope_ci[0]:.4f},{est.slope_ci[1]:.4f})")
    return OK


_COMMANDS = {
    "check": cmd_check,
    "sample": cmd_sample,
    "verify": cmd_verify,
    "tail": cmd_tail,
    "moment": cmd_moment,
    "compare": cmd_compare,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainshift",
        description="Embeddings of two-sided chains: feasibility, optimal "
                    "stopping times, and statistical verification.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML or JSON config")
        p.add_argument("--seed", type=int, help="override master seed")
        p.add_argument("--replicas", type=int, help="override replica count")
        p.add_argument("--cap", type=int, help="override step cap")
        p.add_argument("--threads", type=int, help="worker pool size")
        p.add_argument("--out-dir", help="report directory")
        p.add_argument("--format", choices=("json", "csv"), help="report format")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        for attr, key in (("seed", "seed"), ("replicas", "replicas"),
                          ("cap", "cap"), ("threads", "threads"),
                          ("out_dir", "out_dir"), ("format", "format")):
            val = getattr(args, attr if attr != "out_dir" else "out_dir", None)
            if val is not None:
                setattr(cfg, key, val)
        return _COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return ERROR
    except ChainshiftError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
