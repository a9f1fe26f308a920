"""Experiment configuration: TOML/JSON documents driving the CLI.

A config has a ``[chain]`` table (kind plus matrix rows / weights, rationals
as "p/q" strings for exact arithmetic) and an ``[experiment]`` table naming
the start state, target measure, solver, and sampling parameters.  The seed
is mandatory: no command ever seeds from the clock, so every run is a pure
function of (config, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .chains import ChainSpec, chain_from_dict
from .errors import ConfigError
from .local_time import TargetMeasure
from .montecarlo import KNOWN_SOLVERS

_LIMITS = {
    "replicas": (1, 10**8),
    "cap": (1, 10**12),
    "lags": (1, 64),
    "threads": (1, 64),
    "visit_count": (1, 10**9),
    "bootstrap": (10, 10**5),
}


@dataclass
class ExperimentConfig:
    chain: ChainSpec
    initial_state: object
    target: TargetMeasure | None
    solver: str = "tstar"
    replicas: int = 10_000
    cap: int = 1_000_000
    seed: int = 0
    lags: int = 5
    betas: list = field(default_factory=lambda: [0.4, 0.5])
    functional: str = "T^beta"
    psis: list = field(default_factory=list)
    alternatives: list = field(default_factory=list)
    visit_count: int = 1
    threads: int = 1
    bootstrap: int = 200
    fit_lo: int = 100
    fit_hi: int | None = None
    stability_tol: float = 0.05
    growth_threshold: float = 0.20
    fixture: str | None = None
    oracle_law: dict | None = None
    out_dir: str = "out"
    format: str = "json"
    source_dir: Path = field(default_factory=Path)


def _parse_state(spec: ChainSpec, raw):
    if spec.is_lattice:
        if isinstance(raw, list):
            return tuple(int(v) for v in raw)
        return int(raw)
    return raw


def _check_range(name: str, value: int):
    lo, hi = _LIMITS[name]
    if not lo <= value <= hi:
        raise ConfigError(f"{name}={value} outside documented range [{lo}, {hi}]")
    return value


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        if path.suffix == ".json":
            doc = json.loads(path.read_text())
        else:
            with open(path, "rb") as fh:
                doc = tomli.load(fh)
    except (OSError, ValueError, tomli.TOMLDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    cfg = config_from_dict(doc)
    cfg.source_dir = path.parent
    return cfg


def config_from_dict(doc: dict) -> ExperimentConfig:
    if "chain" not in doc:
        raise ConfigError("missing [chain] table")
    if "experiment" not in doc:
        raise ConfigError("missing [experiment] table")
    try:
        chain = chain_from_dict(doc["chain"])
    except Exception as e:
        raise ConfigError(f"invalid chain: {e}") from e

    exp = doc["experiment"]
    if "seed" not in exp:
        raise ConfigError("seed is mandatory (no wall-clock seeding)")
    seed = int(exp["seed"])
    if seed < 0:
        raise ConfigError("seed must be non-negative")

    if "initial_state" not in exp:
        raise ConfigError("initial_state is required")
    initial = _parse_state(chain, exp["initial_state"])
    chain.require_state(initial)

    target = None
    if "target" in exp:
        weights = {_parse_state(chain, k): v for k, v in exp["target"].items()}
        try:
            target = TargetMeasure(weights)
        except ValueError as e:
            raise ConfigError(f"invalid target: {e}") from e
        target.validate_states(chain)

    solver = exp.get("solver", "tstar")
    if solver not in KNOWN_SOLVERS:
        raise ConfigError(f"unknown solver {solver!r}; choose from {KNOWN_SOLVERS}")

    out = doc.get("output", {})
    cfg = ExperimentConfig(
        chain=chain,
        initial_state=initial,
        target=target,
        solver=solver,
        replicas=_check_range("replicas", int(exp.get("replicas", 10_000))),
        cap=_check_range("cap", int(exp.get("cap", 1_000_000))),
        seed=seed,
        lags=_check_range("lags", int(exp.get("lags", 5))),
        betas=[float(b) for b in exp.get("betas", [0.4, 0.5])],
        functional=exp.get("functional", "T^beta"),
        psis=list(exp.get("psis", [])),
        alternatives=list(exp.get("alternatives", [])),
        visit_count=_check_range("visit_count", int(exp.get("visit_count", 1))),
        threads=_check_range("threads", int(exp.get("threads", 1))),
        bootstrap=_check_range("bootstrap", int(exp.get("bootstrap", 200))),
        fit_lo=int(exp.get("fit_lo", 100)),
        fit_hi=int(exp["fit_hi"]) if "fit_hi" in exp else None,
        stability_tol=float(exp.get("stability_tol", 0.05)),
        growth_threshold=float(exp.get("growth_threshold", 0.20)),
        fixture=exp.get("fixture"),
        oracle_law={int(k): v for k, v in exp["oracle_law"].items()}
        if "oracle_law" in exp else None,
        out_dir=out.get("out_dir", "out"),
        format=out.get("format", "json"),
    )
    if cfg.functional not in ("T^beta", "a(T)^beta"):
        raise ConfigError(f"unknown functional {cfg.functional!r}")
    if cfg.format not in ("json", "csv"):
        raise ConfigError(f"format must be json or csv, got {cfg.format!r}")
    if any(b < 0 for b in cfg.betas):
        raise ConfigError("betas must be non-negative")
    for alt in cfg.alternatives:
        if alt not in KNOWN_SOLVERS:
            raise ConfigError(f"unknown alternative solver {alt!r}")
    return cfg


def load_fixture(path: str | Path, spec: ChainSpec):
    """Newline-delimited state labels; the index-0 line is marked '* '."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()
             if ln.strip() and not ln.startswith("#")]
    states = []
    origin = None
    for k, ln in enumerate(lines):
        if ln.startswith("*"):
            if origin is not None:
                raise ConfigError("fixture marks index 0 more than once")
            origin = k
            ln = ln[1:].strip()
        states.append(_parse_state(spec, ln))
    if origin is None:
        raise ConfigError("fixture must mark index 0 with a leading '*'")
    return states, origin
