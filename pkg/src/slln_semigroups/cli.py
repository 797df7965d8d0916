"""JSON-configured experiment runner.

Usage::

    slln-semigroups validate config.json
    slln-semigroups run config.json [--seed S] [--out DIR] [--threads N]
    slln-semigroups summarize out/report.json other/report.json ...

``run`` writes one CSV per seed (the seed is always part of the file name),
``report.json`` and ``summary.txt`` into the output directory, and exits with
status 0 only when every check passes. Every threshold comes from
:data:`DEFAULT_TOLERANCES`, overridable via the config's ``tolerances`` map.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import depolarize as dep
from . import geometry, martingale
from .ensemble import (
    Discrete,
    GeneratorEnsemble,
    GeneratorStream,
    RademacherDirections,
    UniformScaled,
)
from .linalg import vector_norm
from .semigroup import (
    DEFAULT_N_LIST,
    TimeGrid,
    chernoff_bias_experiment,
    chernoff_conditions,
    chernoff_power,
    fit_loglog_slope,
    random_product,
    slln_experiment,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

EXPERIMENTS = (
    "slln",
    "chernoff",
    "martingale_audit",
    "burkholder",
    "tail",
    "depolarize",
    "smoothness",
)

DEFAULT_TOLERANCES = {
    # errors at or below this count as exactly zero
    "zero_floor": 1e-10,
    # slln: fraction of seeds whose sup error drops from first to last n
    "slln.path_fraction": 0.9,
    "chernoff.slope_min": -1.3,
    "chernoff.slope_max": -0.7,
    "martingale.decomposition": 1e-9,
    "martingale.property": 1e-10,
    "martingale.reconstruction": 1e-9,
    "martingale.strategy_agreement": 1e-11,
    "burkholder.ratio_spread": 10.0,
    "depolarize.closed_form": 1e-12,
    "depolarize.coeff_error": 1e-2,
    "smoothness.parallelogram": 1e-12,
}

DEFAULTS = {
    "p": 2.0,
    "T": 1.0,
    "grid_points": 64,
    "n_list": list(DEFAULT_N_LIST),
    "trials": 1000,
    "seeds": [0],
    "output": "out",
    "n": 6,
    "t": 1.0,
    "s_list": [0.1, 0.5, 1.0],
    "audit_cases": 200,
    "target_frequency": 0.1,
    "d": 2,
    "samples": 10000,
    "smooth_dim": 8,
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class ExperimentConfig:
    experiment: str
    raw: dict
    base_dir: Path
    p: float = 2.0
    T: float = 1.0
    grid_points: int = 64
    n_list: list = field(default_factory=lambda: list(DEFAULT_N_LIST))
    trials: int = 1000
    seeds: list = field(default_factory=lambda: [0])
    output: str = "out"
    ensemble: GeneratorEnsemble | None = None
    xi_law: object = None
    x: np.ndarray | None = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    params: dict = field(default_factory=dict)

    @property
    def grid(self):
        return TimeGrid.uniform(self.T, self.grid_points)

    def vector(self):
        if self.x is not None:
            return self.x
        dim = self.ensemble.dim
        v = np.ones(dim)
        return v / vector_norm(v, self.ensemble.p)


# --- config parsing ------------------------------------------------------------


def _load_matrix(spec, base_dir, field_name):
    if isinstance(spec, str):
        path = Path(spec)
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigError(field_name, f"matrix file {spec!r} not found")
        try:
            arr = np.loadtxt(path, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise ConfigError(field_name, f"cannot parse {spec!r}: {exc}") from None
    else:
        try:
            arr = np.asarray(spec, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(field_name, "matrix must be a nested list of numbers") from None
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError(field_name, f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(field_name, "matrix has non-finite entries")
    return arr


def _number(raw, key, kind=float, prefix=""):
    val = raw[key]
    name = prefix + key
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(name, f"expected a number, got {val!r}")
    if kind is int:
        if int(val) != val:
            raise ConfigError(name, f"expected an integer, got {val!r}")
        return int(val)
    if not math.isfinite(val) and not (key == "p" and val == math.inf):
        raise ConfigError(name, f"must be finite, got {val!r}")
    return float(val)


def _parse_L0(spec, base_dir):
    if isinstance(spec, dict):
        if "spectrum" not in spec:
            raise ConfigError("ensemble.L0", "object form needs a 'spectrum' list")
        spectrum = np.asarray(spec["spectrum"], dtype=float)
        if spectrum.ndim != 1 or spectrum.size == 0:
            raise ConfigError("ensemble.L0.spectrum", "must be a non-empty list")
        return np.diag(spectrum)
    return _load_matrix(spec, base_dir, "ensemble.L0")


def _parse_law(spec, base_dir, dim):
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("ensemble.law", "must be an object with a 'type'")
    kind = spec["type"]
    pre = "ensemble.law."

    def mat(s, name):
        A = _load_matrix(s, base_dir, pre + name)
        if A.shape != (dim, dim):
            raise ConfigError(pre + name, f"shape {A.shape} does not match L0 ({dim}x{dim})")
        return A

    if kind == "discrete":
        for key in ("weights", "support"):
            if key not in spec:
                raise ConfigError(pre + key, "required for a discrete law")
        weights = np.asarray(spec["weights"], dtype=float)
        support = [mat(s, f"support[{i}]") for i, s in enumerate(spec["support"])]
        if weights.shape != (len(support),):
            raise ConfigError(pre + "weights", "need exactly one weight per support matrix")
        if np.any(weights <= 0):
            raise ConfigError(pre + "weights", "weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ConfigError(pre + "weights", f"weights sum to {weights.sum()!r}, not 1")
        mean = np.tensordot(weights, np.stack(support), axes=1)
        if np.max(np.abs(mean)) > 1e-12:
            raise ConfigError(
                pre + "support",
                f"weighted mean of support is not zero (max entry {np.max(np.abs(mean)):.3e})",
            )
        return Discrete(weights, support)
    if kind == "two_point":
        if "B" not in spec:
            raise ConfigError(pre + "B", "required for a two_point law")
        B = mat(spec["B"], "B")
        return Discrete([0.5, 0.5], [B, -B])
    if kind == "rademacher":
        if "directions" not in spec:
            raise ConfigError(pre + "directions", "required for a rademacher law")
        return RademacherDirections(
            [mat(s, f"directions[{i}]") for i, s in enumerate(spec["directions"])]
        )
    if kind == "uniform":
        for key in ("direction", "half_width"):
            if key not in spec:
                raise ConfigError(pre + key, "required for a uniform law")
        hw = _number(spec, "half_width", prefix=pre)
        if hw < 0:
            raise ConfigError(pre + "half_width", "must be non-negative")
        return UniformScaled(mat(spec["direction"], "direction"), hw)
    raise ConfigError(pre + "type", f"unknown law type {kind!r}")


def _parse_ensemble(spec, base_dir, p, dim_hint):
    if not isinstance(spec, dict):
        raise ConfigError("ensemble", "must be an object")
    if "L0" not in spec:
        raise ConfigError("ensemble.L0", "required")
    L0 = _parse_L0(spec["L0"], base_dir)
    if dim_hint is not None and L0.shape[0] != dim_hint:
        raise ConfigError("dim", f"dim={dim_hint} but L0 is {L0.shape[0]}x{L0.shape[0]}")
    if "law" not in spec:
        raise ConfigError("ensemble.law", "required")
    law = _parse_law(spec["law"], base_dir, L0.shape[0])
    consts = {}
    for key, default in (("M", 1.0), ("beta", 0.0)):
        consts[key] = _number(spec, key, prefix="ensemble.") if key in spec else default
    if consts["M"] < 1:
        raise ConfigError("ensemble.M", f"must be >= 1, got {consts['M']}")
    from .ensemble import max_perturbation_norm

    worst = max_perturbation_norm(law, p)
    if "C" in spec:
        C = _number(spec, "C", prefix="ensemble.")
        if C < 0:
            raise ConfigError("ensemble.C", "must be >= 0")
        if worst > C + 1e-9:
            raise ConfigError("ensemble.C", f"perturbation norm {worst:.6g} exceeds C={C}")
    else:
        C = worst
    return GeneratorEnsemble(L0, law, M=consts["M"], beta=consts["beta"], C=C, p=p)


def _parse_xi_law(spec, d):
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("xi_law", "must be an object with a 'type'")
    top = dep.max_lambda(d)
    if spec["type"] == "uniform":
        low = float(spec.get("low", 0.0))
        high = float(spec.get("high", 1.0))
        if not 0 <= low < high < top:
            raise ConfigError("xi_law", f"need 0 <= low < high < {top:.6g}")
        return dep.UniformLaw(low, high)
    if spec["type"] == "constant":
        if "value" not in spec:
            raise ConfigError("xi_law.value", "required for a constant law")
        value = _number(spec, "value", prefix="xi_law.")
        if not 0 <= value < top:
            raise ConfigError("xi_law.value", f"must lie in [0, {top:.6g})")
        return dep.ConstantLaw(value)
    raise ConfigError("xi_law.type", f"unknown xi law {spec['type']!r}")


def config_from_dict(raw, base_dir="."):
    """Validate a config mapping and apply defaults."""
    base_dir = Path(base_dir)
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}; got {exp!r}")

    vals = dict(DEFAULTS)
    for key in DEFAULTS:
        if key in raw:
            vals[key] = raw[key]
    for key in ("p", "T", "t"):
        if key in raw:
            vals[key] = _number(raw, key)
    for key in ("grid_points", "trials", "n", "audit_cases", "d", "samples", "smooth_dim"):
        if key in raw:
            vals[key] = _number(raw, key, int)
    if vals["p"] < 1:
        raise ConfigError("p", "must be >= 1")
    if vals["T"] <= 0:
        raise ConfigError("T", "must be positive")
    if vals["grid_points"] < 2:
        raise ConfigError("grid_points", "need at least 2 points")
    if vals["trials"] < 2:
        raise ConfigError("trials", "must be >= 2")

    n_list = vals["n_list"]
    if not isinstance(n_list, list) or not n_list or not all(
        isinstance(n, int) and not isinstance(n, bool) and n >= 1 for n in n_list
    ):
        raise ConfigError("n_list", "must be a non-empty list of positive integers")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigError("n_list", f"must be strictly increasing, got {n_list}")
    seeds = vals["seeds"]
    if not isinstance(seeds, list) or not seeds or not all(
        isinstance(s, int) and not isinstance(s, bool) and 0 <= s < 2**64 for s in seeds
    ):
        raise ConfigError("seeds", "must be a non-empty list of 64-bit non-negative integers")

    tol = dict(DEFAULT_TOLERANCES)
    overrides = raw.get("tolerances", {})
    if not isinstance(overrides, dict):
        raise ConfigError("tolerances", "must be an object")
    for key, val in overrides.items():
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"tolerances.{key}", "unknown tolerance")
        tol[key] = _number(overrides, key, prefix="tolerances.")

    cfg = ExperimentConfig(
        experiment=exp,
        raw=raw,
        base_dir=base_dir,
        p=vals["p"],
        T=vals["T"],
        grid_points=vals["grid_points"],
        n_list=list(n_list),
        trials=vals["trials"],
        seeds=list(seeds),
        output=str(vals["output"]),
        tolerances=tol,
        params={k: vals[k] for k in ("n", "t", "s_list", "audit_cases", "target_frequency",
                                     "d", "samples", "smooth_dim")},
    )
    if "epsilon" in raw:
        eps = _number(raw, "epsilon")
        if eps <= 0:
            raise ConfigError("epsilon", "must be positive")
        cfg.params["epsilon"] = eps

    if exp in ("slln", "chernoff", "martingale_audit", "burkholder", "tail"):
        if "ensemble" not in raw:
            raise ConfigError("ensemble", f"required for experiment {exp!r}")
        dim = raw.get("dim")
        cfg.ensemble = _parse_ensemble(raw["ensemble"], base_dir, cfg.p, dim)
        if exp != "slln" and not cfg.ensemble.is_discrete:
            raise ConfigError("ensemble.law.type", f"experiment {exp!r} needs a discrete law")
        if "x" in raw:
            x = np.asarray(raw["x"], dtype=float)
            if x.shape != (cfg.ensemble.dim,):
                raise ConfigError("x", f"expected {cfg.ensemble.dim} entries")
            cfg.x = x
    if exp == "martingale_audit":
        n = cfg.params["n"]
        if not 1 <= n <= martingale.MAX_PROPERTY_N:
            raise ConfigError("n", f"must lie in [1, {martingale.MAX_PROPERTY_N}]")
        if cfg.ensemble.law.support_size > martingale.MAX_PROPERTY_SUPPORT:
            raise ConfigError("ensemble.law.support", "at most 8 support points")
    if exp == "depolarize":
        if "xi_law" not in raw:
            raise ConfigError("xi_law", "required for experiment 'depolarize'")
        if cfg.params["d"] < 2:
            raise ConfigError("d", "channel dimension must be >= 2")
        cfg.xi_law = _parse_xi_law(raw["xi_law"], cfg.params["d"])
    if exp == "smoothness" and cfg.params["smooth_dim"] < 2:
        raise ConfigError("smooth_dim", "must be >= 2")
    return cfg


def parse_config(path):
    """Read and validate a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"malformed JSON at line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(raw, path.parent)


# --- reports -------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    margin: float  # <= 0 when passing
    detail: str = ""


@dataclass
class RunReport:
    experiment: str
    config: dict
    seeds: list
    checks: list = field(default_factory=list)
    csv_paths: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    # series[name][seed][n] -> value, used by summarize
    series: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d

    @classmethod
    def from_dict(cls, d):
        checks = [Check(**c) for c in d.get("checks", [])]
        return cls(
            experiment=d["experiment"],
            config=d.get("config", {}),
            seeds=d.get("seeds", []),
            checks=checks,
            csv_paths=d.get("csv_paths", []),
            timings=d.get("timings", {}),
            series=d.get("series", {}),
        )


def _upper(name, value, threshold, detail=""):
    value = float(value)
    return Check(name, bool(value <= threshold), value, float(threshold), value - threshold, detail)


def _lower(name, value, threshold, detail=""):
    value = float(value)
    return Check(name, bool(value >= threshold), value, float(threshold), threshold - value, detail)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return str(path)


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


# --- experiment drivers ----------------------------------------------------------


def _run_slln(cfg, out, threads, report):
    e, x, grid = cfg.ensemble, cfg.vector(), cfg.grid

    def one(seed):
        return seed, slln_experiment(GeneratorStream(e, seed), x, grid, cfg.n_list)

    results = _map(one, cfg.seeds, threads)
    floor = cfg.tolerances["zero_floor"]
    sups = {}
    for seed, trajs in results:
        report.csv_paths.append(_write_csv(
            out / f"slln_seed{seed}.csv", ["seed", "n", "t", "error"],
            [(seed, tr.n, t, err) for tr in trajs for t, err in zip(tr.times, tr.errors)],
        ))
        report.csv_paths.append(_write_csv(
            out / f"slln_summary_seed{seed}.csv", ["seed", "n", "sup_error"],
            [(seed, tr.n, tr.sup_error) for tr in trajs],
        ))
        sups[str(seed)] = {str(tr.n): tr.sup_error for tr in trajs}
    report.series["sup_error"] = sups

    first, last = str(cfg.n_list[0]), str(cfg.n_list[-1])
    dropped = [s[last] <= s[first] or s[last] <= floor for s in sups.values()]
    report.checks.append(_lower(
        "slln.path_fraction", np.mean(dropped), cfg.tolerances["slln.path_fraction"],
        f"seeds whose sup error at n={last} is <= that at n={first}",
    ))
    med_first = float(np.median([s[first] for s in sups.values()]))
    med_last = float(np.median([s[last] for s in sups.values()]))
    report.checks.append(_upper(
        "slln.median_trend", med_last, max(med_first, floor),
        f"median sup error n={last} vs n={first}",
    ))


def _run_chernoff(cfg, out, threads, report):
    e, x, grid = cfg.ensemble, cfg.vector(), cfg.grid
    tol = cfg.tolerances
    res = chernoff_bias_experiment(e, x, grid, cfg.n_list)
    cond = chernoff_conditions(e, grid)
    report.csv_paths.append(_write_csv(
        out / "chernoff.csv", ["n", "t", "error"],
        [(tr.n, t, err) for tr in res.per_n for t, err in zip(tr.times, tr.errors)],
    ))
    report.csv_paths.append(_write_csv(
        out / "chernoff_summary.csv", ["n", "sup_error"], list(zip(res.n_list, res.sup_errors)),
    ))
    report.series["sup_error"] = {"deterministic": {str(n): v for n, v in zip(res.n_list, res.sup_errors)}}
    report.checks.append(Check("chernoff.F0_identity", cond.identity_at_zero,
                               float(cond.identity_at_zero), 1.0, 0.0 if cond.identity_at_zero else 1.0))
    report.checks.append(_upper("chernoff.growth_bound", cond.growth_margin, 1e-9,
                                "max log||F(t)^n|| - (log M + n gamma t)"))
    worst_h = min(cond.derivative_errors)
    report.checks.append(Check("chernoff.derivative", cond.derivative_ok,
                               cond.derivative_errors[worst_h], 0.0, 0.0 if cond.derivative_ok else 1.0,
                               "finite-difference error decreasing in h"))
    floor = tol["zero_floor"]
    report.checks.append(_upper("chernoff.trend", res.sup_errors[-1],
                                max(res.sup_errors[0], floor)))
    if all(v > floor for v in res.sup_errors) and len(res.n_list) >= 2:
        lo, hi = tol["chernoff.slope_min"], tol["chernoff.slope_max"]
        ok = lo <= res.slope <= hi
        report.checks.append(Check("chernoff.slope", ok, res.slope, hi,
                                   max(lo - res.slope, res.slope - hi), f"allowed [{lo}, {hi}]"))


def _random_cases(rng, n_max, count):
    cases = []
    for _ in range(count):
        n = int(rng.integers(1, n_max + 1))
        k = int(rng.integers(0, n + 1))
        P = tuple(sorted(rng.choice(np.arange(1, n + 1), size=k, replace=False).tolist()))
        s = float(rng.uniform(0.0, 1.0)) or 1.0
        cases.append((n, P, s))
    return cases


def _audit_one(cfg, seed):
    e = cfg.ensemble
    tol = cfg.tolerances
    n, t = cfg.params["n"], cfg.params["t"]
    x = cfg.vector()
    stream = GeneratorStream(e, seed)
    rows, checks = [], []

    dec = max(martingale.decomposition_identity_check(stream, m, s)
              for m in range(1, n + 1) for s in cfg.params["s_list"])
    checks.append(_upper(f"martingale.decomposition[seed={seed}]", dec, tol["martingale.decomposition"]))
    prop = max(martingale.martingale_property_check(e, n, k, t) for k in range(1, n + 1))
    checks.append(_upper(f"martingale.property[seed={seed}]", prop, tol["martingale.property"]))
    agree = max(
        vector_norm(martingale.increment(stream, n, k, t, x, "factored")
                    - martingale.increment(stream, n, k, t, x, "enumerate"), e.p)
        for k in range(1, n + 1)
    )
    checks.append(_upper(f"martingale.strategy_agreement[seed={seed}]", agree,
                         tol["martingale.strategy_agreement"]))
    mu = martingale.increments(stream, n, t, x).sum(axis=0)
    direct = random_product(stream, n, t) @ x - chernoff_power(e, n, t) @ x
    recon = vector_norm(mu - direct, e.p)
    checks.append(_upper(f"martingale.reconstruction[seed={seed}]", recon,
                         tol["martingale.reconstruction"]))

    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    report = martingale.term_bound_check(stream, _random_cases(rng, n, cfg.params["audit_cases"]))
    for k in range(1, n + 1):
        report.rows.append(martingale.increment_bound_row(stream, n, k, t, x))
    rows = report.rows
    checks.append(_upper(f"martingale.bound_violations[seed={seed}]", len(report.violations), 0,
                         f"{len(report.logged_violations)} unasserted rows exceed their bound"))
    return seed, checks, rows


def _run_martingale(cfg, out, threads, report):
    for seed, checks, rows in _map(lambda s: _audit_one(cfg, s), cfg.seeds, threads):
        report.checks.extend(checks)
        report.csv_paths.append(_write_csv(
            out / f"martingale_seed{seed}.csv",
            ["seed", "check", "n", "k", "s", "lhs", "bound", "margin", "asserted", "violated"],
            [(seed, r.check, r.n, r.k, r.s, r.lhs, r.bound, r.margin, r.asserted, r.violated)
             for r in rows],
        ))


def _run_burkholder(cfg, out, threads, report):
    e, x, t = cfg.ensemble, cfg.vector(), cfg.params["t"]
    p_smooth = min(cfg.p, 2.0) if cfg.p > 1 else 2.0
    series = {}
    results = _map(lambda s: (s, martingale.burkholder_probe(e, x, t, cfg.n_list, cfg.trials,
                                                             p=p_smooth, seed=s)),
                   cfg.seeds, threads)
    for seed, rows in results:
        report.csv_paths.append(_write_csv(
            out / f"burkholder_seed{seed}.csv", ["seed", "n", "r", "lhs", "rhs", "ratio"],
            [(seed, r.n, r.r, r.lhs, r.rhs, r.ratio) for r in rows],
        ))
        ratios = [r.ratio for r in rows]
        series[str(seed)] = {str(r.n): r.ratio for r in rows}
        finite = [q for q in ratios if math.isfinite(q) and q > 0]
        if finite:
            spread = max(finite) / min(finite)
            report.checks.append(_upper(f"burkholder.ratio_spread[seed={seed}]", spread,
                                        cfg.tolerances["burkholder.ratio_spread"]))
        else:
            report.checks.append(Check(f"burkholder.ratio_spread[seed={seed}]", True, 0.0,
                                       cfg.tolerances["burkholder.ratio_spread"], 0.0,
                                       "both sides vanish"))
    report.series["ratio"] = series


def _run_tail(cfg, out, threads, report):
    e, x, t = cfg.ensemble, cfg.vector(), cfg.params["t"]
    series = {}

    def one(seed):
        eps = cfg.params.get("epsilon")
        if eps is None:
            eps = martingale.tune_epsilon(e, x, t, cfg.n_list[0], cfg.params["target_frequency"],
                                          trials=cfg.trials, seed=seed + 1_000_003)
            eps = eps if eps > 0 else 1.0
        return seed, martingale.tail_probe(e, x, t, cfg.n_list, eps, cfg.trials, seed=seed)

    for seed, res in _map(one, cfg.seeds, threads):
        report.csv_paths.append(_write_csv(
            out / f"tail_seed{seed}.csv", ["seed", "n", "epsilon", "frequency", "bound"],
            [(seed, r.n, res.epsilon, r.frequency, r.bound) for r in res.rows],
        ))
        freqs = [r.frequency for r in res.rows]
        series[str(seed)] = {str(r.n): r.frequency for r in res.rows}
        rises = sum(b > a for a, b in zip(freqs, freqs[1:]))
        ok = rises == 0 and (freqs[-1] < freqs[0] or max(freqs) == 0)
        report.checks.append(Check(f"tail.monotone[seed={seed}]", ok, float(rises), 0.0,
                                   float(rises) if ok else float(rises) + 1.0,
                                   f"frequencies {freqs}, slope {res.slope:.3g}"))
    report.series["frequency"] = series


def _run_depolarize(cfg, out, threads, report):
    d = cfg.params["d"]
    rho = dep.DensityMatrix.random(d, seed=0)
    tol = cfg.tolerances
    series = {}

    def one(seed):
        xi = dep.XiStream(cfg.xi_law, seed, d)
        rows = dep.convergence_experiment(xi, rho, cfg.n_list)
        gap = 0.0
        for n in sorted({min(n, 1000) for n in cfg.n_list}):
            a = dep.compose_random(xi, n, rho).rho
            b = dep.closed_form(xi, n, rho).rho
            gap = max(gap, float(np.max(np.abs(a - b))))
        return seed, rows, gap

    for seed, rows, gap in _map(one, cfg.seeds, threads):
        report.csv_paths.append(_write_csv(
            out / f"depolarize_seed{seed}.csv",
            ["seed", "n", "coeff_product_error", "coeff_sum_error", "trace_distance"],
            [(r.seed, r.n, r.coeff_product_error, r.coeff_sum_error, r.trace_distance) for r in rows],
        ))
        series[str(seed)] = {str(r.n): r.trace_distance for r in rows}
        report.checks.append(_upper(f"depolarize.closed_form[seed={seed}]", gap,
                                    tol["depolarize.closed_form"], "n <= 1000"))
        last = rows[-1]
        worst = max(last.coeff_product_error, last.coeff_sum_error)
        report.checks.append(_upper(f"depolarize.coeff_error[seed={seed}]", worst,
                                    tol["depolarize.coeff_error"], f"n={last.n}"))
    report.series["trace_distance"] = series


def _run_smoothness(cfg, out, threads, report):
    p, dim = cfg.p, cfg.params["smooth_dim"]
    tol = cfg.tolerances
    for seed in cfg.seeds:
        rows = []
        if 1 < p <= 2:
            probe = geometry.p_smooth_inequality_probe(p, dim, cfg.params["samples"], seed)
            rows = [(p, i, k) for i, k in enumerate(probe.values)]
            rows += [(p, name, k) for name, k in probe.adversarial.items()]
            report.series.setdefault("max_K", {})[str(seed)] = {"0": probe.max_K}
            if p == 2:
                allk = np.concatenate([probe.values, list(probe.adversarial.values())])
                report.checks.append(_upper(f"smoothness.parallelogram[seed={seed}]",
                                            np.max(np.abs(allk - 2.0)), tol["smoothness.parallelogram"]))
        report.csv_paths.append(_write_csv(out / f"smoothness_seed{seed}.csv",
                                           ["p", "sample_id", "K"], rows))
        e1, e2 = np.eye(dim)[0], np.eye(dim)[1]
        corner = geometry.smoothness_limit_probe(e1, e2, p)
        rng = np.random.default_rng(seed)
        xr = geometry.unit(rng.standard_normal(dim), p)
        yr = geometry.unit(rng.standard_normal(dim), p)
        rand = geometry.smoothness_limit_probe(xr, yr, p)
        report.csv_paths.append(_write_csv(
            out / f"smoothness_limit_seed{seed}.csv",
            ["p", "pair", "h", "forward", "backward", "gap"],
            [(p, "e1,e2", r.h, r.forward, r.backward, r.gap) for r in corner]
            + [(p, "random", r.h, r.forward, r.backward, r.gap) for r in rand],
        ))
        if p in (1.0, math.inf):
            report.checks.append(_lower(f"smoothness.corner_detected[seed={seed}]",
                                        corner[-1].gap, 1.0, "p=1/inf unit ball has corners"))
        else:
            report.checks.append(_upper(f"smoothness.gap_shrinks[seed={seed}]",
                                        rand[-4].gap, rand[0].gap, "gap at h=1e-5 vs h=1e-1"))


_DRIVERS = {
    "slln": _run_slln,
    "chernoff": _run_chernoff,
    "martingale_audit": _run_martingale,
    "burkholder": _run_burkholder,
    "tail": _run_tail,
    "depolarize": _run_depolarize,
    "smoothness": _run_smoothness,
}


def run(cfg, out=None, threads=1):
    """Execute one experiment; returns the :class:`RunReport` and writes outputs."""
    if out is None:
        out = cfg.base_dir / cfg.output
    out = Path(out)
    report = RunReport(cfg.experiment, cfg.raw, list(cfg.seeds))
    t0 = time.perf_counter()
    try:
        _DRIVERS[cfg.experiment](cfg, out, threads, report)
    except Exception as exc:
        raise RuntimeError(f"stage {cfg.experiment!r} failed: {exc}") from exc
    report.timings["compute"] = time.perf_counter() - t0
    t1 = time.perf_counter()
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, default=_json_default) + "\n")
    (out / "summary.txt").write_text(format_report(report))
    report.timings["write"] = time.perf_counter() - t1
    return report


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def format_report(report):
    lines = [f"experiment: {report.experiment}  seeds: {report.seeds}"]
    for c in report.checks:
        mark = "PASS" if c.passed else "FAIL"
        lines.append(f"  [{mark}] {c.name}: value={c.value:.6g} threshold={c.threshold:.6g} {c.detail}".rstrip())
    lines.append(f"overall: {'PASS' if report.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


# --- summarize -------------------------------------------------------------------


def summarize(reports):
    """Aggregate homogeneous reports: worst margins, pass counts, cross-seed medians."""
    if not reports:
        raise ValueError("summarize needs at least one report")
    kinds = {r.experiment for r in reports}
    if len(kinds) != 1:
        raise ValueError(f"cannot summarize mixed experiment types: {sorted(kinds)}")
    worst = {}
    for r in reports:
        for c in r.checks:
            key = c.name.split("[")[0]
            worst[key] = max(worst.get(key, -math.inf), c.margin)
    out = {
        "experiment": kinds.pop(),
        "reports": len(reports),
        "passed": sum(r.passed for r in reports),
        "checks": sum(len(r.checks) for r in reports),
        "checks_passed": sum(c.passed for r in reports for c in r.checks),
        "worst_margin": worst,
        "series": {},
    }
    names = sorted({name for r in reports for name in r.series})
    for name in names:
        by_n = {}
        for r in reports:
            for per_seed in r.series.get(name, {}).values():
                for n, v in per_seed.items():
                    by_n.setdefault(int(n), []).append(float(v))
        ns = sorted(by_n)
        medians = [float(np.median(by_n[n])) for n in ns]
        slope, resid = fit_loglog_slope(ns, medians) if len(ns) > 1 else (math.nan, math.nan)
        out["series"][name] = {
            "n": ns,
            "median": medians,
            "count": [len(by_n[n]) for n in ns],
            "slope": slope,
            "residual": resid,
            "monotone_decreasing": all(b <= a for a, b in zip(medians, medians[1:])),
        }
    return out


def format_summary(s):
    lines = [f"experiment: {s['experiment']}  reports passed: {s['passed']}/{s['reports']}"
             f"  checks passed: {s['checks_passed']}/{s['checks']}"]
    for name, m in sorted(s["worst_margin"].items()):
        lines.append(f"  worst margin {name}: {m:.6g}")
    for name, ser in s["series"].items():
        lines.append(f"  {name}: slope={ser['slope']:.4g} residual={ser['residual']:.3g}"
                     f" monotone={ser['monotone_decreasing']}")
        for n, med, cnt in zip(ser["n"], ser["median"], ser["count"]):
            lines.append(f"    n={n:<8d} median={med:.6g} (from {cnt})")
    return "\n".join(lines) + "\n"


# --- entry point -----------------------------------------------------------------


def main(argv=None):
    parser = argparse.ArgumentParser(prog="slln-semigroups", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, help="run this single seed instead of the config's")
    p_run.add_argument("--out", help="output directory (default: config 'output')")
    p_run.add_argument("--threads", type=int, default=1)
    p_sum = sub.add_parser("summarize", help="aggregate report.json files")
    p_sum.add_argument("reports", nargs="+")
    p_sum.add_argument("--json", help="also write the aggregate as JSON here")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    if args.command == "validate":
        try:
            cfg = parse_config(args.config)
        except ConfigError as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return 2
        print(f"ok: {cfg.experiment} with seeds {cfg.seeds}")
        return 0

    if args.command == "run":
        try:
            cfg = parse_config(args.config)
        except ConfigError as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return 2
        if args.seed is not None:
            cfg.seeds = [args.seed]
        out = Path(args.out) if args.out else None
        try:
            report = run(cfg, out=out, threads=max(1, args.threads))
        except RuntimeError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        print(format_report(report), end="")
        return 0 if report.passed else 1

    try:
        reports = [RunReport.from_dict(json.loads(Path(p).read_text())) for p in args.reports]
        summary = summarize(reports)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(format_summary(summary), end="")
    if args.json:
        Path(args.json).write_text(json.dumps(summary, indent=2, default=_json_default) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
