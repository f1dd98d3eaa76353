"""Config-driven experiment runner.

A config is one YAML document::

    kind: acc-bound-curve        # or fcfs-zero-privacy, chain-diagnostics,
                                 #    reconstruction-demo
    name: acc_curve              # output file stem (defaults to kind)
    seed: 2024
    output: results              # directory; --out overrides
    workers: 1
    horizon_periods: 10000       # simulated clock periods per grid point
    grid:
      lambda: [0.4]
      T: [2]
      T_acc: [4, 8, 16]          # acc-bound-curve only
      omega: [0.55]              # absolute attacker rate, or
      omega_frac: [0.99]         # rate as a fraction of 1 - lambda
    tolerances:                  # optional overrides of DEFAULT_TOLERANCES
      z_identity: 1.0e-8

Grid points are the Cartesian product of the grid lists in the key order
above. Results are one CSV row per (grid point, statistic) with the columns
in :data:`RESULT_COLUMNS`, plus a JSON metadata sidecar.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .analysis.bounds import acc_lower_bound, fcfs_upper_bound
from .analysis.chains import (
    REAL,
    VIRTUAL,
    ClockChainSpec,
    chain_residual,
    check_z_identity,
    dominance_gap,
    lyapunov_drift_check,
    stationary_clock_chain,
    tail_bound_slack,
)
from .attacker import build_probe_schedule, observe_queue, reconstruct, reconstruction_table
from .core import RNG_ALGORITHM, SlotTrace, bernoulli_arrivals, extract_pattern
from .errors import ConfigError, TimingLeakError
from .io import reconstruction_to_csv
from .schedulers import fcfs_run

KINDS = ("fcfs-zero-privacy", "acc-bound-curve", "chain-diagnostics", "reconstruction-demo")
GRID_KEYS = ("lambda", "T", "T_acc", "omega", "omega_frac")
TOP_KEYS = {
    "kind", "name", "seed", "output", "workers", "horizon_periods", "grid", "tolerances",
}
RESULT_COLUMNS = (
    "grid_index", "lambda", "omega", "T", "T_acc", "period", "statistic", "value",
    "tolerance", "ci_low", "ci_high", "seed", "status", "detail",
)
DEFAULT_TOLERANCES = {
    "chain_tol": 1e-12,
    "stationary_residual": 1e-10,
    "drift_identity": 1e-12,
    "z_identity": 1e-8,
    "tail_slack": 1e-12,
    "dominance": 1e-9,
}
DEFAULTS = {"seed": 0, "workers": 1, "horizon_periods": 10_000, "output": "."}
DRIFT_STATES = 24
DEMO_MAX_PERIODS = 200


@dataclass
class ExperimentConfig:
    kind: str
    grid: dict = field(default_factory=dict)
    seed: int = 0
    horizon_periods: int = 10_000
    workers: int = 1
    output: str = "."
    name: Optional[str] = None
    tolerances: dict = field(default_factory=dict)

    @property
    def stem(self) -> str:
        return self.name or self.kind

    def resolved_tolerances(self) -> dict:
        return {**DEFAULT_TOLERANCES, **self.tolerances}

    def canonical(self) -> dict:
        d = asdict(self)
        d["tolerances"] = self.resolved_tolerances()
        d.pop("output")
        d.pop("workers")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class Diagnostic:
    location: str
    message: str

    def __str__(self):
        return f"{self.location}: {self.message}"


@dataclass
class ExperimentResult:
    rows: list
    metadata: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: _fmt(row.get(k)) for k in RESULT_COLUMNS})
        return buf.getvalue()

    def statuses(self) -> dict:
        out: dict = {}
        for row in self.rows:
            out[row["status"]] = out.get(row["status"], 0) + 1
        return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


# -- loading and validation ------------------------------------------------


def parse_config(text: str, source: str = "<config>") -> tuple[ExperimentConfig, list[Diagnostic]]:
    """Parse YAML text; structural problems come back as diagnostics."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(
            f"{source}: cannot parse config: {getattr(exc, 'problem', exc)}",
            line=mark.line + 1 if mark else None,
            column=mark.column + 1 if mark else None,
        ) from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: config must be a mapping at the top level")
    diags = []
    for key in sorted(set(data) - TOP_KEYS):
        diags.append(Diagnostic(key, "unknown key"))
    kind = data.get("kind")
    if kind not in KINDS:
        diags.append(Diagnostic("kind", f"must be one of {', '.join(KINDS)}, got {kind!r}"))
    grid = data.get("grid") or {}
    if not isinstance(grid, dict):
        diags.append(Diagnostic("grid", "must be a mapping of lists"))
        grid = {}
    clean_grid = {}
    for key, values in grid.items():
        if key not in GRID_KEYS:
            diags.append(Diagnostic(f"grid.{key}", "unknown grid key"))
            continue
        if not isinstance(values, list):
            values = [values]
        clean_grid[key] = values
    if "omega" in clean_grid and "omega_frac" in clean_grid:
        diags.append(Diagnostic("grid", "give omega or omega_frac, not both"))
    tol = data.get("tolerances") or {}
    for key in tol:
        if key not in DEFAULT_TOLERANCES:
            diags.append(Diagnostic(f"tolerances.{key}", "unknown tolerance"))
    cfg = ExperimentConfig(
        kind=str(kind),
        grid=clean_grid,
        seed=int(data.get("seed", DEFAULTS["seed"])),
        horizon_periods=int(data.get("horizon_periods", DEFAULTS["horizon_periods"])),
        workers=int(data.get("workers", DEFAULTS["workers"])),
        output=str(data.get("output", DEFAULTS["output"])),
        name=data.get("name"),
        tolerances={k: float(v) for k, v in tol.items() if k in DEFAULT_TOLERANCES},
    )
    if cfg.horizon_periods < 1:
        diags.append(Diagnostic("horizon_periods", "must be positive"))
    if cfg.workers < 1:
        diags.append(Diagnostic("workers", "must be positive"))
    return cfg, diags


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    cfg, diags = parse_config(path.read_text(encoding="utf-8"), str(path))
    if diags:
        raise ConfigError(f"{path}: " + "; ".join(map(str, diags)))
    return cfg


def _needs(kind: str) -> tuple[str, ...]:
    if kind == "acc-bound-curve":
        return ("lambda", "T", "T_acc")
    return ("lambda", "T")


def grid_points(cfg: ExperimentConfig) -> list[dict]:
    keys = [k for k in GRID_KEYS if k in cfg.grid]
    points = []
    for values in itertools.product(*(cfg.grid[k] for k in keys)):
        p = dict(zip(keys, values))
        if "omega_frac" in p and "lambda" in p:
            p["omega"] = float(p["omega_frac"]) * (1.0 - float(p["lambda"]))
        points.append(p)
    return points


def point_violations(kind: str, point: dict) -> list[str]:
    """Reasons a grid point cannot be evaluated; empty when it is admissible."""
    out = []
    lam = point.get("lambda")
    T = point.get("T")
    if lam is None or not (0.0 <= float(lam) <= 1.0):
        out.append(f"lambda={lam!r} outside [0, 1]")
    if T is None or int(T) != T or int(T) < 1:
        out.append(f"T={T!r} is not a positive integer")
    if out:
        return out
    lam, T = float(lam), int(T)
    if kind == "acc-bound-curve":
        t_acc = point.get("T_acc")
        if t_acc is None or int(t_acc) != t_acc or int(t_acc) <= T:
            out.append(f"T_acc={t_acc!r} must be an integer > T={T}")
        return out
    omega = point.get("omega")
    if omega is None:
        return ["omega or omega_frac is required"]
    omega = float(omega)
    if not (0.0 <= omega < 1.0):
        out.append(f"omega={omega!r} outside [0, 1)")
    if lam + omega >= 1.0:
        out.append(f"lambda + omega = {lam + omega:g} >= 1 (unstable queue)")
    if omega * T < 1.0 - 1e-12:
        out.append(f"omega*T = {omega * T:g} < 1 (no rate for a probe on every tick)")
    elif T > 1 and (omega * T - 1.0) / (T - 1.0) > 1.0:
        out.append("Type-II rate exceeds one job per slot")
    return out


def validate_config(cfg: ExperimentConfig) -> list[Diagnostic]:
    diags = []
    if cfg.kind not in KINDS:
        return diags
    for key in _needs(cfg.kind):
        if key not in cfg.grid:
            diags.append(Diagnostic(f"grid.{key}", "required for " + cfg.kind))
    if cfg.kind != "acc-bound-curve" and not ({"omega", "omega_frac"} & set(cfg.grid)):
        diags.append(Diagnostic("grid.omega", "omega or omega_frac is required for " + cfg.kind))
    if diags:
        return diags
    for i, p in enumerate(grid_points(cfg)):
        for reason in point_violations(cfg.kind, p):
            diags.append(Diagnostic(f"grid[{i}] {_describe(p)}", reason))
    return diags


def validate(path) -> list[Diagnostic]:
    """All constraint violations of the config at ``path``; nothing is run."""
    path = Path(path)
    cfg, diags = parse_config(path.read_text(encoding="utf-8"), str(path))
    return diags + validate_config(cfg)


def _describe(p: dict) -> str:
    return "(" + ", ".join(f"{k}={p[k]!r}" for k in GRID_KEYS if k in p) + ")"


# -- execution ------------------------------------------------------------


def point_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def _row(point, index, seed, statistic, value, *, tolerance=None, status="ok", detail="", **extra):
    row = {
        "grid_index": index,
        "lambda": point.get("lambda"),
        "omega": point.get("omega"),
        "T": point.get("T"),
        "T_acc": point.get("T_acc"),
        "statistic": statistic,
        "value": value,
        "tolerance": tolerance,
        "seed": seed,
        "status": status,
        "detail": detail,
    }
    row.update(extra)
    return row


def _check(ok: bool) -> str:
    return "ok" if ok else "violated"


def _simulate_reconstruction(lam, omega, T, n_periods, seed):
    probe = build_probe_schedule(T, omega, n_periods, seed)
    user = bernoulli_arrivals(lam, probe.horizon_slots, seed + 1).indicators.copy()
    user[-1] = 0
    outcome = fcfs_run(SlotTrace(user), probe.to_slot_trace())
    recon = reconstruct(observe_queue(probe, outcome))
    truth = extract_pattern(SlotTrace(user[:-1]), T).counts
    return probe, recon, truth


def _fcfs_point(point, index, seed, cfg):
    lam, omega, T = float(point["lambda"]), float(point["omega"]), int(point["T"])
    method = "exact" if T <= 16 else "montecarlo"
    rep = fcfs_upper_bound(lam, omega, T, method, cfg["horizon_periods"], seed=seed,
                           tol=cfg["tolerances"]["chain_tol"])
    _, recon, truth = _simulate_reconstruction(lam, omega, T, cfg["horizon_periods"], seed)
    mask = recon.exact_mask
    mismatches = int(np.sum(recon.period_estimates[mask] != truth[mask]))
    return [
        _row(point, index, seed, "H_X", rep.components["H_X"]),
        _row(point, index, seed, "fcfs_upper_bound", rep.value, detail=f"method={method}"),
        _row(point, index, seed, "exact_fraction_stationary", rep.components["exact_fraction"]),
        _row(point, index, seed, "reconstruction_exact_fraction", recon.exact_fraction,
             detail=f"periods={cfg['horizon_periods']}"),
        _row(point, index, seed, "reconstruction_mismatches", mismatches, tolerance=0,
             status=_check(mismatches == 0)),
    ]


def _acc_point(point, index, seed, cfg):
    lam, T, t_acc = float(point["lambda"]), int(point["T"]), int(point["T_acc"])
    rep = acc_lower_bound(lam, T, t_acc)
    return [
        _row(point, index, seed, "acc_lower_bound", rep.value,
             detail=f"T_L={rep.components['T_L']} l={rep.components['l']}"),
        _row(point, index, seed, "H_X", rep.components["H_X"]),
    ]


def _chain_point(point, index, seed, cfg):
    lam, omega, T = float(point["lambda"]), float(point["omega"]), int(point["T"])
    tol = cfg["tolerances"]
    real_spec = ClockChainSpec(lam, omega, T, REAL)
    virt_spec = ClockChainSpec(lam, omega, T, VIRTUAL)
    real = stationary_clock_chain(real_spec, tol["chain_tol"])
    virt = stationary_clock_chain(virt_spec, tol["chain_tol"])
    res_r = chain_residual(real, real_spec)
    res_v = chain_residual(virt, virt_spec)
    drift = lyapunov_drift_check(lam, omega, T, range(T - 1 + DRIFT_STATES))
    drift_err = max(r.identity_error for r in drift if r.identity_error is not None)
    drift_ok = all(r.satisfied for r in drift)
    rows = [
        _row(point, index, seed, "stationary_residual_real", res_r,
             tolerance=tol["stationary_residual"], status=_check(res_r < tol["stationary_residual"]),
             detail=f"q_max={real.support_max}"),
        _row(point, index, seed, "stationary_residual_virtual", res_v,
             tolerance=tol["stationary_residual"], status=_check(res_v < tol["stationary_residual"]),
             detail=f"q_max={virt.support_max}"),
        _row(point, index, seed, "drift_identity_error", drift_err,
             tolerance=tol["drift_identity"], status=_check(drift_err <= tol["drift_identity"])),
        _row(point, index, seed, "drift_bound_holds", drift_ok, status=_check(drift_ok)),
    ]
    if T >= 2:
        z = check_z_identity(virt, lam, omega, T)
        slack = tail_bound_slack(virt, lam, omega, T)
        rows.append(_row(point, index, seed, "z_identity_residual", z,
                         tolerance=tol["z_identity"], status=_check(z < tol["z_identity"])))
        rows.append(_row(point, index, seed, "tail_bound_slack", slack,
                         tolerance=tol["tail_slack"], status=_check(slack >= -tol["tail_slack"])))
    gap = dominance_gap(real, virt)
    rows.append(_row(point, index, seed, "dominance_gap", gap, tolerance=tol["dominance"],
                     status=_check(gap >= -tol["dominance"])))
    return rows


def _demo_point(point, index, seed, cfg):
    lam, omega, T = float(point["lambda"]), float(point["omega"]), int(point["T"])
    n = min(cfg["horizon_periods"], DEMO_MAX_PERIODS)
    probe, recon, truth = _simulate_reconstruction(lam, omega, T, n, seed)
    table = reconstruction_table(recon, truth)
    rows = [
        _row(point, index, seed, "est_X", est, period=k, detail=f"true_X={x} status={status}")
        for k, x, est, status in table
    ]
    rows.append(_row(point, index, seed, "reconstruction_exact_fraction", recon.exact_fraction))
    return rows


_RUNNERS = {
    "fcfs-zero-privacy": _fcfs_point,
    "acc-bound-curve": _acc_point,
    "chain-diagnostics": _chain_point,
    "reconstruction-demo": _demo_point,
}


def _run_point(args):
    kind, point, index, seed, cfg = args
    reasons = point_violations(kind, point)
    if reasons:
        return [_row(point, index, seed, "point", None, status="rejected", detail="; ".join(reasons))]
    try:
        return _RUNNERS[kind](point, index, seed, cfg)
    except (TimingLeakError, ArithmeticError, ValueError) as exc:
        diag = getattr(exc, "diagnostics", None)
        detail = f"{type(exc).__name__}: {exc}" + (f" {diag}" if diag else "")
        return [_row(point, index, seed, "point", None, status="error", detail=detail)]


def run(
    cfg: ExperimentConfig,
    *,
    seed: Optional[int] = None,
    out_dir=None,
    workers: Optional[int] = None,
    write: bool = True,
) -> ExperimentResult:
    """Evaluate every grid point; rejected or failing points become labelled rows."""
    if seed is not None:
        cfg = ExperimentConfig(**{**asdict(cfg), "seed": int(seed)})
    if cfg.kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {cfg.kind!r}")
    n_workers = workers or cfg.workers
    shared = {"horizon_periods": cfg.horizon_periods, "tolerances": cfg.resolved_tolerances()}
    jobs = [
        (cfg.kind, p, i, point_seed(cfg.seed, i), shared) for i, p in enumerate(grid_points(cfg))
    ]
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            chunks = list(pool.map(_run_point, jobs))
    else:
        chunks = [_run_point(j) for j in jobs]
    rows = [row for chunk in chunks for row in chunk]
    result = ExperimentResult(rows, {})
    result.metadata = {
        "tool": "timing-leak-lab",
        "version": __version__,
        "config": cfg.canonical(),
        "config_sha256": cfg.digest(),
        "rng": RNG_ALGORITHM,
        "seed": cfg.seed,
        "n_points": len(jobs),
        "n_rows": len(rows),
        "status_counts": result.statuses(),
        "columns": list(RESULT_COLUMNS),
    }
    if write:
        out = Path(out_dir if out_dir is not None else cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{cfg.stem}.csv").write_text(result.to_csv(), encoding="utf-8", newline="")
        (out / f"{cfg.stem}.meta.json").write_text(
            json.dumps(result.metadata, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        if cfg.kind == "reconstruction-demo":
            _write_demo_tables(cfg, jobs, out)
    return result


def _write_demo_tables(cfg, jobs, out: Path):
    for kind, p, i, s, shared in jobs:
        if point_violations(kind, p):
            continue
        lam, omega, T = float(p["lambda"]), float(p["omega"]), int(p["T"])
        n = min(shared["horizon_periods"], DEMO_MAX_PERIODS)
        probe, recon, truth = _simulate_reconstruction(lam, omega, T, n, s)
        header = {"lambda": lam, **probe.header()}
        reconstruction_to_csv(
            reconstruction_table(recon, truth), header, out / f"{cfg.stem}.point{i}.reconstruction.csv"
        )
