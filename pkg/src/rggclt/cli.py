"""Command-line experiment runner.

    rggclt <command> --config <path> [--seed N] [--threads N] [--out DIR]

Commands: simulate, moments, bounds, gamma, ladder, regime. The config is a
single JSON object; unknown keys and out-of-range values are rejected with
exit status 1. A run whose expected point count exceeds the cap exits with 2.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Sequence

from . import clt_bounds, diagnostics, moments
from .edge_count import Strategy
from .model import (
    IntensitySchedule, ModelParams, canonical_delta, classify_regime, intensity_for_target_u,
    intensity_for_target_v, schedule_diagnostics,
)
from .numerics import LogValue
from .point_process import DEFAULT_MAX_EXPECTED, FeasibilityError, derive_stream
from .simulation import ReplicationResult, run_replications

COMMANDS = ("simulate", "moments", "bounds", "gamma", "ladder", "regime")
THREADS_ENV = "RGGCLT_THREADS"
RECORD_FIELDS = ("replication", "n_points", "edges", "ms")
SUMMARY_FIELDS = (
    "d", "delta", "log_lambda", "reps", "emp_mean", "emp_var", "exact_mean", "var_exact", "var_lo", "var_hi",
    "config_hash",
)
EXIT_OK, EXIT_CONFIG, EXIT_FEASIBILITY = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class IntensitySpec:
    mode: str
    value: LogValue
    power: float = 0.0

    def target(self, d: int) -> LogValue:
        """Configured value at dimension ``d``: ``value * d**power``."""
        return self.value * LogValue(1, self.power * math.log(d))


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    dimension: int | None = None
    dimensions: tuple[int, ...] = ()
    delta: float | str = "canonical"
    intensity: IntensitySpec | None = None
    replications: int = 1000
    master_seed: int = 0
    max_expected_points: float = DEFAULT_MAX_EXPECTED
    mc_samples: int = 100_000
    quadrature_tol: float = moments.DEFAULT_QUADRATURE_TOL
    lambda_multipliers: tuple[float, ...] = (1.0,)
    sigma_mode: str = "exact"
    strategy: str = "auto"
    regime_tolerance: float = 0.05
    record_timing: bool = False
    outputs: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def delta_for(self, d: int) -> float:
        if self.delta == "canonical":
            return canonical_delta(d)
        return float(self.delta)

    def params(self, d: int | None = None) -> ModelParams:
        d = self.dimension if d is None else d
        delta = self.delta_for(d)
        spec = self.intensity
        if spec.mode == "explicit":
            lam = spec.target(d)
        elif spec.mode == "target_u":
            lam = intensity_for_target_u(d, delta, 1.0) * spec.target(d)
        else:
            lam = intensity_for_target_v(d, delta, 1.0) * spec.target(d).sqrt()
        return ModelParams(d, delta, lam)

    def schedule(self) -> IntensitySchedule:
        spec = self.intensity
        kind = {"explicit": IntensitySchedule.explicit, "target_u": IntensitySchedule.target_u,
                "target_v": IntensitySchedule.target_v}[spec.mode]
        return kind(spec.target)

    def config_hash(self) -> str:
        blob = json.dumps({"config": self.raw, "master_seed": self.master_seed}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_ALLOWED = {
    "command", "dimension", "dimensions", "delta", "intensity", "replications", "master_seed",
    "max_expected_points", "mc_samples", "quadrature_tol", "lambda_multipliers", "sigma_mode", "strategy",
    "regime_tolerance", "record_timing", "outputs",
}
_OUTPUT_KEYS = {"records", "summary", "report"}


def _int(raw, key, lo=1):
    v = raw[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"{key} must be an integer >= {lo}, got {v!r}")
    return v


def _pos(raw, key):
    v = raw[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
        raise ConfigError(f"{key} must be a positive number, got {v!r}")
    return float(v)


def _intensity(raw) -> IntensitySpec:
    if not isinstance(raw, dict):
        raise ConfigError("intensity must be an object")
    extra = set(raw) - {"mode", "value", "log_value", "power"}
    if extra:
        raise ConfigError(f"unknown intensity keys: {sorted(extra)}")
    mode = raw.get("mode")
    if mode not in ("explicit", "target_u", "target_v"):
        raise ConfigError(f"intensity.mode must be explicit, target_u or target_v, got {mode!r}")
    if ("value" in raw) == ("log_value" in raw):
        raise ConfigError("intensity needs exactly one of value / log_value")
    if "value" in raw:
        value = LogValue.from_float(_pos(raw, "value"))
    else:
        lv = raw["log_value"]
        if isinstance(lv, bool) or not isinstance(lv, (int, float)) or not math.isfinite(lv):
            raise ConfigError("intensity.log_value must be a finite number")
        value = LogValue(1, float(lv))
    power = raw.get("power", 0.0)
    if isinstance(power, bool) or not isinstance(power, (int, float)) or not math.isfinite(power):
        raise ConfigError("intensity.power must be a finite number")
    return IntensitySpec(mode, value, float(power))


def parse_config(raw: Any, command: str) -> ExperimentConfig:
    """Validate a decoded JSON config for ``command``."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _ALLOWED
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "command" in raw and raw["command"] != command:
        raise ConfigError(f"config is for command {raw['command']!r}, not {command!r}")
    kw: dict[str, Any] = {"command": command, "raw": raw}

    if "dimension" in raw:
        kw["dimension"] = _int(raw, "dimension")
    if "dimensions" in raw:
        ds = raw["dimensions"]
        if not isinstance(ds, list) or not ds or any(isinstance(d, bool) or not isinstance(d, int) or d < 1 for d in ds):
            raise ConfigError("dimensions must be a non-empty list of positive integers")
        if any(b <= a for a, b in zip(ds, ds[1:])):
            raise ConfigError("dimensions must be strictly ascending")
        kw["dimensions"] = tuple(ds)
    if "delta" in raw:
        kw["delta"] = "canonical" if raw["delta"] == "canonical" else _pos(raw, "delta")
    if "intensity" in raw:
        kw["intensity"] = _intensity(raw["intensity"])
    for key in ("replications", "mc_samples"):
        if key in raw:
            kw[key] = _int(raw, key)
    if "master_seed" in raw:
        kw["master_seed"] = _int(raw, "master_seed", lo=0)
    for key in ("max_expected_points", "quadrature_tol", "regime_tolerance"):
        if key in raw:
            kw[key] = _pos(raw, key)
    if "lambda_multipliers" in raw:
        ms = raw["lambda_multipliers"]
        if not isinstance(ms, list) or not ms:
            raise ConfigError("lambda_multipliers must be a non-empty list")
        vals = tuple(_pos({"m": m}, "m") for m in ms)
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("lambda_multipliers must be ascending")
        kw["lambda_multipliers"] = vals
    if "sigma_mode" in raw:
        if raw["sigma_mode"] not in ("exact", "lower_bound"):
            raise ConfigError("sigma_mode must be exact or lower_bound")
        kw["sigma_mode"] = raw["sigma_mode"]
    if "strategy" in raw:
        if raw["strategy"] not in [s.value for s in Strategy]:
            raise ConfigError(f"strategy must be one of {[s.value for s in Strategy]}")
        kw["strategy"] = raw["strategy"]
    if "record_timing" in raw:
        if not isinstance(raw["record_timing"], bool):
            raise ConfigError("record_timing must be a boolean")
        kw["record_timing"] = raw["record_timing"]
    if "outputs" in raw:
        outs = raw["outputs"]
        if not isinstance(outs, dict) or set(outs) - _OUTPUT_KEYS:
            raise ConfigError(f"outputs may only contain {sorted(_OUTPUT_KEYS)}")
        if any(not isinstance(v, str) or not v or os.sep in v for v in outs.values()):
            raise ConfigError("output names must be plain file names")
        kw["outputs"] = dict(outs)

    cfg = ExperimentConfig(**kw)
    if command == "regime":
        if len(cfg.dimensions) < 4:
            raise ConfigError("regime needs a 'dimensions' list with at least 4 entries")
    elif cfg.dimension is None:
        raise ConfigError("dimension is required")
    if cfg.intensity is None:
        raise ConfigError("intensity is required")
    if command == "gamma" and cfg.mc_samples < 1000:
        raise ConfigError("mc_samples must be at least 1000")
    return cfg


# ---------------------------------------------------------------------------
# summaries and writers


def summarize(records: Sequence[ReplicationResult], params: ModelParams | None = None) -> dict:
    """Sample mean/variance of the edge counts with standard errors, next to the
    analytic values when ``params`` is given. Variance fields are None for a
    single record."""
    if not records:
        raise ValueError("no records to summarize")
    x = [float(r.edges) for r in records]
    n = len(x)
    mean = math.fsum(x) / n
    out: dict[str, Any] = {"reps": n, "emp_mean": mean, "emp_var": None, "emp_mean_se": None, "emp_var_se": None}
    if n >= 2:
        dev = [v - mean for v in x]
        var = math.fsum(e * e for e in dev) / (n - 1)
        m4 = math.fsum(e ** 4 for e in dev) / n
        out["emp_var"] = var
        out["emp_mean_se"] = math.sqrt(var / n)
        # standard error of the sample variance without a normality assumption
        out["emp_var_se"] = math.sqrt(max(m4 - var * var * (n - 3) / (n - 1), 0.0) / n)
    if params is not None:
        lo, hi = moments.variance_bounds(params)
        out.update(
            exact_mean=float(moments.exact_mean(params)),
            var_exact=float(moments.variance_exact(params)),
            var_lo=float(lo),
            var_hi=float(hi),
        )
    return out


def _json_default(o):
    if isinstance(o, LogValue):
        return o.to_dict()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=True)


def _params_dict(p: ModelParams) -> dict:
    return {"d": p.dimension, "delta": p.delta, "log_lambda": p.intensity.log(),
            "log_u": p.u.log(), "log_kappa_lambda": p.kappa_lambda.log()}


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    return path


def _record_line(r: ReplicationResult, with_timing: bool) -> str:
    rec = {"replication": r.replication, "n_points": r.n_points, "edges": r.edges,
           "ms": round(r.ms, 3) if with_timing else None}
    return json.dumps(rec, separators=(",", ":"))


# ---------------------------------------------------------------------------
# commands


def _cmd_simulate(cfg: ExperimentConfig, out_dir: Path, threads: int) -> dict:
    params = cfg.params()
    results = run_replications(params, cfg.replications, cfg.master_seed, threads=threads,
                               strategy=cfg.strategy, max_expected=cfg.max_expected_points)
    lines = "".join(_record_line(r, cfg.record_timing) + "\n" for r in results)
    _write(out_dir, cfg.outputs.get("records", "records.jsonl"), lines)
    s = summarize(results, params)
    row = {"d": params.dimension, "delta": params.delta, "log_lambda": params.intensity.log(),
           "reps": s["reps"], "emp_mean": s["emp_mean"], "emp_var": s["emp_var"], "exact_mean": s["exact_mean"],
           "var_exact": s["var_exact"], "var_lo": s["var_lo"], "var_hi": s["var_hi"],
           "config_hash": cfg.config_hash()}
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / cfg.outputs.get("summary", "summary.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        w.writeheader()
        w.writerow({k: ("" if row[k] is None else repr(row[k]) if isinstance(row[k], float) else row[k])
                    for k in SUMMARY_FIELDS})
    return {"params": _params_dict(params), "summary": s, "config_hash": cfg.config_hash()}


def _cmd_moments(cfg: ExperimentConfig, out_dir: Path, threads: int) -> dict:
    params = cfg.params()
    rep = moments.moment_report(params, cfg.quadrature_tol)
    return {"params": _params_dict(params), "moments": rep.to_dict(), "config_hash": cfg.config_hash()}


def _cmd_bounds(cfg: ExperimentConfig, out_dir: Path, threads: int) -> dict:
    params = cfg.params()
    lo, hi = moments.variance_bounds(params)
    sigma = lo if cfg.sigma_mode == "lower_bound" else moments.variance_exact(params, cfg.quadrature_tol)
    g = clt_bounds.gamma_upper(params, sigma)
    return {
        "params": _params_dict(params),
        "mean": moments.exact_mean(params),
        "variance_lower": lo,
        "variance_upper": hi,
        "sigma_mode": cfg.sigma_mode,
        "sigma_sq_used": sigma,
        "gamma_upper": list(g),
        "wasserstein_bound": clt_bounds.wasserstein_upper(g),
        "theorem_rate": clt_bounds.theorem_rate(params),
        "rate_note": clt_bounds.RATE_NOTE,
        "config_hash": cfg.config_hash(),
    }


def _cmd_gamma(cfg: ExperimentConfig, out_dir: Path, threads: int) -> dict:
    params = cfg.params()
    rep = clt_bounds.gamma_report(params, cfg.sigma_mode, derive_stream(cfg.master_seed, 0), cfg.mc_samples,
                                  cfg.quadrature_tol, threads)
    return {"params": _params_dict(params), "gamma": rep.to_dict(), "config_hash": cfg.config_hash()}


def _cmd_ladder(cfg: ExperimentConfig, out_dir: Path, threads: int) -> dict:
    params = cfg.params()
    reports = diagnostics.clt_ladder(params, list(cfg.lambda_multipliers), cfg.replications, cfg.master_seed,
                                     threads, cfg.quadrature_tol, cfg.max_expected_points)
    lines = "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in reports)
    _write(out_dir, cfg.outputs.get("records", "ladder.jsonl"), lines)
    return {"params": _params_dict(params), "rungs": [r.to_dict() for r in reports],
            "config_hash": cfg.config_hash()}


def _cmd_regime(cfg: ExperimentConfig, out_dir: Path, threads: int) -> dict:
    delta_rule = cfg.delta if cfg.delta != "canonical" else "canonical"
    entries = schedule_diagnostics(cfg.schedule(), delta_rule, list(cfg.dimensions))
    ok = [(e.d, e.log_v) for e in entries if e.ok]
    result: dict[str, Any] = {"entries": [asdict(e) for e in entries], "config_hash": cfg.config_hash()}
    if len(ok) >= 4:
        cls = classify_regime(ok, cfg.regime_tolerance)
        params_seq = [cfg.params(e.d) for e in entries if e.ok]
        result["classification"] = {"regime": cls.regime.value, "slope": cls.slope,
                                    "c_squared": cls.c_squared, "note": cls.note}
        result["regime_rate"] = [r.log() for r in clt_bounds.regime_rate(params_seq, cls)]
        result["rate_note"] = "log of the rate, " + clt_bounds.RATE_NOTE
    else:
        result["classification"] = None
    return result


_COMMANDS = {
    "simulate": _cmd_simulate, "moments": _cmd_moments, "bounds": _cmd_bounds,
    "gamma": _cmd_gamma, "ladder": _cmd_ladder, "regime": _cmd_regime,
}


def run(cfg: ExperimentConfig, out_dir: Path | str = ".", threads: int = 1) -> int:
    """Execute ``cfg``; returns the process exit status."""
    out_dir = Path(out_dir)
    try:
        report = _COMMANDS[cfg.command](cfg, out_dir, threads)
    except FeasibilityError as exc:
        print(f"rggclt: infeasible run: {exc} (log expected count {exc.log_expected:.6g})", file=sys.stderr)
        return EXIT_FEASIBILITY
    except (ValueError, KeyError) as exc:
        print(f"rggclt: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = _dump(report) + "\n"
    _write(out_dir, cfg.outputs.get("report", f"{cfg.command}.json"), text)
    sys.stdout.write(text)
    return EXIT_OK


def _threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1")
        return n
    return 1


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which is reserved for infeasible runs here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def main(argv: Sequence[str] | None = None) -> int:
    ap = _Parser(prog="rggclt", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, type=Path, help="JSON experiment config")
    ap.add_argument("--seed", type=int, default=None, help="override master_seed")
    ap.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    try:
        raw = json.loads(args.config.read_text())
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            if isinstance(raw, dict):
                raw = {**raw, "master_seed": args.seed}
        cfg = parse_config(raw, args.command)
        threads = _threads(args.threads)
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"rggclt: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, args.out, threads)


if __name__ == "__main__":
    sys.exit(main())
