"""Command-line orchestration: audit, simulate, analyze, rate experiments.

Every run is reproducible: outputs are pure functions of (config document,
master seed), files are written atomically (temp + rename), and replicate
aggregation is keyed by index so worker counts never change results.  Wall
clock goes to a sidecar ``timing.log`` that is excluded from the manifest,
keeping all declared outputs byte-stable across reruns.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, config, engine, stats, theory
from .errors import BrwireError, ConfigError, InvalidParameter, NotStabilized

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GATE = 3
EXIT_CAP = 4

ABORT_RATE_LIMIT = 1e-3  # excluded replicates above this fraction poison results


@dataclass(frozen=True)
class ExperimentPlan:
    scenario: object
    analyses: dict
    output_dir: Path
    workers: int = 1
    config_bytes: bytes = b""


@dataclass
class RunManifest:
    config_digest: str
    master_seed: int
    version: str
    outputs: list = field(default_factory=list)
    abort_count: int = 0
    hypotheses_verified: str = "not-checked"  # verified | unverified | not-checked

    def to_json(self) -> str:
        return json.dumps(
            {
                "config_digest": self.config_digest,
                "master_seed": self.master_seed,
                "version": self.version,
                "outputs": self.outputs,
                "abort_count": self.abort_count,
                "hypotheses_verified": self.hypotheses_verified,
            },
            indent=2,
        )


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def plan_from_config(path, seed=None, replicates=None, out=None, workers=None) -> ExperimentPlan:
    doc = config.load_config(path)
    if seed is not None:
        doc["master_seed"] = int(seed)
    if replicates is not None:
        doc["replicates"] = int(replicates)
    scenario = config.scenario_from_dict(doc)
    analyses = config.parse_analyses(doc)
    output_dir = Path(out if out is not None else doc.get("output_dir", "out"))
    w = int(workers if workers is not None else doc.get("workers", 1))
    if w < 1:
        raise ConfigError("workers must be >= 1")
    return ExperimentPlan(
        scenario=scenario,
        analyses=analyses,
        output_dir=output_dir,
        workers=w,
        config_bytes=Path(path).read_bytes(),
    )


def _audit_from_params(scenario, params):
    return theory.audit_assumptions(
        scenario.environment,
        scenario.t_vec,
        alpha=float(params.get("alpha", 1.0)),
        epsilon=float(params.get("epsilon", 1.0)),
        p=float(params.get("p", 4.0)),
        a=float(params.get("a", 3.0)),
        rng=engine._aux_rng(scenario.master_seed, 3, 0),
        n_draws=int(params.get("n_draws", 10**6)),
    )


def _estimate_log_w(scenario, table, workers):
    """E log W from the shared table when the horizon ladder allows it."""
    horizons = scenario.horizons
    n_big = horizons[-1]
    if n_big // 2 in horizons:
        lw_big = table.log_W[table.n == n_big]
        lw_half = table.log_W[table.n == n_big // 2]
        est = theory.LogWEstimate(
            float(lw_big.mean()),
            float(lw_big.std(ddof=1) / math.sqrt(len(lw_big))),
            n_big,
            float(lw_half.mean()),
            float(lw_half.std(ddof=1) / math.sqrt(len(lw_half))),
        )
        if abs(est.estimate - est.half_estimate) > 2.0 * est.combined_se + theory.STABILIZATION_FLOOR:
            raise NotStabilized(
                f"log W estimate not stabilized: {est.estimate:.4f} at n={n_big} "
                f"vs {est.half_estimate:.4f} at n={n_big // 2}",
                estimate=est.estimate,
                half_estimate=est.half_estimate,
                combined_se=est.combined_se,
            )
        return est
    return theory.estimate_log_W_limit(scenario, n_big, scenario.replicates, workers)


def run(plan: ExperimentPlan) -> RunManifest:
    """Execute every requested analysis; deterministic given the plan."""
    scenario = plan.scenario
    t0 = time.monotonic()
    manifest = RunManifest(
        config_digest=hashlib.sha256(plan.config_bytes).hexdigest(),
        master_seed=scenario.master_seed,
        version=__version__,
    )
    outdir = plan.output_dir

    def emit(name: str, data: str):
        _atomic_write(outdir / name, data)
        manifest.outputs.append(name)

    analyses = plan.analyses
    if "audit" in analyses:
        report = _audit_from_params(scenario, analyses["audit"])
        emit("audit.json", report.to_json())
        manifest.hypotheses_verified = "verified" if report.passed else "unverified"

    needs_particles = {"clt", "uniform-be", "nonuniform-be", "exact-rate", "w-increments"}
    table = None
    if needs_particles & set(analyses):
        table = engine.simulate_many(scenario, workers=plan.workers)
        manifest.abort_count = len(table.aborted)
        buf = io.StringIO()
        engine.write_records_csv(table, buf)
        emit("records.csv", buf.getvalue())

    mu, sigma, mu3 = theory.env_constants(scenario.environment, scenario.t_vec)

    def empirical(n):
        return stats.standardize(table.log_Z[table.n == n], n, mu, sigma)

    if "clt" in analyses:
        summaries = [stats.distance_summary(empirical(n)) for n in scenario.horizons]
        emit("distances.json", json.dumps(summaries, indent=2))

    if "uniform-be" in analyses:
        pairs = [(n, stats.ks_distance(empirical(n))) for n in scenario.horizons]
        fit = stats.rate_fit(pairs)
        emit("rate_fit.json", fit.to_json())

    if "nonuniform-be" in analyses:
        params = analyses["nonuniform-be"]
        lam = float(params.get("lambda", 1.0))
        x_cap = float(params.get("x_cap", 3.0))
        rows = []
        for n in scenario.horizons:
            w = stats.weighted_distance(empirical(n), lam, x_cap)
            rows.append({"n": n, "lambda": lam, "x_cap": x_cap,
                         "value": w, "scaled": w * math.sqrt(n)})
        emit("nonuniform.json", json.dumps(rows, indent=2))

    if "exact-rate" in analyses:
        params = analyses["exact-rate"]
        x_grid = [float(x) for x in params.get("x_grid", (-1.0, 0.0, 1.0))]
        e_log_w = _estimate_log_w(scenario, table, plan.workers)
        constants = theory.TheoryConstants(mu=mu, sigma=sigma, mu3=mu3, e_log_w=e_log_w)
        n = scenario.horizons[-1]
        prof = stats.exact_rate_profile(
            empirical(n), constants, x_grid,
            resolution=float(params.get("resolution", 0.5)),
        )
        emit("profile.csv", _profile_csv(prof))

    if "w-increments" in analyses:
        params = analyses["w-increments"]
        alpha = float(params.get("alpha", 1.0))
        thresholds = tuple(float(x) for x in params.get("thresholds", (0.1, 0.3, 1.0)))
        rows = []
        pairs = []
        for n in scenario.horizons:
            if 2 * n not in scenario.horizons:
                continue
            w_n = np.exp(table.log_W[table.n == n])
            w_l = np.exp(table.log_W[table.n == 2 * n])
            diag = stats.w_increment_diagnostics(w_n, w_l, alpha, thresholds)
            rows.append({"n": n, "l": 2 * n, "alpha": alpha,
                         "moment": diag.moment, "tails": list(diag.tails)})
            pairs.append((n, diag.moment))
        out = {"rows": rows}
        if len(pairs) >= 3:
            log_rho, intercept, r2 = stats.increment_rate_fit(pairs)
            out["fit"] = {"log_rho": log_rho, "intercept": intercept, "r2": r2}
        emit("increments.json", json.dumps(out, indent=2))

    if "env-walk-baseline" in analyses:
        s = engine.env_walk_samples(scenario, scenario.replicates, plan.workers)
        n = scenario.horizons[-1]
        col = scenario.horizons.index(n)
        emp = stats.standardize(s[:, col] + n * mu, n, mu, sigma)
        params = analyses["env-walk-baseline"]
        x_grid = [float(x) for x in params.get("x_grid", (-1.0, 0.0, 1.0))]
        prof = stats.env_walk_profile(emp, mu3, sigma, x_grid)
        emit("env_walk_profile.csv", _profile_csv(prof))

    manifest.outputs.append("manifest.json")
    _atomic_write(outdir / "manifest.json", manifest.to_json())
    _atomic_write(outdir / "timing.log", f"wall_clock_seconds={time.monotonic() - t0:.3f}\n")
    return manifest


def _profile_csv(rows) -> str:
    lines = ["x,lhs,rhs,uncertainty"]
    for x, lhs, rhs, unc in rows:
        lines.append(f"{x!r},{lhs!r},{rhs!r},{unc!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p):
    p.add_argument("--config", required=True, help="YAML scenario document")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--replicates", type=int, help="override replicate count")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="worker process count")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="brwire", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("audit", "simulate", "analyze", "rates", "exact-rate"):
        _add_common(sub.add_parser(name))
    lam = sub.add_parser("lambda0")
    lam.add_argument("--a-star", required=True,
                     help="supremal moment order a* (number or 'inf')")
    lam.add_argument("--epsilon", type=float, required=True)
    lam.add_argument("--p", type=float, required=True)
    lam.add_argument("--delta", type=float, required=True)
    return ap


def _plan(args, analyses=None) -> ExperimentPlan:
    plan = plan_from_config(
        args.config, seed=args.seed, replicates=args.replicates,
        out=args.out, workers=args.workers,
    )
    if analyses is not None:
        plan = ExperimentPlan(
            scenario=plan.scenario, analyses=analyses,
            output_dir=plan.output_dir, workers=plan.workers,
            config_bytes=plan.config_bytes,
        )
    return plan


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, InvalidParameter) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NotStabilized as e:
        print(f"gate failure: {e}", file=sys.stderr)
        return EXIT_GATE
    except BrwireError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "lambda0":
        a_star = float(args.a_star)
        res = theory.lambda_zero(a_star, args.epsilon, args.p, args.delta)
        print(res.to_json())
        return EXIT_OK

    if args.command == "audit":
        plan = _plan(args)
        report = _audit_from_params(plan.scenario, plan.analyses.get("audit", {}))
        print(report.to_json())
        if report.has_heuristics:
            print("warning: some entries are MC heuristics, not proofs of finiteness",
                  file=sys.stderr)
        return EXIT_OK if report.closed_form_passed else EXIT_GATE

    if args.command == "simulate":
        plan = _plan(args)
        table = engine.simulate_many(plan.scenario, workers=plan.workers)
        buf = io.StringIO()
        engine.write_records_csv(table, buf)
        _atomic_write(plan.output_dir / "records.csv", buf.getvalue())
        print(f"wrote {plan.output_dir / 'records.csv'} "
              f"({len(table)} rows, {len(table.aborted)} aborted)")
        if len(table.aborted) > ABORT_RATE_LIMIT * plan.scenario.replicates:
            return EXIT_CAP
        return EXIT_OK

    if args.command == "analyze":
        plan = _plan(args)
        manifest = run(plan)
        print(manifest.to_json())
        if manifest.abort_count > ABORT_RATE_LIMIT * plan.scenario.replicates:
            return EXIT_CAP
        return EXIT_OK

    if args.command == "rates":
        manifest = run(_plan(args, analyses={"clt": {}, "uniform-be": {}}))
        print(manifest.to_json())
        return EXIT_OK

    if args.command == "exact-rate":
        plan = _plan(args)
        manifest = run(_plan(args, analyses={"exact-rate": plan.analyses.get("exact-rate", {})}))
        print(manifest.to_json())
        return EXIT_OK

    raise ConfigError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    raise SystemExit(main())
