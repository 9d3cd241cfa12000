import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from hermflow import balanced, flows, identities, io
from hermflow.config import (
    DEFAULT_SEEDS,
    DEFAULT_TOL,
    LOG_LEVEL,
    OUTPUT_DIR,
    FlowConfig,
    RunManifest,
    load_flow_config,
)
from hermflow.errors import ConfigError
from hermflow.geometry import HolVolForm

logger = logging.getLogger(__name__)

EXIT_CODES = {"success": 0, "failure": 1, "config_error": 2, "halted": 3}

REPORTS_FILE = "identities.jsonl"
DIAGNOSTICS_FILE = "diagnostics.csv"
SNAPSHOT_FILE = "final.snapshot"
MANIFEST_FILE = "manifest.json"


def configure_logging(level: str = LOG_LEVEL) -> None:
    logging.basicConfig(level=level.upper(), format="%(name)s:%(levelname)s:%(message)s", force=True)


def _padded(values: np.ndarray, length: int) -> np.ndarray:
    """Interior-snapshot series placed against the full row index."""
    column = np.full(length, np.nan)
    column[1: 1 + len(values)] = values
    return column


# commands -----------------------------------------------------------------


def cmd_identities(dims=(2, 3, 4), seeds: int = DEFAULT_SEEDS, tol: float = DEFAULT_TOL, only: str | None = None, out: str = OUTPUT_DIR) -> dict:
    try:
        reports = identities.run_suite(dims, seeds, tol, only)
    except ConfigError as e:
        return io.standard_result("config_error", str(e))
    failed = [r for r in reports if not r.passed]
    manifest = RunManifest(
        command="identities",
        output_dir=str(out),
        config={"dims": list(dims), "seeds": seeds, "tol": tol, "only": only},
        files=[REPORTS_FILE, MANIFEST_FILE],
        summary={"checks": len(reports), "failed": len(failed)},
    )
    with io.staged_output(out) as stage:
        io.write_reports(stage / REPORTS_FILE, reports)
        io.write_manifest(stage / MANIFEST_FILE, manifest)
    path = str(Path(out) / REPORTS_FILE)
    if failed:
        worst = max(failed, key=lambda r: r.residual_rel)
        return io.standard_result(
            "failure",
            f"{len(failed)} of {len(reports)} checks failed; worst {worst.id} (m={worst.m}, seed={worst.seed}) rel {worst.residual_rel:.3e}",
            path,
        )
    return io.standard_result("success", f"{len(reports)} checks passed", path)


def _monitor_columns(config: FlowConfig, result: flows.RunResult, omega: HolVolForm, summary: dict) -> dict[str, np.ndarray]:
    extra = {}
    n_rows = len(result.rows)
    if "anomaly" in config.monitors:
        extra["anomalyRes"] = _padded(flows.anomaly_equivalence_residual(result, omega), n_rows)
    if "torsion_flow" in config.monitors:
        extra["torsionFlowRes"] = _padded(flows.torsion_flow_residual(result), n_rows)
        summary["torsion_rate_scale"] = flows.torsion_rate_scale(result)
    if "tsq" in config.monitors:
        monitor = flows.tsq_evolution_residual(result)
        extra["tsqRes"] = _padded(monitor.residuals, n_rows)
        logger.info("|T|² bound: fitted C=%.4g, holds=%s", monitor.fitted_C, monitor.inequality_holds)
        summary["tsq_fitted_C"] = monitor.fitted_C
        summary["tsq_inequality_holds"] = monitor.inequality_holds
    if "tau_sq" in config.monitors:
        extra["tauSqRes"] = _padded(flows.tau_sq_evolution_residual(result), n_rows)
    if "tau" in config.monitors:
        extra["tauFlowRes"] = _padded(flows.tau_flow_residual(result), n_rows)
    if "singularity" in config.monitors and config.m >= 3:
        extra["singDictRes"] = np.asarray([flows.singularity_dictionary_residual(f, omega) for f in result.snapshots])
    return extra


def acceptance_failures(config: FlowConfig, result: flows.RunResult, extra: dict[str, np.ndarray], summary: dict) -> list[str]:
    """Every configured tolerance the run exceeds, as readable messages."""
    tol = config.tolerances
    failures = []
    if "anomalyRes" in extra and np.nanmax(extra["anomalyRes"]) > tol.anomaly:
        failures.append(f"anomalyRes {np.nanmax(extra['anomalyRes']):.3e} > {tol.anomaly:.1e}")
    if "torsionFlowRes" in extra:
        bound = tol.torsion_flow * summary["torsion_rate_scale"]
        if np.nanmax(extra["torsionFlowRes"]) > bound:
            failures.append(f"torsionFlowRes {np.nanmax(extra['torsionFlowRes']):.3e} > {bound:.3e}")
    if config.initial.kind == "kahler_potential" and not flows.kahler_condition_kept(result, tol.kahler_growth):
        failures.append(f"kahlerRes grew more than {tol.kahler_growth:g}x")
    if config.initial.kind in ("balanced", "balanced_file") and not flows.balanced_condition_kept(result, tol.balanced_growth):
        failures.append(f"balancedRes grew by more than {tol.balanced_growth:.1e}")
    if summary["stationary_kahler_ricci_flat"] is False:
        failures.append(f"plateau at row {summary['plateau_start']} is not Kähler Ricci-flat within {tol.flat:.1e}")
    return failures


def cmd_flow(config_path: str, out: str = OUTPUT_DIR) -> dict:
    try:
        config = load_flow_config(config_path)
        result = flows.run(config)
    except ValueError as e:
        # ConfigError, DegenerateRescalingError, AmplitudeError and bad initial data
        return io.standard_result("config_error", str(e))

    omega = HolVolForm(config.omega_c)
    summary = {"plateau_start": flows.plateau_reached(result.rows, config.plateau_window, config.plateau_tol)}
    summary["stationary_kahler_ricci_flat"] = flows.stationarity_holds(
        result.rows, config.plateau_window, config.plateau_tol, config.tolerances.flat
    )
    extra, failures = {}, []
    if result.completed and len(result.snapshots) >= 3:
        extra = _monitor_columns(config, result, omega, summary)
    if result.completed:
        failures = acceptance_failures(config, result, extra, summary)
    summary["failures"] = failures

    manifest = RunManifest(
        command="flow",
        config_path=str(config_path),
        output_dir=str(out),
        seed=config.seed,
        config=config.model_dump(),
        halt_reason=result.halt_reason,
        files=[DIAGNOSTICS_FILE, SNAPSHOT_FILE, MANIFEST_FILE],
        summary=summary,
    )
    with io.staged_output(out) as stage:
        io.write_diagnostics(stage / DIAGNOSTICS_FILE, result.rows, extra)
        io.write_snapshot(stage / SNAPSHOT_FILE, result.final, config.omega_c)
        io.write_manifest(stage / MANIFEST_FILE, manifest)
    csv_path = str(Path(out) / DIAGNOSTICS_FILE)

    if not result.completed:
        return io.standard_result("halted", f"run halted at t={result.final.time:.6g}: {result.halt_reason}", csv_path)
    if failures:
        return io.standard_result("failure", "; ".join(failures), csv_path)
    return io.standard_result("success", f"{len(result.rows)} diagnostics rows, t_end={result.final.time:.6g}", csv_path)


def cmd_make_balanced(m: int, n: int, eps: float, seed: int, out: str = OUTPUT_DIR, reduction: str | None = "x1,x2") -> dict:
    omega = HolVolForm()
    try:
        _, field = balanced.make_balanced(m, n, eps, seed, omega, reduction)
    except ValueError as e:
        return io.standard_result("config_error", str(e))
    name = f"balanced_m{m}_n{n}_seed{seed}.snapshot"
    residual = balanced.balanced_residual(field, omega)
    manifest = RunManifest(
        command="make-balanced",
        output_dir=str(out),
        seed=seed,
        config={"m": m, "n": n, "eps": eps, "reduction": reduction},
        files=[name, MANIFEST_FILE],
        summary={"balanced_residual": residual},
    )
    with io.staged_output(out) as stage:
        io.write_snapshot(stage / name, field, omega.c)
        io.write_manifest(stage / MANIFEST_FILE, manifest)
    return io.standard_result("success", f"balanced metric written (dΨ residual {residual:.3e})", str(Path(out) / name))


# argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hermflow", description="Numerical lab for Hermitian metric flows on complex tori")
    parser.add_argument("--log-level", default=LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("identities", help="run the identity catalogue over random inputs")
    p.add_argument("--dims", default="2,3,4", help="comma separated dimensions")
    p.add_argument("--seeds", type=int, default=DEFAULT_SEEDS)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--only", default=None, help="single catalogue key")
    p.add_argument("--out", default=OUTPUT_DIR)

    p = sub.add_parser("flow", help="integrate a flow from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=OUTPUT_DIR)

    p = sub.add_parser("make-balanced", help="write a conformally balanced initial metric")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--eps", type=float, default=0.002)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reduction", default="x1,x2")
    p.add_argument("--out", default=OUTPUT_DIR)
    return parser


def main_function(argv=None) -> dict:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        if e.code == 0:
            raise
        return io.standard_result("config_error", "invalid command line")
    configure_logging(args.log_level)

    if args.command == "identities":
        try:
            dims = tuple(int(d) for d in args.dims.split(",") if d.strip())
        except ValueError:
            return io.standard_result("config_error", f"bad --dims {args.dims!r}")
        return cmd_identities(dims, args.seeds, args.tol, args.only, args.out)
    if args.command == "flow":
        return cmd_flow(args.config, args.out)
    return cmd_make_balanced(args.m, args.n, args.eps, args.seed, args.out, args.reduction)


def main(argv=None) -> int:
    result = main_function(argv)
    status = result["status"]
    if status == "success":
        print(f"✅ {result['message']}")
    elif status == "failure":
        print(f"❌ {result['message']}")
    elif status == "halted":
        print(f"⚠️ {result['message']}")
    else:
        print(f"❌ configuration error: {result['message']}")
    if result.get("file"):
        print(f"📂 {result['file']}")
    return EXIT_CODES[status]


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
