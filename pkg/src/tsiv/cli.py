"""Command-line interface: estimation, summary-data mode, simulations, LATE worlds.

Every command writes its reports into ``--out`` together with a run manifest
(command echo, content digests of inputs and outputs, seed, version,
timestamp), so identical inputs and seeds reproduce identical output digests.

Exit codes: 0 success, 2 schema or configuration violation, 3 degenerate
moments / no compliers, 4 irreparable LD matrix, 5 monotonicity violation
under --strict.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .estimators import WeightSpec, estimate, tscov_estimate, wald_ratio
from .exceptions import (
    DegenerateMoments,
    LdNotPsd,
    MonotonicityViolated,
    NoCompliers,
    NonPositiveDefiniteWeight,
    OmegaSingular,
)
from .late import (
    cross_sample_wald,
    identification_audit,
    late_two_sample,
    load_world_csv,
)
from .moments import TwoSampleData, compute_moments, covariance_homogeneity_test
from .simulation import SimulationConfig, conspiracy_study, run_study
from .summary_data import SummaryInputs, conservative_estimate

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_DEGENERATE = 3
EXIT_LD = 4
EXIT_MONOTONICITY = 5


class SchemaError(Exception):
    """Input file or flag combination violates the documented schema."""


# ---------------------------------------------------------------------------
# file helpers


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _write_manifest(out_dir, command, inputs, outputs, seed=None) -> str:
    manifest = {
        "command": list(command),
        "seed": seed,
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "inputs": {os.path.basename(p): _sha256(p) for p in inputs},
        "outputs": {os.path.basename(p): _sha256(p) for p in outputs},
    }
    path = os.path.join(out_dir, "manifest.json")
    _write_json(path, manifest)
    return path


def _ensure_out(out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _read_rows(path: str) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise SchemaError(f"{path}: {exc.strerror}") from exc
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [name.strip() for name in rows[0]]
    if len(set(header)) != len(header):
        raise SchemaError(f"{path}: duplicate column names in header")
    return header, rows[1:]


def _parse_float(path: str, column: str, lineno: int, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise SchemaError(
            f"{path}: non-numeric value {raw!r} in column '{column}', line {lineno}"
        ) from exc
    if not np.isfinite(value):
        raise SchemaError(f"{path}: non-finite value in column '{column}', line {lineno}")
    return value


def _read_individual_csv(path: str, response: str):
    """Columns: instrument columns plus the response column ('x' or 'y')."""
    header, rows = _read_rows(path)
    if response not in header:
        raise SchemaError(f"{path}: missing required column '{response}'")
    names = [name for name in header if name != response]
    if not names:
        raise SchemaError(f"{path}: no instrument columns besides '{response}'")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    data = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(f"{path}: line {i + 2} has {len(row)} fields, expected {len(header)}")
        for j, raw in enumerate(row):
            data[i, j] = _parse_float(path, header[j], i + 2, raw)
    resp_col = header.index(response)
    instr_cols = [j for j in range(len(header)) if j != resp_col]
    return names, data[:, instr_cols], data[:, resp_col]


def _read_matrix_csv(path: str, expected_ids: list[str]):
    """Square matrix CSV whose header must repeat the coefficient ids in order."""
    header, rows = _read_rows(path)
    if header != expected_ids:
        raise SchemaError(
            f"{path}: header {header} does not match the coefficient ids {expected_ids}"
        )
    q = len(expected_ids)
    if len(rows) != q:
        raise SchemaError(f"{path}: expected {q} rows, found {len(rows)}")
    mat = np.empty((q, q))
    for i, row in enumerate(rows):
        if len(row) != q:
            raise SchemaError(f"{path}: line {i + 2} has {len(row)} fields, expected {q}")
        for j, raw in enumerate(row):
            mat[i, j] = _parse_float(path, header[j], i + 2, raw)
    return mat


def _read_coefficients(path: str):
    """Columns: id, coef, se, sd_z."""
    header, rows = _read_rows(path)
    required = ["id", "coef", "se", "sd_z"]
    if header != required:
        raise SchemaError(f"{path}: header must be {required}, got {header}")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    ids, coefs, ses, sds = [], [], [], []
    for i, row in enumerate(rows):
        if len(row) != 4:
            raise SchemaError(f"{path}: line {i + 2} has {len(row)} fields, expected 4")
        ids.append(row[0].strip())
        coefs.append(_parse_float(path, "coef", i + 2, row[1]))
        ses.append(_parse_float(path, "se", i + 2, row[2]))
        sds.append(_parse_float(path, "sd_z", i + 2, row[3]))
    return ids, np.array(coefs), np.array(ses), np.array(sds)


def _parse_weight_flag(raw: str) -> WeightSpec:
    if raw in ("tstsls", "optimal", "identity"):
        return WeightSpec(raw)
    if raw.startswith("custom="):
        path = raw.split("=", 1)[1]
        try:
            matrix = np.loadtxt(path, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            raise SchemaError(f"cannot read custom weight matrix from {path}: {exc}") from exc
        return WeightSpec.custom(matrix)
    raise SchemaError(
        f"invalid --weight value {raw!r}; expected tstsls|optimal|identity|custom=FILE"
    )


def _print_estimate(label: str, payload: dict, flags: list[str]) -> None:
    note = f"  [{'; '.join(flags)}]" if flags else ""
    se = payload.get("se_sandwich", payload.get("se"))
    lo, hi = payload["ci_95"]
    print(
        f"{label:<10s} beta = {payload['beta_hat']:+.6g}  se = {se:.6g}  "
        f"95% CI [{lo:.6g}, {hi:.6g}]{note}"
    )


# ---------------------------------------------------------------------------
# estimate


def _cmd_estimate(args) -> int:
    names_a, z_a, x_a = _read_individual_csv(args.sample_a, "x")
    names_b, z_b, y_b = _read_individual_csv(args.sample_b, "y")
    if set(names_a) != set(names_b):
        only_a = sorted(set(names_a) - set(names_b))
        only_b = sorted(set(names_b) - set(names_a))
        raise SchemaError(
            "instrument columns differ between samples"
            + (f"; only in sample a: {only_a}" if only_a else "")
            + (f"; only in sample b: {only_b}" if only_b else "")
        )
    order = [names_b.index(name) for name in names_a]
    z_b = z_b[:, order]

    try:
        data = TwoSampleData(z_a=z_a, x_a=x_a, z_b=z_b, y_b=y_b)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    center = not args.no_center
    moments = compute_moments(data, center=center)

    requested = _parse_weight_flag(args.weight)
    estimates: dict[str, dict] = {}
    warnings_list: list[str] = []
    specs = {"tstsls": WeightSpec.tstsls(), "optimal": WeightSpec.optimal()}
    if requested.kind in ("identity", "custom"):
        specs[requested.kind] = requested
    for name, spec in specs.items():
        try:
            estimates[name] = estimate(moments, spec).to_dict()
        except (OmegaSingular, NonPositiveDefiniteWeight) as exc:
            estimates[name] = {"error": str(exc)}
            warnings_list.append(f"{name}: {exc}")
    if moments.q == 1:
        estimates["wald"] = wald_ratio(moments).to_dict()
        estimates["tscov"] = {
            "beta_hat": tscov_estimate(moments),
            "note": "inconsistent under heterogeneous instrument covariance",
        }

    hetero = covariance_homogeneity_test(moments)
    heterogeneous = hetero.p_value < args.alpha
    if heterogeneous:
        warnings_list.append(
            f"instrument covariance differs between samples "
            f"(Box-style test p = {hetero.p_value:.3g} < {args.alpha:g}); heterogeneity "
            "is supported, reported for information"
        )
    any_weak = any(
        isinstance(e, dict) and e.get("weak_instrument") for e in estimates.values()
    )
    if any_weak:
        warnings_list.append("first-stage F below 10: estimates biased towards zero")

    report = {
        "n_a": data.n_a,
        "n_b": data.n_b,
        "q": data.q,
        "centered": center,
        "instruments": names_a,
        "estimates": estimates,
        "diagnostics": {
            "covariance_equality": {
                "statistic": hetero.statistic,
                "df": hetero.df,
                "p_value": hetero.p_value,
                "heterogeneous_at_alpha": heterogeneous,
                "alpha": args.alpha,
            },
        },
        "warnings": warnings_list,
    }
    out_dir = _ensure_out(args.out)
    report_path = os.path.join(out_dir, "estimate_report.json")
    _write_json(report_path, report)

    for name in ("tstsls", "optimal", "wald"):
        payload = estimates.get(name)
        if payload and "error" not in payload:
            flags = []
            if payload.get("weak_instrument"):
                flags.append("weak instrument")
            if heterogeneous:
                flags.append("heterogeneous S_zz")
            _print_estimate(name, payload, flags)
    if "tscov" in estimates:
        print(
            f"{'tscov':<10s} beta = {estimates['tscov']['beta_hat']:+.6g}  "
            f"[no SE reported; {estimates['tscov']['note']}]"
        )
    for line in warnings_list:
        print(f"note: {line}")

    _write_manifest(
        out_dir, args.command_echo, [args.sample_a, args.sample_b], [report_path], None
    )
    print(f"report written to {report_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# summary


def _cmd_summary(args) -> int:
    ids_g, gamma, se_gamma, sd_z_a = _read_coefficients(args.gamma)
    ids_G, Gamma, se_Gamma, sd_z_b = _read_coefficients(args.Gamma)
    if ids_g != ids_G:
        raise SchemaError(
            f"coefficient ids disagree between {args.gamma} and {args.Gamma}"
        )
    q = len(ids_g)
    inputs_list = [args.gamma, args.Gamma]
    out_dir = _ensure_out(args.out)
    report_path = os.path.join(out_dir, "summary_report.json")

    have_ld = args.ld_a is not None and args.ld_b is not None
    if q > 1 and not have_ld:
        raise SchemaError(
            "with more than one instrument the correlation (LD) matrices of both "
            "samples are required to compute any two-sample estimate; pass --ld-a and --ld-b"
        )

    if not have_ld:
        # Single instrument: plain coefficient ratio with a first-order SE.
        beta = float(Gamma[0] / gamma[0])
        se = float(np.sqrt(se_Gamma[0] ** 2 + beta**2 * se_gamma[0] ** 2) / abs(gamma[0]))
        payload = {
            "beta_hat": beta,
            "se": se,
            "ci_95": [beta - 1.96 * se, beta + 1.96 * se],
            "method": "wald_ratio",
            "note": "first-order SE from the marginal coefficient SEs",
        }
        report = {"q": 1, "ids": ids_g, "estimates": {"wald": payload}}
        _write_json(report_path, report)
        _print_estimate("wald", payload, ["summary data"])
        _write_manifest(out_dir, args.command_echo, inputs_list, [report_path], None)
        print(f"report written to {report_path}")
        return EXIT_OK

    if args.n_a is None or args.n_b is None:
        raise SchemaError("summary mode with LD matrices needs --n-a and --n-b")
    if args.var_x_total is None or args.var_y_total is None:
        raise SchemaError(
            "summary mode needs --var-x-total and --var-y-total for the conservative bound"
        )
    ld_a = _read_matrix_csv(args.ld_a, ids_g)
    ld_b = _read_matrix_csv(args.ld_b, ids_g)
    inputs_list += [args.ld_a, args.ld_b]
    try:
        summary_inputs = SummaryInputs(
            gamma_marginal=gamma,
            Gamma_marginal=Gamma,
            se_gamma=se_gamma,
            se_Gamma=se_Gamma,
            ld_a=ld_a,
            ld_b=ld_b,
            scale_z_a=sd_z_a,
            scale_z_b=sd_z_b,
            var_x_total_a=args.var_x_total,
            var_y_total_b=args.var_y_total,
            n_a=args.n_a,
            n_b=args.n_b,
        )
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc

    estimates = {}
    warnings_list = []
    requested = _parse_weight_flag(args.weight)
    specs = {"tstsls": WeightSpec.tstsls(), "optimal": WeightSpec.optimal()}
    if requested.kind in ("identity", "custom"):
        specs[requested.kind] = requested
    for name, spec in specs.items():
        try:
            estimates[name] = conservative_estimate(summary_inputs, spec).to_dict()
        except (OmegaSingular, NonPositiveDefiniteWeight) as exc:
            estimates[name] = {"error": str(exc)}
            warnings_list.append(f"{name}: {exc}")
    report = {
        "q": q,
        "ids": ids_g,
        "n_a": args.n_a,
        "n_b": args.n_b,
        "conservative": True,
        "note": "all standard errors are conservative upper bounds built from "
        "marginal variances",
        "estimates": estimates,
        "warnings": warnings_list,
    }
    _write_json(report_path, report)
    for name, payload in estimates.items():
        if "error" not in payload:
            _print_estimate(name, payload, ["conservative SE"])
    for line in warnings_list:
        print(f"note: {line}")
    _write_manifest(out_dir, args.command_echo, inputs_list, [report_path], None)
    print(f"report written to {report_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def _config_from_mapping(payload: dict) -> SimulationConfig:
    allowed = {
        "scenario", "beta", "rho_a", "rho_b", "n_a", "n_b", "q",
        "replications", "seed", "beta_a",
    }
    unknown = set(payload) - allowed
    if unknown:
        raise SchemaError(f"unknown simulation config keys: {sorted(unknown)}")
    if "scenario" not in payload:
        raise SchemaError("each simulation config needs a 'scenario' key")
    try:
        return SimulationConfig(**payload)
    except (TypeError, ValueError) as exc:
        raise SchemaError(str(exc)) from exc


def _write_simulation_csv(path: str, reports) -> None:
    from .simulation import SimulationReport

    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=SimulationReport.CSV_COLUMNS)
        writer.writeheader()
        for report in reports:
            for row in report.to_rows():
                writer.writerow(row)


def _write_estimates_dump(path: str, reports) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["scenario", "estimator", "replicate", "beta_hat", "se"])
        for report in reports:
            for name, columns in report.estimates.items():
                beta, se = columns["beta_hat"], columns["se"]
                for rep in range(beta.shape[0]):
                    writer.writerow(
                        [report.config.scenario, name, rep,
                         repr(float(beta[rep])), repr(float(se[rep]))]
                    )


def _cmd_simulate(args) -> int:
    out_dir = _ensure_out(args.out)
    inputs_list = []
    replications = 10000 if args.full else args.replications
    if args.config is not None:
        try:
            with open(args.config) as handle:
                payload = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(payload, dict) or "scenarios" not in payload:
            raise SchemaError(f"{args.config}: expected an object with a 'scenarios' list")
        configs = [_config_from_mapping(entry) for entry in payload["scenarios"]]
        inputs_list.append(args.config)
    else:
        if args.scenario is None:
            raise SchemaError("pass --scenario or --config")
        try:
            configs = [
                SimulationConfig(
                    scenario=args.scenario,
                    beta=args.beta,
                    rho_a=args.rho_a,
                    rho_b=args.rho_b,
                    n_a=args.n_a,
                    n_b=args.n_b,
                    q=1 if args.scenario == "conspiracy" else args.q,
                    replications=replications,
                    seed=args.seed,
                    beta_a=args.beta_a,
                )
            ]
        except ValueError as exc:
            raise SchemaError(str(exc)) from exc

    outputs = []
    if len(configs) == 1 and configs[0].scenario == "conspiracy":
        report = conspiracy_study(configs[0], caliper=args.caliper)
        report_path = os.path.join(out_dir, "conspiracy_report.json")
        _write_json(report_path, {"config": configs[0].to_dict(), "report": report.to_dict()})
        outputs.append(report_path)
        print(
            f"projection slopes: sample a {report.gamma_a[0]:+.4f}, "
            f"sample b {report.gamma_b[0]:+.4f}; after matching "
            f"{report.matched_gamma_a[0]:+.4f} vs {report.matched_gamma_b[0]:+.4f} "
            f"(kept {report.kept_fraction:.1%})"
        )
    else:
        if any(cfg.scenario == "conspiracy" for cfg in configs):
            raise SchemaError("the conspiracy scenario cannot be mixed into a study grid")
        if replications < 2:
            raise SchemaError("a study needs at least 2 replications")
        reports = []
        for cfg in configs:
            try:
                reports.append(run_study(cfg, keep_estimates=args.dump_estimates))
            except ValueError as exc:
                raise SchemaError(str(exc)) from exc
        csv_path = os.path.join(out_dir, "simulation_results.csv")
        _write_simulation_csv(csv_path, reports)
        json_path = os.path.join(out_dir, "simulation_results.json")
        _write_json(json_path, {"results": [r.to_dict() for r in reports]})
        outputs.extend([csv_path, json_path])
        if args.dump_estimates:
            dump_path = os.path.join(out_dir, "estimates_dump.csv")
            _write_estimates_dump(dump_path, reports)
            outputs.append(dump_path)
        for report in reports:
            for summary in report.estimators:
                cfg = report.config
                print(
                    f"{cfg.scenario} {summary.estimator:<8s} beta={cfg.beta:g} "
                    f"rho=({cfg.rho_a:+.1f},{cfg.rho_b:+.1f}) n=({cfg.n_a},{cfg.n_b}) "
                    f"bias={summary.bias:+.4f} sd={summary.sd:.4f} "
                    f"se={summary.mean_se:.4f} cover={summary.coverage:.3f}"
                )
    _write_manifest(out_dir, args.command_echo, inputs_list, outputs, args.seed)
    print(f"outputs written to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# late


def _cmd_late(args) -> int:
    try:
        loaded_a = load_world_csv(args.world_a)
        loaded_b = load_world_csv(args.world_b)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    world_a, world_b = loaded_a.world, loaded_b.world
    monotone = world_a.shares.monotone and world_b.shares.monotone
    if not monotone and args.strict:
        raise MonotonicityViolated(
            "defiers present in at least one world (strict mode)"
        )

    audit_a = identification_audit(world_a)
    audit_b = identification_audit(world_b)
    report = {
        "sample_a": {
            "label": loaded_a.sample,
            "flipped": loaded_a.flipped,
            "shares": vars(world_a.shares).copy(),
            "audit": audit_a.to_dict(),
        },
        "sample_b": {
            "label": loaded_b.sample,
            "flipped": loaded_b.flipped,
            "shares": vars(world_b.shares).copy(),
            "audit": audit_b.to_dict(),
        },
        "monotone": monotone,
    }
    if monotone:
        result = late_two_sample(world_a, world_b)
        report["late_b"] = result.late_b
        report["scaling"] = result.scaling
        report["estimand"] = result.estimand
        print(
            f"late_b = {result.late_b:+.6g}, complier-share scaling = {result.scaling:.6g}, "
            f"cross-sample estimand = {result.estimand:+.6g}"
        )
    else:
        raw = cross_sample_wald(world_a, world_b)
        report["cross_sample_wald"] = raw
        report["note"] = (
            "defiers present: the complier-mean decomposition does not apply; "
            "reporting the raw cross-sample ratio only"
        )
        print(f"cross-sample ratio = {raw:+.6g} (defiers present; not a complier effect)")
    print(f"identification: sample a {audit_a.note}; sample b {audit_b.note}")

    out_dir = _ensure_out(args.out)
    report_path = os.path.join(out_dir, "late_report.json")
    _write_json(report_path, report)
    _write_manifest(
        out_dir, args.command_echo, [args.world_a, args.world_b], [report_path], None
    )
    print(f"report written to {report_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsiv",
        description="Two-sample instrumental-variable estimation for heterogeneous samples",
    )
    parser.add_argument("--version", action="version", version=f"tsiv {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_est = sub.add_parser("estimate", help="estimate from two individual-level CSV files")
    p_est.add_argument("sample_a", help="CSV with instrument columns and column 'x'")
    p_est.add_argument("sample_b", help="CSV with instrument columns and column 'y'")
    p_est.add_argument("--weight", default="tstsls",
                       help="tstsls|optimal|identity|custom=FILE (extra estimate to report)")
    p_est.add_argument("--no-center", action="store_true",
                       help="skip per-sample centering (data must be mean zero)")
    p_est.add_argument("--alpha", type=float, default=0.01,
                       help="level of the informational covariance-equality test")
    p_est.add_argument("--out", default="tsiv_out", help="output directory")
    p_est.set_defaults(func=_cmd_estimate)

    p_sum = sub.add_parser("summary", help="estimate from marginal summary statistics")
    p_sum.add_argument("gamma", help="CSV id,coef,se,sd_z for the exposure sample")
    p_sum.add_argument("Gamma", help="CSV id,coef,se,sd_z for the outcome sample")
    p_sum.add_argument("--ld-a", help="q x q instrument correlation CSV, sample a")
    p_sum.add_argument("--ld-b", help="q x q instrument correlation CSV, sample b")
    p_sum.add_argument("--n-a", type=int, help="sample a size")
    p_sum.add_argument("--n-b", type=int, help="sample b size")
    p_sum.add_argument("--var-x-total", type=float,
                       help="marginal exposure variance (conservative bound)")
    p_sum.add_argument("--var-y-total", type=float,
                       help="marginal outcome variance (conservative bound)")
    p_sum.add_argument("--weight", default="tstsls",
                       help="tstsls|optimal|identity|custom=FILE (extra estimate to report)")
    p_sum.add_argument("--out", default="tsiv_out", help="output directory")
    p_sum.set_defaults(func=_cmd_summary)

    p_sim = sub.add_parser("simulate", help="run replication studies or the projection demo")
    p_sim.add_argument("--scenario", choices=["sim1", "sim2", "sim3", "conspiracy"])
    p_sim.add_argument("--beta", type=float, default=1.0)
    p_sim.add_argument("--beta-a", type=float, default=None,
                       help="outcome slope of the hidden sample-a equation")
    p_sim.add_argument("--rho-a", type=float, default=0.5)
    p_sim.add_argument("--rho-b", type=float, default=0.5)
    p_sim.add_argument("--n-a", type=int, default=1000)
    p_sim.add_argument("--n-b", type=int, default=1000)
    p_sim.add_argument("--q", type=int, default=10)
    p_sim.add_argument("-R", "--replications", type=int, default=2000)
    p_sim.add_argument("--full", action="store_true", help="use 10000 replications")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--config", help="JSON file with a 'scenarios' list of config objects")
    p_sim.add_argument("--caliper", type=float, default=0.1,
                       help="matching caliper for the conspiracy scenario")
    p_sim.add_argument("--dump-estimates", action="store_true",
                       help="also write per-replication estimates for plotting")
    p_sim.add_argument("--out", default="tsiv_out", help="output directory")
    p_sim.set_defaults(func=_cmd_simulate)

    p_late = sub.add_parser("late", help="analyze a pair of discrete instrument worlds")
    p_late.add_argument("world_a", help="world CSV (sample,z,class,p,mean_g0,mean_g1)")
    p_late.add_argument("world_b", help="world CSV (sample,z,class,p,mean_g0,mean_g1)")
    p_late.add_argument("--strict", action="store_true",
                        help="fail when defiers are present")
    p_late.add_argument("--out", default="tsiv_out", help="output directory")
    p_late.set_defaults(func=_cmd_late)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.command_echo = ["tsiv"] + argv
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (DegenerateMoments, NoCompliers) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except LdNotPsd as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LD
    except MonotonicityViolated as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MONOTONICITY


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
