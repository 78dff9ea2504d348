"""Command-line entry point.

Three subcommands: `verify` runs the operator/c-number identity suite,
`simulate` executes the two-station protocol and persists the trial
records, `report` turns record files into the Bell report.  Exit codes:
0 success, 1 verification or analysis failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    AnalysisError,
    build_bell_report,
    save_reports,
)
from .fock import (
    ModeId,
    TruncationError,
    build_space,
    count_rate_identity_deviation,
    guarded_indices,
    mode_operator,
)
from .lhv import PhaseSpacePoint, cnumber_count_rate
from .protocol import (
    ConfigError,
    ExperimentConfig,
    RecordsError,
    SettingKind,
    Station,
    config_from_dict,
    config_to_dict,
    encode_setting,
    load_records,
    run_experiment,
    save_records,
)

_IDENTITY_TOL = 1e-12
_CNUMBER_POINTS = 100_000


@dataclass
class RunManifest:
    """What a command produced: artifact paths all exist on success."""

    command: str
    config: dict | None
    artifacts: list[str]
    tool_version: str
    duration_seconds: float


def parse_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    """Config from an optional JSON file plus flag overrides (flags win).
    Unknown keys are rejected; validation errors name the field."""
    data: dict = {}
    if path is not None:
        try:
            raw = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return config_from_dict(data)


def _check_count_rate_identity(truncation: int, scale: float) -> tuple[bool, str]:
    space = build_space([ModeId.A_H, ModeId.V_A], truncation)
    dev = count_rate_identity_deviation(
        space, ModeId.A_H, ModeId.V_A, guard=True, count_rate_scale=scale
    )
    note =f"max deviation {dev:.3e}"
    if truncation == 2:
        note += " (guarded subspace is vacuum only at this truncation)"
    return dev < _IDENTITY_TOL, note


def _check_commutators(truncation: int) -> tuple[bool, str]:
    space = build_space([ModeId.A_H, ModeId.V_A], truncation)
    guard = guarded_indices(space)
    worst = 0.0
    for mode in space.modes:
        a = mode_operator(space, mode, "annihilate").matrix
        comm = a @ a.conj().T - a.conj().T @ a
        delta = np.abs(comm - np.eye(space.dimension))[np.ix_(guard, guard)]
        worst = max(worst, float(delta.max()))
    return worst < _IDENTITY_TOL, f"max deviation {worst:.3e}"


def _check_quadrature_square_sum(truncation: int) -> tuple[bool, str]:
    space = build_space([ModeId.A_H, ModeId.V_A], truncation)
    guard = guarded_indices(space)
    eye = np.eye(space.dimension)
    worst = 0.0
    for mode in space.modes:
        x1 = mode_operator(space, mode, "x1").matrix
        x2 = mode_operator(space, mode, "x2").matrix
        n = mode_operator(space, mode, "number").matrix
        delta = np.abs(x1 @ x1 + x2 @ x2 - 4.0 * n - 2.0 * eye)
        worst = max(worst, float(delta[np.ix_(guard, guard)].max()))
    return worst < _IDENTITY_TOL, f"max deviation {worst:.3e}"


def _check_cnumber_identity(n_points: int = _CNUMBER_POINTS) -> tuple[bool, str]:
    gen = np.random.Generator(np.random.Philox(key=np.array([2718281828, 99], dtype=np.uint64)))
    coords = 2.0 * gen.standard_normal((n_points, 4))
    quad_form = (
        coords[:, 0] ** 2 + coords[:, 1] ** 2 - coords[:, 2] ** 2 - coords[:, 3] ** 2
    ) / 4.0
    amp_form = (
        np.abs((coords[:, 0] + 1j * coords[:, 1]) / 2.0) ** 2
        - np.abs((coords[:, 2] + 1j * coords[:, 3]) / 2.0) ** 2
    )
    worst = float(np.abs(quad_form - amp_form).max())
    # spot-route a slice through the point API, which re-checks both forms
    modes = (ModeId.A_H, ModeId.V_A)
    for row in coords[:1000]:
        point = PhaseSpacePoint(modes=modes, coords=np.array(row))
        cnumber_count_rate(point, ModeId.A_H, ModeId.V_A)
    return worst < _IDENTITY_TOL, f"{n_points} points, max |difference| {worst:.3e}"


def cmd_verify(args: argparse.Namespace) -> int:
    scale = 4.0 if args.inject_fault == "drop-quarter" else 1.0
    truncations = args.truncation or [4, 8, 10]
    checks: list[tuple[str, bool, str]] = []
    for n in truncations:
        ok, note = _check_count_rate_identity(n, scale)
        checks.append((f"count-rate identity (N={n})", ok, note))
    n_top = max(truncations)
    ok, note = _check_commutators(n_top)
    checks.append((f"ladder commutator (N={n_top})", ok, note))
    ok, note = _check_quadrature_square_sum(n_top)
    checks.append((f"quadrature-square sum (N={n_top})", ok, note))
    ok, note = _check_cnumber_identity()
    checks.append(("c-number count-rate forms", ok, note))

    width = max(len(name) for name, _, _ in checks)
    failed = 0
    for name, ok, note in checks:
        status = "PASS" if ok else "FAIL"
        print(f"  {name:<{width}}  {status}  {note}")
        failed += 0 if ok else 1
    print("all checks passed" if failed == 0 else f"{failed} check(s) FAILED")
    return 0 if failed == 0 else 1


def _print_simulate_summary(records) -> None:
    print(f"[{records.model.value}] {len(records)} trials")
    for station in Station:
        table = records.schedule.tables(station)
        counts = np.bincount(records.schedule.codes(station), minlength=len(table))
        for setting, count in zip(table, counts):
            print(f"  {encode_setting(setting):<42} {count}")
    for station in Station:
        mask = records.mask(station, SettingKind.AUX_INTENSITY)
        nonzero = int(np.count_nonzero(records.outcomes(station)[mask]))
        print(
            f"  aux outcomes nonzero at {station.value}: {nonzero} of {int(mask.sum())}"
        )


def _write_manifest(manifest: RunManifest, path: Path) -> None:
    path.write_text(json.dumps(asdict(manifest), sort_keys=True, indent=2) + "\n")


def cmd_simulate(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    config = parse_config(
        args.config,
        {"trials": args.trials, "seed": args.seed, "model": args.model},
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_experiment(config)
    artifacts: list[str] = []
    for model, records in results.items():
        csv_path, sidecar = save_records(records, out_dir / f"records_{model.value}.csv")
        artifacts.extend([str(csv_path), str(sidecar)])
        _print_simulate_summary(records)
    manifest = RunManifest(
        command="simulate",
        config=config_to_dict(config),
        artifacts=artifacts,
        tool_version=__version__,
        duration_seconds=time.perf_counter() - start,
    )
    manifest_path = out_dir / "manifest_simulate.json"
    _write_manifest(manifest, manifest_path)
    print(f"wrote {len(artifacts)} artifact(s) and {manifest_path}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    record_sets = [load_records(p) for p in args.records]
    reference = config_to_dict(record_sets[0].config)
    for rs in record_sets[1:]:
        if config_to_dict(rs.config) != reference:
            raise RecordsError(
                "incompatible configs: the record files come from different runs"
            )
    seen = set()
    for rs in record_sets:
        if rs.model in seen:
            raise RecordsError(f"duplicate records for model {rs.model.value}")
        seen.add(rs.model)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = [build_bell_report(rs) for rs in record_sets]
    json_path, csv_path = save_reports(
        reports, out_dir / "report.json", out_dir / "correlations.csv"
    )
    for report in reports:
        oracle = "n/a" if report.s_oracle is None else f"{report.s_oracle:.6f}"
        print(
            f"[{report.model.value}] S = {report.s_value:.4f} +/- "
            f"{report.s_stderr:.4f}   (oracle S = {oracle})"
        )
        vac = report.vacuum
        if vac.all_zero is not None:
            print(
                f"  vacuum check: {sum(vac.n_aux.values())} aux trials, "
                f"all outcomes zero: {vac.all_zero}"
            )
        else:
            print(
                f"  vacuum check: {sum(vac.n_aux.values())} aux trials, "
                f"mean intensity {vac.mean_intensity:.4f}, "
                f"{vac.n_nonzero} nonzero outcomes"
            )
        if report.positivity is not None:
            for station, p in report.positivity.per_station.items():
                print(
                    f"  positivity {station}: mean R {p.mean:.5f} +/- "
                    f"{p.mean_stderr:.5f}, negative fraction "
                    f"{p.negative_fraction:.4f}, min {p.min_value:.4f}"
                )
    manifest = RunManifest(
        command="report",
        config=reference,
        artifacts=[str(json_path), str(csv_path)],
        tool_version=__version__,
        duration_seconds=time.perf_counter() - start,
    )
    manifest_path = out_dir / "manifest_report.json"
    _write_manifest(manifest, manifest_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvbell",
        description=(
            "Simulation laboratory for Bell-type tests from continuous-variable "
            "quadrature measurements"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser(
        "verify", help="run the operator and c-number identity suite"
    )
    p_verify.add_argument(
        "--truncation",
        type=int,
        nargs="*",
        default=None,
        help="Fock truncations to check (default: 4 8 10)",
    )
    p_verify.add_argument(
        "--inject-fault", choices=["drop-quarter"], default=None, help=argparse.SUPPRESS
    )
    p_verify.set_defaults(func=cmd_verify)

    p_sim = sub.add_parser("simulate", help="run the two-station protocol")
    p_sim.add_argument("--config", default=None, help="JSON config file")
    p_sim.add_argument("--trials", type=int, default=None, help="override trial count")
    p_sim.add_argument("--seed", type=int, default=None, help="override master seed")
    p_sim.add_argument(
        "--model", choices=["quantum", "lhv", "both"], default=None, help="override model"
    )
    p_sim.add_argument("--out", default=".", help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_rep = sub.add_parser("report", help="analyze record files into a Bell report")
    p_rep.add_argument("records", nargs="+", help="records CSV file(s)")
    p_rep.add_argument("--out", default=".", help="output directory")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return 2
    except (RecordsError, AnalysisError, TruncationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
